#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ttx/errors.hpp"

namespace ttx {

// Chunk-based attention mask: a chunk size C and a history window H.
// H == kUnboundedHistory means infinite left context.
inline constexpr int kUnboundedHistory = -1;

struct MaskSpec {
  int chunk_size = 1;
  int history = kUnboundedHistory;
  // When true, the history rule compares i - j < H instead of i - j <= H.
  // Default is inclusive: with H=3 a frame reaches exactly 3 frames into the
  // previous chunks per layer, which is what the reception-field geometry
  // of the masking scheme produces.
  bool strict_history = false;

  bool unbounded() const { return history < 0; }

  int chunk_of(int frame) const { return frame / chunk_size; }
  int chunk_start(int frame) const { return chunk_of(frame) * chunk_size; }

  // True when the history rule lets frame i attend to the older frame j
  // across a chunk boundary.
  bool history_allows(int i, int j) const {
    if (unbounded()) return true;
    return strict_history ? (i - j < history) : (i - j <= history);
  }

  // M(i,j) for 0-based frame indices.
  bool allows(int i, int j) const {
    const int ci = chunk_of(i), cj = chunk_of(j);
    if (ci == cj) return true;       // same chunk: full mutual visibility
    if (cj > ci) return false;       // never attend into a later chunk
    return history_allows(i, j);
  }

  void validate() const {
    if (chunk_size < 1) throw ArgError("MaskSpec: chunk_size must be >= 1");
  }
};

// Dense boolean attention mask, shared by every encoder layer.
struct MaskMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> bits;  // row-major

  MaskMatrix() = default;
  MaskMatrix(int r, int c) : rows(r), cols(c), bits(static_cast<size_t>(r) * c, 0) {}

  bool at(int i, int j) const { return bits[static_cast<size_t>(i) * cols + j] != 0; }
  void set(int i, int j, bool v) { bits[static_cast<size_t>(i) * cols + j] = v ? 1 : 0; }
};

inline MaskMatrix build_mask(const MaskSpec& spec, int frames) {
  spec.validate();
  if (frames < 1) throw ArgError("build_mask: frame count must be >= 1");
  MaskMatrix m(frames, frames);
  for (int i = 0; i < frames; ++i)
    for (int j = 0; j < frames; ++j) m.set(i, j, spec.allows(i, j));
  return m;
}

// One step of the boolean closure: out(j) = OR_k reach(k) && M(k,j).
inline std::vector<uint8_t> propagate_reach(const std::vector<uint8_t>& reach,
                                            const MaskMatrix& m) {
  std::vector<uint8_t> out(static_cast<size_t>(m.cols), 0);
  for (int k = 0; k < m.rows; ++k) {
    if (!reach[k]) continue;
    for (int j = 0; j < m.cols; ++j)
      if (m.at(k, j)) out[j] = 1;
  }
  return out;
}

// Which input frames can influence the output at `frame` after `layers`
// stacked attention applications of the same mask.
inline std::vector<uint8_t> reachable_inputs(const MaskSpec& spec, int layers, int frame,
                                             int frames) {
  if (layers < 1) throw ArgError("reachable_inputs: layers must be >= 1");
  if (frame < 0 || frame >= frames) throw ArgError("reachable_inputs: frame out of range");
  MaskMatrix m = build_mask(spec, frames);
  std::vector<uint8_t> reach(static_cast<size_t>(frames), 0);
  for (int j = 0; j < frames; ++j) reach[j] = m.at(frame, j) ? 1 : 0;
  for (int l = 1; l < layers; ++l) reach = propagate_reach(reach, m);
  return reach;
}

struct ReceptionField {
  int frame = 0;
  int layers = 0;
  int left = 0;   // earliest reachable input frame (0-based)
  int right = 0;  // latest reachable input frame (0-based)
};

inline ReceptionField reception_field(const MaskSpec& spec, int layers, int frame,
                                      int frames) {
  const auto reach = reachable_inputs(spec, layers, frame, frames);
  ReceptionField rf{frame, layers, frames, -1};
  for (int j = 0; j < frames; ++j) {
    if (!reach[j]) continue;
    rf.left = std::min(rf.left, j);
    rf.right = std::max(rf.right, j);
  }
  return rf;
}

// Exact mean per-frame lookahead of a full chunk: position p in a chunk of C
// sees C-1-p future frames, so the mean is (C-1)/2. The usual shorthand
// "half the chunk size" is the large-C approximation of this value.
inline double avg_lookahead(const MaskSpec& spec) {
  return (spec.chunk_size - 1) / 2.0;
}

}  // namespace ttx
