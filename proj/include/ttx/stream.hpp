#pragma once

#include <cstring>
#include <random>
#include <vector>

#include "ttx/encoder.hpp"
#include "ttx/model.hpp"

namespace ttx {

// Per-layer cache of post-projection keys and values. Rows are d_model wide;
// start_frame is the absolute index of the first cached row.
struct LayerKvCache {
  std::vector<float> k;
  std::vector<float> v;
  int64_t start_frame = 0;
  int64_t frames = 0;

  void evict_before(int64_t frame, int64_t d) {
    const int64_t drop = std::min(frames, frame - start_frame);
    if (drop <= 0) return;
    k.erase(k.begin(), k.begin() + drop * d);
    v.erase(v.begin(), v.begin() + drop * d);
    start_frame += drop;
    frames -= drop;
  }

  void append(const Tensor& knew, const Tensor& vnew) {
    k.insert(k.end(), knew.data.begin(), knew.data.end());
    v.insert(v.end(), vnew.data.begin(), vnew.data.end());
    frames += knew.rows();
  }
};

// Incremental chunk-by-chunk encoder state. Single-owner: one step at a time.
class StreamState {
 public:
  StreamState(const ModelWeights& model, const MaskSpec& spec)
      : model_(&model), spec_(spec) {
    spec_.validate();
    caches_.resize(model.layers.size());
    if (model.cfg.arch == Arch::conformer) {
      conv_history_.assign(
          model.layers.size(),
          Tensor({static_cast<int64_t>(model.cfg.conv_kernel) - 1, model.cfg.d_model}));
    }
  }

  const MaskSpec& spec() const { return spec_; }
  int64_t frames_consumed() const { return frames_consumed_; }
  int64_t cached_frames(size_t layer) const { return caches_[layer].frames; }

  // Encodes the next block of frames. A block normally covers one chunk
  // (1 <= n <= C, short only at utterance end); whole-chunk multiples are
  // also accepted so several chunks can be batched into one matrix pass —
  // the mask is driven by absolute frame indices, so batching never changes
  // the attended context (outputs agree to float rounding).
  Tensor step_chunk(const Tensor& block) {
    const int64_t n = block.rows();
    const int c = spec_.chunk_size;
    if (n < 1) throw ArgError("step_chunk: empty block");
    if (block.cols() != model_->cfg.input_dim)
      throw ShapeError("step_chunk: feature dimension mismatch");
    if (saw_partial_)
      throw SequencingError("step_chunk: input after a short (final) chunk");
    if (n > c && n % c != 0)
      throw ArgError("step_chunk: block must be one chunk or a whole number of chunks");
    const int64_t s = frames_consumed_;
    if ((s + n) % c != 0) saw_partial_ = true;

    Tensor x = model_->input_proj.apply(block);
    for (size_t l = 0; l < model_->layers.size(); ++l) {
      x = model_->cfg.arch == Arch::transformer
              ? step_transformer_layer(x, l, s)
              : step_conformer_block(x, l, s);
    }
    layer_norm_inplace(x, model_->final_norm.gain, model_->final_norm.bias);
    frames_consumed_ += n;
    return x;
  }

  // Test hook: flips one cached key so equivalence checks can prove they
  // would catch a broken cache.
  void debug_corrupt_cache() {
    for (auto& cache : caches_) {
      if (!cache.k.empty()) {
        cache.k[0] += 1.0f;
        return;
      }
    }
    corrupt_next_ = true;
  }

 private:
  // Attention of the block over [cache || block] with per-row masking by
  // absolute frame index. Appends the block's keys/values to the cache.
  Tensor attend_with_cache(const Tensor& xn, size_t layer, int64_t abs_start) {
    const LayerWeights& w = model_->layers[layer];
    const EncoderConfig& cfg = model_->cfg;
    const int64_t n = xn.rows();
    LayerKvCache& cache = caches_[layer];
    if (!spec_.unbounded())
      cache.evict_before(spec_.chunk_start(static_cast<int>(abs_start)) - spec_.history,
                         cfg.d_model);
    const Tensor q = w.w_q.apply(xn);
    cache.append(w.w_k.apply(xn), w.w_v.apply(xn));
    if (corrupt_next_ && !cache.k.empty()) {
      cache.k[0] += 1.0f;
      corrupt_next_ = false;
    }
    const int64_t nk = cache.frames;
    std::vector<uint8_t> bitmap(static_cast<size_t>(n * nk), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int ia = static_cast<int>(abs_start + i);
      uint8_t* row = bitmap.data() + i * nk;
      for (int64_t j = 0; j < nk; ++j)
        row[j] = spec_.allows(ia, static_cast<int>(cache.start_frame + j)) ? 1 : 0;
    }
    const Tensor concat = attend_concat(q, cache.k.data(), cache.v.data(), nk, bitmap,
                                        abs_start, cache.start_frame, w.relpos, cfg);
    return w.w_attn_out.apply(concat);
  }

  Tensor step_transformer_layer(const Tensor& x, size_t layer, int64_t abs_start) {
    const LayerWeights& w = model_->layers[layer];
    Tensor h = x;
    add_inplace(h, attend_with_cache(layer_norm(x, w.norm_attn), layer, abs_start));
    add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn1), w.ffn1_a, w.ffn1_b));
    return h;
  }

  Tensor step_conformer_block(const Tensor& x, size_t layer, int64_t abs_start) {
    const LayerWeights& w = model_->layers[layer];
    Tensor h = x;
    add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn1), w.ffn1_a, w.ffn1_b), 0.5f);
    add_inplace(h, attend_with_cache(layer_norm(h, w.norm_attn), layer, abs_start));
    add_inplace(h, conv_with_history(layer_norm(h, w.norm_conv), layer));
    add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn2), w.ffn2_a, w.ffn2_b), 0.5f);
    return layer_norm(h, w.norm_block_final);
  }

  // Conv module using the stored depthwise input history (the post-GLU
  // activations of the preceding K-1 frames).
  Tensor conv_with_history(const Tensor& xn, size_t layer) {
    const LayerWeights& w = model_->layers[layer];
    Tensor& hist = conv_history_[layer];
    const int64_t hrows = hist.rows();
    Tensor c = activation(Act::glu, w.conv_point1.apply(xn));
    Tensor out = causal_depthwise_conv(c, w.conv_depthwise, hist);
    // Slide the history window over the block's depthwise inputs.
    const int64_t n = c.rows();
    if (hrows > 0) {
      Tensor nh({hrows, c.cols()});
      for (int64_t r = 0; r < hrows; ++r) {
        const int64_t src = n - hrows + r;
        const float* from = src >= 0 ? c.row_ptr(src) : hist.row_ptr(src + hrows);
        std::memcpy(nh.row_ptr(r), from, sizeof(float) * static_cast<size_t>(c.cols()));
      }
      hist = std::move(nh);
    }
    layer_norm_inplace(out, w.norm_conv_inner.gain, w.norm_conv_inner.bias);
    out = activation(Act::swish, out);
    return w.conv_point2.apply(out);
  }

  const ModelWeights* model_;
  MaskSpec spec_;
  std::vector<LayerKvCache> caches_;
  std::vector<Tensor> conv_history_;
  int64_t frames_consumed_ = 0;
  bool saw_partial_ = false;
  bool corrupt_next_ = false;
};

inline StreamState open_stream(const ModelWeights& model, const MaskSpec& spec) {
  return StreamState(model, spec);
}

// Deterministic pseudo-features for equivalence checks.
inline Tensor synthetic_features(int64_t frames, int64_t dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor x({frames, dim});
  for (float& v : x.data) v = dist(rng);
  return x;
}

// Runs the offline and the chunked streaming path on the same pseudo-features
// and returns the max elementwise absolute difference.
inline float verify_equivalence(const ModelWeights& model, const MaskSpec& spec, int frames,
                                bool corrupt_cache = false) {
  if (frames < 1) throw ArgError("verify_equivalence: frames must be >= 1");
  const Tensor features = synthetic_features(frames, model.cfg.input_dim, 0x7477eedull);
  const Tensor offline = encode_offline(features, model, spec);
  StreamState stream = open_stream(model, spec);
  if (corrupt_cache) stream.debug_corrupt_cache();
  float max_diff = 0.0f;
  for (int s = 0; s < frames; s += spec.chunk_size) {
    const int c = std::min(spec.chunk_size, frames - s);
    Tensor block({c, model.cfg.input_dim});
    std::memcpy(block.data.data(), features.row_ptr(s),
                sizeof(float) * static_cast<size_t>(c) * features.cols());
    const Tensor out = stream.step_chunk(block);
    for (int64_t i = 0; i < out.numel(); ++i) {
      const float d = std::fabs(out.data[static_cast<size_t>(i)] -
                                offline.data[static_cast<size_t>(s * out.cols() + i)]);
      max_diff = std::max(max_diff, d);
    }
  }
  return max_diff;
}

}  // namespace ttx
