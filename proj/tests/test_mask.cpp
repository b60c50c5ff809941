#include <algorithm>

#include <gtest/gtest.h>

#include "ttx/mask.hpp"

using ttx::MaskMatrix;
using ttx::MaskSpec;

namespace {

// Independent statement of the three masking rules, evaluated literally.
// 1) frames in the same chunk see each other; 2) a frame never sees a later
// chunk; 3) a frame sees an earlier chunk if the distance is within the
// history window.
bool rule_predicate(int i, int j, int chunk, int history /* <0 = unbounded */) {
  const int ci = i / chunk, cj = j / chunk;
  if (ci == cj) return true;
  if (cj > ci) return false;
  if (history < 0) return true;
  return i - j <= history;
}

}  // namespace

TEST(BuildMask, ThreeChunkThreeHistoryRow) {
  // C=3, H=3: the 10th frame (index 9) sees exactly frames 7..12 (indices
  // 6..11): its own chunk plus three history frames.
  const MaskSpec spec{3, 3};
  const MaskMatrix m = ttx::build_mask(spec, 12);
  for (int j = 0; j < 12; ++j) EXPECT_EQ(m.at(9, j), j >= 6 && j <= 11) << "col " << j;
}

TEST(BuildMask, CausalLowerTriangular) {
  // C=1 with unbounded history is the plain causal mask.
  const MaskSpec spec{1, ttx::kUnboundedHistory};
  const MaskMatrix m = ttx::build_mask(spec, 9);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) EXPECT_EQ(m.at(i, j), j <= i);
}

TEST(BuildMask, MatchesRulePredicateExhaustively) {
  for (int t = 1; t <= 20; ++t)
    for (int c = 1; c <= 5; ++c)
      for (int h = -1; h <= 6; ++h) {  // -1 = unbounded
        const MaskMatrix m = ttx::build_mask(MaskSpec{c, h}, t);
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < t; ++j)
            ASSERT_EQ(m.at(i, j), rule_predicate(i, j, c, h))
                << "T=" << t << " C=" << c << " H=" << h << " (" << i << "," << j << ")";
      }
}

TEST(BuildMask, BadFrameCountThrows) {
  EXPECT_THROW(ttx::build_mask(MaskSpec{2, 3}, 0), ttx::ArgError);
  EXPECT_THROW(ttx::build_mask(MaskSpec{0, 3}, 4), ttx::ArgError);
}

TEST(BuildMask, StrictHistoryToggle) {
  MaskSpec spec{3, 3};
  spec.strict_history = true;
  const MaskMatrix m = ttx::build_mask(spec, 12);
  // Strict comparison loses the farthest history frame: index 9 reaches 7..11.
  EXPECT_FALSE(m.at(9, 6));
  EXPECT_TRUE(m.at(9, 7));
}

TEST(BuildMask, DiagonalAlwaysSet) {
  for (int c = 1; c <= 4; ++c)
    for (int h : {-1, 0, 2}) {
      const MaskMatrix m = ttx::build_mask(MaskSpec{c, h}, 13);
      for (int i = 0; i < 13; ++i) EXPECT_TRUE(m.at(i, i));
    }
}

TEST(BuildMask, MonotoneInHistory) {
  for (int c = 1; c <= 4; ++c)
    for (int h = 0; h < 8; ++h) {
      const MaskMatrix a = ttx::build_mask(MaskSpec{c, h}, 15);
      const MaskMatrix b = ttx::build_mask(MaskSpec{c, h + 1}, 15);
      for (int i = 0; i < 15; ++i)
        for (int j = 0; j < 15; ++j)
          if (a.at(i, j)) EXPECT_TRUE(b.at(i, j));
    }
}

TEST(ReceptionField, GrowsThreeFramesPerLayer) {
  // C=3, H=3, frame index 9: left edge moves 3 frames per layer (6, 3, 0),
  // right edge stays at the chunk end (11).
  const MaskSpec spec{3, 3};
  const int expected_left[] = {6, 3, 0};
  for (int l = 1; l <= 3; ++l) {
    const ttx::ReceptionField rf = ttx::reception_field(spec, l, 9, 12);
    EXPECT_EQ(rf.left, expected_left[l - 1]) << "layers " << l;
    EXPECT_EQ(rf.right, 11) << "layers " << l;
  }
}

TEST(ReceptionField, ZeroHistoryStaysInChunk) {
  for (int c = 1; c <= 4; ++c) {
    const MaskSpec spec{c, 0};
    const int t = 14;
    for (int frame = 0; frame < t; ++frame)
      for (int l = 1; l <= 4; ++l) {
        const ttx::ReceptionField rf = ttx::reception_field(spec, l, frame, t);
        EXPECT_EQ(rf.left, spec.chunk_start(frame));
        EXPECT_EQ(rf.right, std::min(t - 1, spec.chunk_start(frame) + c - 1));
      }
  }
}

TEST(ReceptionField, RightEdgeNeverCrossesChunkAndLeftIsMonotone) {
  for (int c = 1; c <= 4; ++c)
    for (int h = 0; h <= 5; ++h) {
      const MaskSpec spec{c, h};
      const int t = 16;
      for (int frame = 0; frame < t; ++frame) {
        int prev_left = frame;
        for (int l = 1; l <= 4; ++l) {
          const ttx::ReceptionField rf = ttx::reception_field(spec, l, frame, t);
          EXPECT_LE(rf.right, std::min(t - 1, spec.chunk_start(frame) + c - 1));
          EXPECT_LE(rf.left, prev_left);
          // One layer reaches back at most H frames plus the rest of the
          // chunk those frames land in.
          EXPECT_LE(prev_left - rf.left, h + c - 1);
          prev_left = rf.left;
        }
      }
    }
}

TEST(ReceptionField, OutOfRangeThrows) {
  EXPECT_THROW(ttx::reception_field(MaskSpec{2, 2}, 1, 8, 8), ttx::ArgError);
  EXPECT_THROW(ttx::reception_field(MaskSpec{2, 2}, 0, 1, 8), ttx::ArgError);
}

TEST(AvgLookahead, ChunkOfOne) { EXPECT_DOUBLE_EQ(ttx::avg_lookahead(MaskSpec{1, 0}), 0.0); }

TEST(AvgLookahead, EnumeratedMean) {
  // Enumerate within-chunk positions: a chunk of C has lookaheads C-1..0.
  for (int c = 1; c <= 10; ++c) {
    double sum = 0.0;
    for (int p = 0; p < c; ++p) sum += c - 1 - p;
    EXPECT_DOUBLE_EQ(ttx::avg_lookahead(MaskSpec{c, 0}), sum / c);
  }
}

TEST(AvgLookahead, Chunk24) {
  // C=24 at 30 ms/frame: exact mean is 11.5 frames = 345 ms; the rounded
  // "C/2" shorthand gives 360 ms.
  const double frames = ttx::avg_lookahead(MaskSpec{24, 0});
  EXPECT_DOUBLE_EQ(frames, 11.5);
  EXPECT_DOUBLE_EQ(frames * 30.0, 345.0);
}
