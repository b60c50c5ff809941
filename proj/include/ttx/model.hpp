#pragma once

#include <string>
#include <vector>

#include "ttx/linear.hpp"
#include "ttx/mask.hpp"

namespace ttx {

enum class Arch { transformer, conformer };

inline std::string arch_name(Arch a) {
  return a == Arch::transformer ? "transformer" : "conformer";
}
inline Arch arch_from_name(const std::string& s) {
  if (s == "transformer") return Arch::transformer;
  if (s == "conformer") return Arch::conformer;
  throw ArgError("unknown arch: " + s);
}

struct EncoderConfig {
  int num_layers = 4;
  int d_model = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int input_dim = 8;
  Arch arch = Arch::transformer;
  int conv_kernel = 3;
  // Extent of the relative-position table: offsets tau - t are clipped to
  // [-relpos_left, relpos_right] before lookup.
  int relpos_left = 16;
  int relpos_right = 8;

  int d_head() const { return d_model / num_heads; }
  int relpos_entries() const { return relpos_left + relpos_right + 1; }

  void validate() const {
    if (num_layers < 0) throw ArgError("EncoderConfig: num_layers must be >= 0");
    if (d_model < 1 || num_heads < 1 || d_model % num_heads != 0)
      throw ArgError("EncoderConfig: num_heads must divide d_model");
    if (ffn_dim < 1 || input_dim < 1) throw ArgError("EncoderConfig: bad dims");
    if (conv_kernel < 1) throw ArgError("EncoderConfig: conv_kernel must be >= 1");
    if (relpos_left < 0 || relpos_right < 0) throw ArgError("EncoderConfig: bad relpos extent");
  }
};

struct LayerWeights {
  Linear w_q, w_k, w_v, w_attn_out;  // d_model x d_model, no bias
  Tensor relpos;                     // [relpos_entries, num_heads, d_head]

  LayerNormParams norm_attn;
  LayerNormParams norm_ffn1;
  Linear ffn1_a, ffn1_b;  // d_model -> ffn_dim -> d_model, with biases

  // Conformer only.
  LayerNormParams norm_ffn2;
  Linear ffn2_a, ffn2_b;
  LayerNormParams norm_conv;
  Linear conv_point1;     // d_model -> 2*d_model
  Tensor conv_depthwise;  // [kernel, d_model], stays float
  Linear conv_point2;     // d_model -> d_model
  LayerNormParams norm_conv_inner;
  LayerNormParams norm_block_final;
};

struct LstmLayerWeights {
  Linear w_x;  // [4*hidden, in], bias holds the full 4*hidden gate bias
  Linear w_h;  // [4*hidden, hidden], no bias
};

struct PredictorWeights {
  Embedding embedding;  // [(V+1), d_pred]
  std::vector<LstmLayerWeights> lstm;
  int hidden = 0;  // d_pred, must equal encoder d_model
};

struct ModelWeights {
  EncoderConfig cfg;
  int vocab_size = 0;  // V; joint emits V+1 symbols, index 0 = blank

  Linear input_proj;  // input_dim -> d_model, with bias
  std::vector<LayerWeights> layers;
  LayerNormParams final_norm;

  PredictorWeights predictor;
  Linear joint_out;  // [(V+1), d_model], with bias

  bool is_quantized() const { return input_proj.quantized; }
  int num_classes() const { return vocab_size + 1; }
};

}  // namespace ttx
