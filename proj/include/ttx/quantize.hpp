#pragma once

#include <string>
#include <vector>

#include "ttx/model.hpp"
#include "ttx/quant.hpp"

namespace ttx {

// INT8-quantizes every linear map: attention projections, FFN linears, conv
// pointwise maps, input projection, LSTM input/recurrent matrices, embedding,
// joint output. Softmax, norms, activations, the depthwise kernel, the relpos
// table and all biases stay float.
inline ModelWeights quantize_model(const ModelWeights& model) {
  if (model.is_quantized()) throw ArgError("quantize_model: model is already quantized");
  ModelWeights q = model;
  q.input_proj.quantize();
  for (LayerWeights& w : q.layers) {
    w.w_q.quantize();
    w.w_k.quantize();
    w.w_v.quantize();
    w.w_attn_out.quantize();
    w.ffn1_a.quantize();
    w.ffn1_b.quantize();
    if (q.cfg.arch == Arch::conformer) {
      w.ffn2_a.quantize();
      w.ffn2_b.quantize();
      w.conv_point1.quantize();
      w.conv_point2.quantize();
    }
  }
  for (LstmLayerWeights& l : q.predictor.lstm) {
    l.w_x.quantize();
    l.w_h.quantize();
  }
  q.predictor.embedding.quantize();
  q.joint_out.quantize();
  return q;
}

struct QuantErrorEntry {
  std::string name;
  float max_abs_err = 0.0f;   // |dequantized - float| max
  float max_abs_ref = 0.0f;   // max |float|
  float rel() const { return max_abs_ref > 0.0f ? max_abs_err / max_abs_ref : 0.0f; }
};

inline QuantErrorEntry quant_error(const std::string& name, const Tensor& w) {
  QuantErrorEntry e;
  e.name = name;
  const Tensor dq = dequantize(quantize_tensor(w));
  for (int64_t i = 0; i < w.numel(); ++i) {
    e.max_abs_err = std::max(e.max_abs_err,
                             std::fabs(dq.data[static_cast<size_t>(i)] -
                                       w.data[static_cast<size_t>(i)]));
    e.max_abs_ref = std::max(e.max_abs_ref, std::fabs(w.data[static_cast<size_t>(i)]));
  }
  return e;
}

// Round-trip quantization error of every tensor quantize_model would touch.
inline std::vector<QuantErrorEntry> quantize_error_report(const ModelWeights& model) {
  std::vector<QuantErrorEntry> out;
  out.push_back(quant_error("input_proj", model.input_proj.w));
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const LayerWeights& w = model.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back(quant_error(p + "w_q", w.w_q.w));
    out.push_back(quant_error(p + "w_k", w.w_k.w));
    out.push_back(quant_error(p + "w_v", w.w_v.w));
    out.push_back(quant_error(p + "w_attn_out", w.w_attn_out.w));
    out.push_back(quant_error(p + "ffn1_a", w.ffn1_a.w));
    out.push_back(quant_error(p + "ffn1_b", w.ffn1_b.w));
    if (model.cfg.arch == Arch::conformer) {
      out.push_back(quant_error(p + "ffn2_a", w.ffn2_a.w));
      out.push_back(quant_error(p + "ffn2_b", w.ffn2_b.w));
      out.push_back(quant_error(p + "conv_point1", w.conv_point1.w));
      out.push_back(quant_error(p + "conv_point2", w.conv_point2.w));
    }
  }
  for (size_t l = 0; l < model.predictor.lstm.size(); ++l) {
    const std::string p = "predictor.lstm." + std::to_string(l) + ".";
    out.push_back(quant_error(p + "w_x", model.predictor.lstm[l].w_x.w));
    out.push_back(quant_error(p + "w_h", model.predictor.lstm[l].w_h.w));
  }
  out.push_back(quant_error("predictor.embedding", model.predictor.embedding.w));
  out.push_back(quant_error("joint_out", model.joint_out.w));
  return out;
}

}  // namespace ttx
