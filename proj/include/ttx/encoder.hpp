#pragma once

#include <cmath>
#include <vector>

#include "ttx/model.hpp"
#include "ttx/tensor.hpp"

namespace ttx {

// Multi-head attention of a block of queries over a contiguous key/value
// context, with the clipped relative-position term added to the keys:
//   score(t, tau) = beta * q_t . (k_tau + p[clip(tau - t)])
// `bitmap` is nq x nk row-major; a zero entry excludes that key from the row's
// softmax. q_abs0 / k_abs0 are the absolute frame indices of the first query
// and key rows, so cached context keeps its true temporal offset. Returns the
// concatenated head outputs (before the output projection).
//
// Both the offline encoder and the streaming cache path funnel through this
// routine, so the two produce identical arithmetic for identical contexts.
inline Tensor attend_concat(const Tensor& q, const float* kdata, const float* vdata,
                            int64_t nk, const std::vector<uint8_t>& bitmap,
                            int64_t q_abs0, int64_t k_abs0, const Tensor& relpos,
                            const EncoderConfig& cfg) {
  const int64_t nq = q.rows();
  const int dh = cfg.d_head();
  const int heads = cfg.num_heads;
  const int entries = cfg.relpos_entries();
  const float beta = 1.0f / std::sqrt(static_cast<float>(dh));
  if (relpos.numel() != static_cast<int64_t>(entries) * heads * dh)
    throw ShapeError("attend_concat: relpos table shape mismatch");

  Tensor out({nq, cfg.d_model});
  std::vector<float> qp(static_cast<size_t>(entries));
  std::vector<float> weights(static_cast<size_t>(nk));
  for (int h = 0; h < heads; ++h) {
    const int64_t off = static_cast<int64_t>(h) * dh;
    for (int64_t i = 0; i < nq; ++i) {
      const float* qi = q.row_ptr(i) + off;
      // Per-entry dot of the query with the relpos table: q.(k+p) = q.k + q.p.
      for (int e = 0; e < entries; ++e) {
        const float* pe = relpos.data.data() + (static_cast<int64_t>(e) * heads + h) * dh;
        float acc = 0.0f;
        for (int d = 0; d < dh; ++d) acc += qi[d] * pe[d];
        qp[static_cast<size_t>(e)] = acc;
      }
      const uint8_t* row = bitmap.data() + i * nk;
      const int64_t qa = q_abs0 + i;
      float mx = -std::numeric_limits<float>::infinity();
      for (int64_t j = 0; j < nk; ++j) {
        if (!row[j]) continue;
        const float* kj = kdata + j * cfg.d_model + off;
        float acc = 0.0f;
        for (int d = 0; d < dh; ++d) acc += qi[d] * kj[d];
        int64_t o = (k_abs0 + j) - qa;
        o = std::max<int64_t>(-cfg.relpos_left, std::min<int64_t>(cfg.relpos_right, o));
        const float s = beta * (acc + qp[static_cast<size_t>(o + cfg.relpos_left)]);
        weights[static_cast<size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      if (mx == -std::numeric_limits<float>::infinity())
        throw MaskError("attend_concat: fully masked attention row");
      float denom = 0.0f;
      for (int64_t j = 0; j < nk; ++j) {
        if (!row[j]) continue;
        const float e = std::exp(weights[static_cast<size_t>(j)] - mx);
        weights[static_cast<size_t>(j)] = e;
        denom += e;
      }
      const float inv = 1.0f / denom;
      float* oi = out.row_ptr(i) + off;
      for (int64_t j = 0; j < nk; ++j) {
        if (!row[j]) continue;
        const float a = weights[static_cast<size_t>(j)] * inv;
        const float* vj = vdata + j * cfg.d_model + off;
        for (int d = 0; d < dh; ++d) oi[d] += a * vj[d];
      }
    }
  }
  return out;
}

// Full-sequence relative-position MHA under an explicit mask matrix.
inline Tensor mha_relpos(const Tensor& x, const LayerWeights& w, const MaskMatrix& m,
                         const EncoderConfig& cfg) {
  const int64_t t = x.rows();
  if (m.rows != t || m.cols != t) throw ShapeError("mha_relpos: mask shape mismatch");
  const Tensor q = w.w_q.apply(x);
  const Tensor k = w.w_k.apply(x);
  const Tensor v = w.w_v.apply(x);
  const Tensor concat =
      attend_concat(q, k.data.data(), v.data.data(), t, m.bits, 0, 0, w.relpos, cfg);
  return w.w_attn_out.apply(concat);
}

// y_t[c] = sum_k kernel[k][c] * x_{t-K+1+k}[c], reading frames before the
// block start from `history` ((K-1) x d, zeros at stream start).
inline Tensor causal_depthwise_conv(const Tensor& x, const Tensor& kernel,
                                    const Tensor& history) {
  const int64_t t = x.rows(), d = x.cols();
  const int64_t k = kernel.shape.at(0);
  if (kernel.cols() != d) throw ShapeError("causal_depthwise_conv: channel mismatch");
  if (history.numel() != (k - 1) * d)
    throw ShapeError("causal_depthwise_conv: history must be (K-1) x d");
  Tensor y({t, d});
  for (int64_t i = 0; i < t; ++i) {
    float* yr = y.row_ptr(i);
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t src = i - (k - 1) + kk;
      const float* xr = src >= 0 ? x.row_ptr(src) : history.row_ptr(src + (k - 1));
      const float* kr = kernel.row_ptr(kk);
      for (int64_t c = 0; c < d; ++c) yr[c] += kr[c] * xr[c];
    }
  }
  return y;
}

inline void add_inplace(Tensor& a, const Tensor& b, float scale = 1.0f) {
  if (a.numel() != b.numel()) throw ShapeError("add_inplace: size mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

inline Tensor ffn_forward(const Tensor& x, const Linear& a, const Linear& b) {
  return b.apply(activation(Act::relu, a.apply(x)));
}

// Conformer convolution module body (after its pre-norm): pointwise -> GLU ->
// causal depthwise -> norm -> swish -> pointwise.
inline Tensor conv_module(const Tensor& xn, const LayerWeights& w, const Tensor& history) {
  Tensor c = activation(Act::glu, w.conv_point1.apply(xn));
  c = causal_depthwise_conv(c, w.conv_depthwise, history);
  layer_norm_inplace(c, w.norm_conv_inner.gain, w.norm_conv_inner.bias);
  c = activation(Act::swish, c);
  return w.conv_point2.apply(c);
}

// Pre-norm transformer layer: x + MHA(LN(x)), then + FFN(LN(.)).
inline Tensor transformer_layer(const Tensor& x, const LayerWeights& w, const MaskMatrix& m,
                                const EncoderConfig& cfg) {
  Tensor h = x;
  add_inplace(h, mha_relpos(layer_norm(x, w.norm_attn), w, m, cfg));
  add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn1), w.ffn1_a, w.ffn1_b));
  return h;
}

// Macaron conformer block: x + 1/2 FFN1, + MHA, + conv module, + 1/2 FFN2,
// then a final block norm. `conv_history` feeds the depthwise conv with the
// (K-1) frames preceding the block (zeros offline / at stream start).
inline Tensor conformer_block(const Tensor& x, const LayerWeights& w, const MaskMatrix& m,
                              const EncoderConfig& cfg, const Tensor& conv_history) {
  Tensor h = x;
  add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn1), w.ffn1_a, w.ffn1_b), 0.5f);
  add_inplace(h, mha_relpos(layer_norm(h, w.norm_attn), w, m, cfg));
  add_inplace(h, conv_module(layer_norm(h, w.norm_conv), w, conv_history));
  add_inplace(h, ffn_forward(layer_norm(h, w.norm_ffn2), w.ffn2_a, w.ffn2_b), 0.5f);
  return layer_norm(h, w.norm_block_final);
}

inline Tensor conformer_block(const Tensor& x, const LayerWeights& w, const MaskMatrix& m,
                              const EncoderConfig& cfg) {
  const Tensor zeros({static_cast<int64_t>(w.conv_depthwise.shape.at(0)) - 1, x.cols()});
  return conformer_block(x, w, m, cfg, zeros);
}

// Full-utterance masked encoding: input projection, stacked layers sharing one
// mask, final norm.
inline Tensor encode_offline(const Tensor& features, const ModelWeights& model,
                             const MaskSpec& spec) {
  const int64_t t = features.rows();
  if (t < 1) throw ArgError("encode_offline: need at least one frame");
  Tensor x = model.input_proj.apply(features);
  const MaskMatrix m = build_mask(spec, static_cast<int>(t));
  for (const LayerWeights& w : model.layers) {
    x = model.cfg.arch == Arch::transformer ? transformer_layer(x, w, m, model.cfg)
                                            : conformer_block(x, w, m, model.cfg);
  }
  layer_norm_inplace(x, model.final_norm.gain, model.final_norm.bias);
  return x;
}

}  // namespace ttx
