#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ttx/errors.hpp"
#include "ttx/mask.hpp"

namespace ttx {

// Dense row-major float32 array. All activations and weights live here.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  }
  Tensor(std::vector<int64_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw ShapeError("Tensor: data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw ShapeError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // Rows/cols view of a 2-D (or 1-D as a single row) tensor.
  int64_t rows() const { return rank() == 1 ? 1 : shape[0]; }
  int64_t cols() const { return rank() == 1 ? shape[0] : shape[rank() - 1]; }

  float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  const float* row_ptr(int64_t r) const { return data.data() + r * cols(); }
  float* row_ptr(int64_t r) { return data.data() + r * cols(); }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// C[i][j] = sum_l A[i][l] * B[l][j]. Plain 2-D matmul, ikj loop order.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be 2-D");
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k) throw ShapeError("matmul: inner dimensions disagree");
  Tensor c({m, n});
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c.row_ptr(i);
    const float* arow = a.row_ptr(i);
    for (int64_t l = 0; l < k; ++l) {
      const float av = arow[l];
      const float* brow = b.row_ptr(l);
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// Row-wise softmax restricted to allowed entries. Disallowed entries come out
// as exact 0; allowed entries are exp-normalized after subtracting the row max
// over the allowed set.
inline Tensor masked_softmax_rows(const Tensor& scores, const MaskMatrix& mask) {
  if (scores.rank() != 2) throw ShapeError("masked_softmax_rows: scores must be 2-D");
  if (scores.shape[0] != mask.rows || scores.shape[1] != mask.cols)
    throw ShapeError("masked_softmax_rows: mask shape mismatch");
  Tensor out({scores.shape[0], scores.shape[1]});
  for (int i = 0; i < mask.rows; ++i) {
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < mask.cols; ++j)
      if (mask.at(i, j)) mx = std::max(mx, scores.at(i, j));
    if (mx == -std::numeric_limits<float>::infinity())
      throw MaskError("masked_softmax_rows: fully masked row " + std::to_string(i));
    float denom = 0.0f;
    for (int j = 0; j < mask.cols; ++j) {
      if (!mask.at(i, j)) continue;
      const float e = std::exp(scores.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < mask.cols; ++j)
      if (mask.at(i, j)) out.at(i, j) /= denom;
  }
  return out;
}

struct LayerNormParams {
  Tensor gain;  // [d]
  Tensor bias;  // [d]
};

// Normalizes each length-d vector along the last dimension to zero mean and
// unit variance, then applies gain/bias.
inline void layer_norm_inplace(Tensor& x, const Tensor& gain, const Tensor& bias,
                               float eps = 1e-5f) {
  const int64_t d = x.shape.empty() ? 0 : x.shape[x.rank() - 1];
  if (d < 1) throw ShapeError("layer_norm: empty last dimension");
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias length mismatch");
  if (eps <= 0.0f) throw ArgError("layer_norm: eps must be positive");
  const int64_t n = x.numel() / d;
  for (int64_t r = 0; r < n; ++r) {
    float* v = x.data.data() + r * d;
    float mean = 0.0f;
    for (int64_t i = 0; i < d; ++i) mean += v[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int64_t i = 0; i < d; ++i) {
      const float c = v[i] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int64_t i = 0; i < d; ++i)
      v[i] = (v[i] - mean) * inv * gain.data[static_cast<size_t>(i)] +
             bias.data[static_cast<size_t>(i)];
  }
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         float eps = 1e-5f) {
  Tensor out = x;
  layer_norm_inplace(out, gain, bias, eps);
  return out;
}

inline Tensor layer_norm(const Tensor& x, const LayerNormParams& p, float eps = 1e-5f) {
  return layer_norm(x, p.gain, p.bias, eps);
}

enum class Act { relu, sigmoid, tanh, swish, glu };

inline float sigmoidf(float v) { return 1.0f / (1.0f + std::exp(-v)); }

inline Tensor activation(Act kind, const Tensor& x) {
  if (kind == Act::glu) {
    const int64_t d = x.shape.empty() ? 0 : x.shape[x.rank() - 1];
    if (d % 2 != 0) throw ShapeError("glu: last dimension must be even");
    std::vector<int64_t> oshape = x.shape;
    oshape[oshape.size() - 1] = d / 2;
    Tensor out(oshape);
    const int64_t n = x.numel() / d;
    const int64_t h = d / 2;
    for (int64_t r = 0; r < n; ++r) {
      const float* v = x.data.data() + r * d;
      float* o = out.data.data() + r * h;
      for (int64_t i = 0; i < h; ++i) o[i] = v[i] * sigmoidf(v[h + i]);
    }
    return out;
  }
  Tensor out = x;
  for (float& v : out.data) {
    switch (kind) {
      case Act::relu: v = v > 0.0f ? v : 0.0f; break;
      case Act::sigmoid: v = sigmoidf(v); break;
      case Act::tanh: v = std::tanh(v); break;
      case Act::swish: v = v * sigmoidf(v); break;
      case Act::glu: break;  // handled above
    }
  }
  return out;
}

}  // namespace ttx
