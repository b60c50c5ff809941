#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ttx/tensor.hpp"

namespace ttx {

// Symmetric INT8 weights with one scale per output row. -128 is never used so
// that negation is exact.
struct QuantTensor {
  std::vector<int64_t> shape;  // [out, in] (embedding: [rows, d])
  std::vector<int8_t> data;    // row-major
  std::vector<float> scales;   // one per row

  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }
  bool empty() const { return data.empty(); }
  const int8_t* row_ptr(int64_t r) const { return data.data() + r * cols(); }
};

// Round-half-to-even, matching the default FP environment.
inline int32_t round_q(float v) { return static_cast<int32_t>(std::nearbyintf(v)); }

inline QuantTensor quantize_tensor(const Tensor& w) {
  if (w.rank() != 2) throw ShapeError("quantize_tensor: expected a 2-D tensor");
  QuantTensor q;
  q.shape = w.shape;
  const int64_t rows = w.shape[0], cols = w.shape[1];
  q.data.resize(static_cast<size_t>(rows * cols));
  q.scales.resize(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const float* src = w.row_ptr(r);
    float amax = 0.0f;
    for (int64_t c = 0; c < cols; ++c) amax = std::max(amax, std::fabs(src[c]));
    const float scale = amax > 0.0f ? amax / 127.0f : 1.0f;
    q.scales[static_cast<size_t>(r)] = scale;
    int8_t* dst = q.data.data() + r * cols;
    for (int64_t c = 0; c < cols; ++c) {
      int32_t v = round_q(src[c] / scale);
      v = std::max(-127, std::min(127, v));
      dst[c] = static_cast<int8_t>(v);
    }
  }
  return q;
}

inline Tensor dequantize(const QuantTensor& q) {
  Tensor out(q.shape);
  const int64_t rows = q.rows(), cols = q.cols();
  for (int64_t r = 0; r < rows; ++r) {
    const float s = q.scales[static_cast<size_t>(r)];
    const int8_t* src = q.row_ptr(r);
    float* dst = out.row_ptr(r);
    for (int64_t c = 0; c < cols; ++c) dst[c] = static_cast<float>(src[c]) * s;
  }
  return out;
}

// Dynamic activation quantization: one scale for the whole input vector.
// Returns the scale; qx must hold n entries.
inline float quantize_activations(const float* x, int64_t n, int8_t* qx) {
  float amax = 0.0f;
  for (int64_t i = 0; i < n; ++i) amax = std::max(amax, std::fabs(x[i]));
  const float scale = amax > 0.0f ? amax / 127.0f : 1.0f;
  const float inv = 1.0f / scale;
  for (int64_t i = 0; i < n; ++i) {
    int32_t v = round_q(x[i] * inv);
    qx[i] = static_cast<int8_t>(std::max(-127, std::min(127, v)));
  }
  return scale;
}

inline int32_t dot_i8(const int8_t* a, const int8_t* b, int64_t n) {
  int32_t acc = 0;
  for (int64_t i = 0; i < n; ++i)
    acc += static_cast<int32_t>(a[i]) * static_cast<int32_t>(b[i]);
  return acc;
}

// y[r] = (sum_c qW[r][c]*qx[c]) * s_x * scale_r + bias[r]. Integer products
// accumulate in 32 bits.
inline void int8_linear_row(const float* x, const QuantTensor& qw, const float* bias,
                            float* y, std::vector<int8_t>& qx_scratch) {
  const int64_t in = qw.cols(), out = qw.rows();
  qx_scratch.resize(static_cast<size_t>(in));
  const float sx = quantize_activations(x, in, qx_scratch.data());
  for (int64_t r = 0; r < out; ++r) {
    const float acc = static_cast<float>(dot_i8(qw.row_ptr(r), qx_scratch.data(), in));
    y[r] = acc * sx * qw.scales[static_cast<size_t>(r)] + (bias ? bias[r] : 0.0f);
  }
}

inline Tensor int8_linear(const Tensor& x, const QuantTensor& qw, const Tensor& bias) {
  if (x.cols() != qw.cols()) throw ShapeError("int8_linear: input width mismatch");
  const int64_t n = x.rows(), out = qw.rows();
  Tensor y = x.rank() == 1 ? Tensor({out}) : Tensor({n, out});
  std::vector<int8_t> scratch;
  const float* b = bias.numel() ? bias.data.data() : nullptr;
  if (b && bias.numel() != out) throw ShapeError("int8_linear: bias length mismatch");
  for (int64_t r = 0; r < n; ++r)
    int8_linear_row(x.row_ptr(r), qw, b, y.row_ptr(r), scratch);
  return y;
}

}  // namespace ttx
