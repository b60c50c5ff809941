#pragma once

#include "ttx/quant.hpp"
#include "ttx/tensor.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#define TTX_USE_AVX2 1
#include <immintrin.h>
#endif

namespace ttx {

#ifdef TTX_USE_AVX2
inline float hsum_f32(__m256 v) {
  __m128 q = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  q = _mm_add_ps(q, _mm_movehl_ps(q, q));
  q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
  return _mm_cvtss_f32(q);
}
#endif

// Dot product with interleaved partial sums, so the FMA chains overlap instead
// of serializing on one accumulator.
inline float dot_f32(const float* w, const float* x, int64_t n) {
#ifdef TTX_USE_AVX2
  __m256 v0 = _mm256_setzero_ps(), v1 = _mm256_setzero_ps();
  __m256 v2 = _mm256_setzero_ps(), v3 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 32 <= n; i += 32) {
    v0 = _mm256_fmadd_ps(_mm256_loadu_ps(w + i), _mm256_loadu_ps(x + i), v0);
    v1 = _mm256_fmadd_ps(_mm256_loadu_ps(w + i + 8), _mm256_loadu_ps(x + i + 8), v1);
    v2 = _mm256_fmadd_ps(_mm256_loadu_ps(w + i + 16), _mm256_loadu_ps(x + i + 16), v2);
    v3 = _mm256_fmadd_ps(_mm256_loadu_ps(w + i + 24), _mm256_loadu_ps(x + i + 24), v3);
  }
  for (; i + 8 <= n; i += 8)
    v0 = _mm256_fmadd_ps(_mm256_loadu_ps(w + i), _mm256_loadu_ps(x + i), v0);
  float acc = hsum_f32(_mm256_add_ps(_mm256_add_ps(v0, v1), _mm256_add_ps(v2, v3)));
  for (; i < n; ++i) acc += w[i] * x[i];
  return acc;
#else
  float a0 = 0.0f, a1 = 0.0f, a2 = 0.0f, a3 = 0.0f;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += w[i] * x[i];
    a1 += w[i + 1] * x[i + 1];
    a2 += w[i + 2] * x[i + 2];
    a3 += w[i + 3] * x[i + 3];
  }
  for (; i < n; ++i) a0 += w[i] * x[i];
  return (a0 + a1) + (a2 + a3);
#endif
}

#ifdef TTX_USE_AVX2
// Dot of one weight row against R input rows at once; R <= 6 keeps the 2R
// accumulators plus two weight registers within the sixteen architectural
// vectors. The weight row stays in L1 across successive groups.
template <int R>
inline void dot_rows_f32(const float* wr, const float* const* xr, float* out_s,
                         int64_t in) {
  __m256 acc[R][2];
  for (int k = 0; k < R; ++k) acc[k][0] = acc[k][1] = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= in; i += 16) {
    const __m256 wa = _mm256_loadu_ps(wr + i);
    const __m256 wb = _mm256_loadu_ps(wr + i + 8);
    for (int k = 0; k < R; ++k) {
      acc[k][0] = _mm256_fmadd_ps(_mm256_loadu_ps(xr[k] + i), wa, acc[k][0]);
      acc[k][1] = _mm256_fmadd_ps(_mm256_loadu_ps(xr[k] + i + 8), wb, acc[k][1]);
    }
  }
  float s[R];
  for (int k = 0; k < R; ++k) s[k] = hsum_f32(_mm256_add_ps(acc[k][0], acc[k][1]));
  for (; i < in; ++i) {
    const float wv = wr[i];
    for (int k = 0; k < R; ++k) s[k] += xr[k][i] * wv;
  }
  for (int k = 0; k < R; ++k) out_s[k] = s[k];
}
#endif

// Affine map y = W x + b with weight stored as [out, in]. Either the float
// weight or the INT8 weight is populated; biases always stay float.
struct Linear {
  Tensor w;       // [out, in]; empty when quantized
  Tensor b;       // [out] or empty (no bias)
  QuantTensor q;  // populated when quantized
  bool quantized = false;

  int64_t out_dim() const { return quantized ? q.rows() : (w.rank() == 2 ? w.shape[0] : 0); }
  int64_t in_dim() const { return quantized ? q.cols() : (w.rank() == 2 ? w.shape[1] : 0); }
  bool has_bias() const { return b.numel() > 0; }

  // x is [n, in] (or a single [in] row); returns [n, out] (or [out]).
  Tensor apply(const Tensor& x) const {
    const int64_t in = in_dim(), out = out_dim();
    if (x.cols() != in) throw ShapeError("Linear: input width mismatch");
    if (quantized) return int8_linear(x, q, b);
    const int64_t n = x.rows();
    Tensor y = x.rank() == 1 ? Tensor({out}) : Tensor({n, out});
    const float* bias = has_bias() ? b.data.data() : nullptr;
#ifdef TTX_USE_AVX2
    if (n >= 2) {
      // Batched path: the weight row loop is outermost, so each weight row is
      // streamed from memory once per call no matter how many input rows share
      // it; a single row has to stream the whole matrix for itself, which is
      // what makes batched chunks cheaper per frame. Accumulation order
      // differs from the per-row dot, so the paths match only to rounding.
      const float* xp[6];
      float s[6];
      for (int64_t o = 0; o < out; ++o) {
        const float* wr = w.row_ptr(o);
        const float bv = bias ? bias[o] : 0.0f;
        int64_t r = 0;
        while (r < n) {
          const int g = static_cast<int>(std::min<int64_t>(6, n - r));
          for (int k = 0; k < g; ++k) xp[k] = x.row_ptr(r + k);
          switch (g) {
            case 1: s[0] = dot_f32(wr, xp[0], in); break;
            case 2: dot_rows_f32<2>(wr, xp, s, in); break;
            case 3: dot_rows_f32<3>(wr, xp, s, in); break;
            case 4: dot_rows_f32<4>(wr, xp, s, in); break;
            case 5: dot_rows_f32<5>(wr, xp, s, in); break;
            default: dot_rows_f32<6>(wr, xp, s, in); break;
          }
          for (int k = 0; k < g; ++k) y.row_ptr(r + k)[o] = s[k] + bv;
          r += g;
        }
      }
      return y;
    }
#endif
    for (int64_t r = 0; r < n; ++r) {
      const float* xr = x.row_ptr(r);
      float* yr = y.row_ptr(r);
      for (int64_t o = 0; o < out; ++o) {
        yr[o] = dot_f32(w.row_ptr(o), xr, in) + (bias ? bias[o] : 0.0f);
      }
    }
    return y;
  }

  void quantize() {
    if (quantized) return;
    q = quantize_tensor(w);
    w = Tensor();
    quantized = true;
  }
};

// Token embedding table; row 0 is the blank / start symbol.
struct Embedding {
  Tensor w;       // [rows, d]; empty when quantized
  QuantTensor q;
  bool quantized = false;

  int64_t rows() const { return quantized ? q.rows() : (w.rank() == 2 ? w.shape[0] : 0); }
  int64_t dim() const { return quantized ? q.cols() : (w.rank() == 2 ? w.shape[1] : 0); }

  Tensor row(int64_t idx) const {
    if (idx < 0 || idx >= rows()) throw ArgError("Embedding: index out of range");
    Tensor out({dim()});
    if (quantized) {
      const float s = q.scales[static_cast<size_t>(idx)];
      const int8_t* src = q.row_ptr(idx);
      for (int64_t i = 0; i < dim(); ++i) out.data[static_cast<size_t>(i)] = src[i] * s;
    } else {
      const float* src = w.row_ptr(idx);
      std::copy(src, src + dim(), out.data.begin());
    }
    return out;
  }

  void quantize() {
    if (quantized) return;
    q = quantize_tensor(w);
    w = Tensor();
    quantized = true;
  }
};

}  // namespace ttx
