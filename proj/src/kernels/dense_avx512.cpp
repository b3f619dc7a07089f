#include <immintrin.h>

#include "mdns/kernels.hpp"

namespace mdns::kernels::detail {
namespace {

inline __mmask8 tail_mask(std::size_t n) { return static_cast<__mmask8>((1u << n) - 1u); }

inline __m512d load_or_zero(const double* p, __mmask8 m) {
  return p ? _mm512_maskz_loadu_pd(m, p) : _mm512_setzero_pd();
}

// 4 rows by one 8-wide column block, masked so ragged widths need no scalar tail.
inline void gemm_tile4(const double* x, std::size_t in, const double* w, const double* b,
                       std::size_t out, std::size_t j, __mmask8 m, double* y) {
  const __m512d init = load_or_zero(b ? b + j : nullptr, m);
  __m512d a0 = init, a1 = init, a2 = init, a3 = init;
  for (std::size_t k = 0; k < in; ++k) {
    const __m512d wk = _mm512_maskz_loadu_pd(m, w + k * out + j);
    a0 = _mm512_fmadd_pd(_mm512_set1_pd(x[k]), wk, a0);
    a1 = _mm512_fmadd_pd(_mm512_set1_pd(x[in + k]), wk, a1);
    a2 = _mm512_fmadd_pd(_mm512_set1_pd(x[2 * in + k]), wk, a2);
    a3 = _mm512_fmadd_pd(_mm512_set1_pd(x[3 * in + k]), wk, a3);
  }
  _mm512_mask_storeu_pd(y + j, m, a0);
  _mm512_mask_storeu_pd(y + out + j, m, a1);
  _mm512_mask_storeu_pd(y + 2 * out + j, m, a2);
  _mm512_mask_storeu_pd(y + 3 * out + j, m, a3);
}

// 4 rows by two 8-wide column blocks.
inline void gemm_tile4x16(const double* x, std::size_t in, const double* w, const double* b,
                          std::size_t out, std::size_t j, double* y) {
  const __m512d i0 = b ? _mm512_loadu_pd(b + j) : _mm512_setzero_pd();
  const __m512d i1 = b ? _mm512_loadu_pd(b + j + 8) : _mm512_setzero_pd();
  __m512d a00 = i0, a01 = i1, a10 = i0, a11 = i1, a20 = i0, a21 = i1, a30 = i0, a31 = i1;
  for (std::size_t k = 0; k < in; ++k) {
    const __m512d w0 = _mm512_loadu_pd(w + k * out + j);
    const __m512d w1 = _mm512_loadu_pd(w + k * out + j + 8);
    __m512d s = _mm512_set1_pd(x[k]);
    a00 = _mm512_fmadd_pd(s, w0, a00);
    a01 = _mm512_fmadd_pd(s, w1, a01);
    s = _mm512_set1_pd(x[in + k]);
    a10 = _mm512_fmadd_pd(s, w0, a10);
    a11 = _mm512_fmadd_pd(s, w1, a11);
    s = _mm512_set1_pd(x[2 * in + k]);
    a20 = _mm512_fmadd_pd(s, w0, a20);
    a21 = _mm512_fmadd_pd(s, w1, a21);
    s = _mm512_set1_pd(x[3 * in + k]);
    a30 = _mm512_fmadd_pd(s, w0, a30);
    a31 = _mm512_fmadd_pd(s, w1, a31);
  }
  _mm512_storeu_pd(y + j, a00);
  _mm512_storeu_pd(y + j + 8, a01);
  _mm512_storeu_pd(y + out + j, a10);
  _mm512_storeu_pd(y + out + j + 8, a11);
  _mm512_storeu_pd(y + 2 * out + j, a20);
  _mm512_storeu_pd(y + 2 * out + j + 8, a21);
  _mm512_storeu_pd(y + 3 * out + j, a30);
  _mm512_storeu_pd(y + 3 * out + j + 8, a31);
}

void gemm(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
          std::size_t out, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    std::size_t j = 0;
    for (; j + 16 <= out; j += 16) gemm_tile4x16(xr, in, w, b, out, j, yr);
    for (; j < out; j += 8) {
      const std::size_t n = out - j < 8 ? out - j : 8;
      gemm_tile4(xr, in, w, b, out, j, tail_mask(n), yr);
    }
  }
  for (; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t j = 0; j < out; j += 8) {
      const std::size_t n = out - j < 8 ? out - j : 8;
      const __mmask8 m = tail_mask(n);
      __m512d acc = load_or_zero(b ? b + j : nullptr, m);
      for (std::size_t k = 0; k < in; ++k)
        acc = _mm512_fmadd_pd(_mm512_set1_pd(xr[k]), _mm512_maskz_loadu_pd(m, w + k * out + j), acc);
      _mm512_mask_storeu_pd(yr + j, m, acc);
    }
  }
}

void ger(const double* x, const double* dy, std::size_t rows, std::size_t in, std::size_t out,
         double* dw, double* db) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* d0 = dy + r * out;
    const double* d1 = d0 + out;
    const double* d2 = d1 + out;
    const double* d3 = d2 + out;
    for (std::size_t k = 0; k < in; ++k) {
      const __m512d s0 = _mm512_set1_pd(x[r * in + k]);
      const __m512d s1 = _mm512_set1_pd(x[(r + 1) * in + k]);
      const __m512d s2 = _mm512_set1_pd(x[(r + 2) * in + k]);
      const __m512d s3 = _mm512_set1_pd(x[(r + 3) * in + k]);
      double* dwk = dw + k * out;
      for (std::size_t j = 0; j < out; j += 8) {
        const std::size_t n = out - j < 8 ? out - j : 8;
        const __mmask8 m = tail_mask(n);
        __m512d acc = _mm512_maskz_loadu_pd(m, dwk + j);
        acc = _mm512_fmadd_pd(s0, _mm512_maskz_loadu_pd(m, d0 + j), acc);
        acc = _mm512_fmadd_pd(s1, _mm512_maskz_loadu_pd(m, d1 + j), acc);
        acc = _mm512_fmadd_pd(s2, _mm512_maskz_loadu_pd(m, d2 + j), acc);
        acc = _mm512_fmadd_pd(s3, _mm512_maskz_loadu_pd(m, d3 + j), acc);
        _mm512_mask_storeu_pd(dwk + j, m, acc);
      }
    }
    if (db)
      for (std::size_t j = 0; j < out; ++j) db[j] += d0[j] + d1[j] + d2[j] + d3[j];
  }
  for (; r < rows; ++r) {
    const double* dr = dy + r * out;
    for (std::size_t k = 0; k < in; ++k) {
      const __m512d s = _mm512_set1_pd(x[r * in + k]);
      double* dwk = dw + k * out;
      for (std::size_t j = 0; j < out; j += 8) {
        const std::size_t n = out - j < 8 ? out - j : 8;
        const __mmask8 m = tail_mask(n);
        _mm512_mask_storeu_pd(
            dwk + j, m,
            _mm512_fmadd_pd(s, _mm512_maskz_loadu_pd(m, dr + j), _mm512_maskz_loadu_pd(m, dwk + j)));
      }
    }
    if (db)
      for (std::size_t j = 0; j < out; ++j) db[j] += dr[j];
  }
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  const __m512d s = _mm512_set1_pd(a);
  for (std::size_t i = 0; i < n; i += 8) {
    const std::size_t c = n - i < 8 ? n - i : 8;
    const __mmask8 m = tail_mask(c);
    _mm512_mask_storeu_pd(y + i, m,
                          _mm512_fmadd_pd(s, _mm512_maskz_loadu_pd(m, x + i), _mm512_maskz_loadu_pd(m, y + i)));
  }
}

}  // namespace

const DenseKernels avx512_kernels{gemm, ger, axpy};

}  // namespace mdns::kernels::detail
