#include <immintrin.h>

#include "mdns/kernels.hpp"

namespace mdns::kernels::detail {
namespace {

// Computes a 4-row by 8-column tile of y = x w + b.
inline void gemm_tile4x8(const double* x, std::size_t in, const double* w, const double* b,
                         std::size_t out, std::size_t j, double* y) {
  __m256d init0 = b ? _mm256_loadu_pd(b + j) : _mm256_setzero_pd();
  __m256d init1 = b ? _mm256_loadu_pd(b + j + 4) : _mm256_setzero_pd();
  __m256d a00 = init0, a01 = init1, a10 = init0, a11 = init1;
  __m256d a20 = init0, a21 = init1, a30 = init0, a31 = init1;
  const double* x0 = x;
  const double* x1 = x + in;
  const double* x2 = x + 2 * in;
  const double* x3 = x + 3 * in;
  for (std::size_t k = 0; k < in; ++k) {
    const __m256d w0 = _mm256_loadu_pd(w + k * out + j);
    const __m256d w1 = _mm256_loadu_pd(w + k * out + j + 4);
    __m256d s = _mm256_broadcast_sd(x0 + k);
    a00 = _mm256_fmadd_pd(s, w0, a00);
    a01 = _mm256_fmadd_pd(s, w1, a01);
    s = _mm256_broadcast_sd(x1 + k);
    a10 = _mm256_fmadd_pd(s, w0, a10);
    a11 = _mm256_fmadd_pd(s, w1, a11);
    s = _mm256_broadcast_sd(x2 + k);
    a20 = _mm256_fmadd_pd(s, w0, a20);
    a21 = _mm256_fmadd_pd(s, w1, a21);
    s = _mm256_broadcast_sd(x3 + k);
    a30 = _mm256_fmadd_pd(s, w0, a30);
    a31 = _mm256_fmadd_pd(s, w1, a31);
  }
  _mm256_storeu_pd(y + j, a00);
  _mm256_storeu_pd(y + j + 4, a01);
  _mm256_storeu_pd(y + out + j, a10);
  _mm256_storeu_pd(y + out + j + 4, a11);
  _mm256_storeu_pd(y + 2 * out + j, a20);
  _mm256_storeu_pd(y + 2 * out + j + 4, a21);
  _mm256_storeu_pd(y + 3 * out + j, a30);
  _mm256_storeu_pd(y + 3 * out + j + 4, a31);
}

inline void gemm_row_tail(const double* xr, std::size_t in, const double* w, const double* b,
                          std::size_t out, std::size_t j0, double* yr) {
  for (std::size_t j = j0; j < out; ++j) {
    double acc = b ? b[j] : 0.0;
    for (std::size_t k = 0; k < in; ++k) acc += xr[k] * w[k * out + j];
    yr[j] = acc;
  }
}

inline void gemm_row(const double* xr, std::size_t in, const double* w, const double* b,
                     std::size_t out, double* yr) {
  std::size_t j = 0;
  for (; j + 4 <= out; j += 4) {
    __m256d acc = b ? _mm256_loadu_pd(b + j) : _mm256_setzero_pd();
    for (std::size_t k = 0; k < in; ++k)
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(xr + k), _mm256_loadu_pd(w + k * out + j), acc);
    _mm256_storeu_pd(yr + j, acc);
  }
  gemm_row_tail(xr, in, w, b, out, j, yr);
}

void gemm(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
          std::size_t out, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    std::size_t j = 0;
    for (; j + 8 <= out; j += 8) gemm_tile4x8(xr, in, w, b, out, j, yr);
    if (j < out)
      for (std::size_t i = 0; i < 4; ++i) {
        std::size_t jj = j;
        const double* xi = xr + i * in;
        double* yi = yr + i * out;
        for (; jj + 4 <= out; jj += 4) {
          __m256d acc = b ? _mm256_loadu_pd(b + jj) : _mm256_setzero_pd();
          for (std::size_t k = 0; k < in; ++k)
            acc = _mm256_fmadd_pd(_mm256_broadcast_sd(xi + k), _mm256_loadu_pd(w + k * out + jj), acc);
          _mm256_storeu_pd(yi + jj, acc);
        }
        gemm_row_tail(xi, in, w, b, out, jj, yi);
      }
  }
  for (; r < rows; ++r) gemm_row(x + r * in, in, w, b, out, y + r * out);
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
      const double x0 = x[r * in + k];
      const double x1 = x[(r + 1) * in + k];
      const double x2 = x[(r + 2) * in + k];
      const double x3 = x[(r + 3) * in + k];
      const __m256d s0 = _mm256_set1_pd(x0), s1 = _mm256_set1_pd(x1);
      const __m256d s2 = _mm256_set1_pd(x2), s3 = _mm256_set1_pd(x3);
      double* dwk = dw + k * out;
      std::size_t j = 0;
      for (; j + 4 <= out; j += 4) {
        __m256d acc = _mm256_loadu_pd(dwk + j);
        acc = _mm256_fmadd_pd(s0, _mm256_loadu_pd(d0 + j), acc);
        acc = _mm256_fmadd_pd(s1, _mm256_loadu_pd(d1 + j), acc);
        acc = _mm256_fmadd_pd(s2, _mm256_loadu_pd(d2 + j), acc);
        acc = _mm256_fmadd_pd(s3, _mm256_loadu_pd(d3 + j), acc);
        _mm256_storeu_pd(dwk + j, acc);
      }
      for (; j < out; ++j) dwk[j] += x0 * d0[j] + x1 * d1[j] + x2 * d2[j] + x3 * d3[j];
    }
    if (db) {
      std::size_t j = 0;
      for (; j + 4 <= out; j += 4) {
        __m256d acc = _mm256_loadu_pd(db + j);
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(d0 + j));
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(d1 + j));
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(d2 + j));
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(d3 + j));
        _mm256_storeu_pd(db + j, acc);
      }
      for (; j < out; ++j) db[j] += d0[j] + d1[j] + d2[j] + d3[j];
    }
  }
  for (; r < rows; ++r) {
    const double* dr = dy + r * out;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = x[r * in + k];
      const __m256d s = _mm256_set1_pd(xk);
      double* dwk = dw + k * out;
      std::size_t j = 0;
      for (; j + 4 <= out; j += 4)
        _mm256_storeu_pd(dwk + j, _mm256_fmadd_pd(s, _mm256_loadu_pd(dr + j), _mm256_loadu_pd(dwk + j)));
      for (; j < out; ++j) dwk[j] += xk * dr[j];
    }
    if (db)
      for (std::size_t j = 0; j < out; ++j) db[j] += dr[j];
  }
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  const __m256d s = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(s, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const DenseKernels avx2_kernels{gemm, ger, axpy};

}  // namespace mdns::kernels::detail
