#include "mdns/kernels.hpp"

namespace mdns::kernels::detail {
namespace {

void gemm(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
          std::size_t out, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] = b ? b[j] : 0.0;
    const double* xr = x + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xr[k];
      const double* wk = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xk * wk[j];
    }
  }
}

void ger(const double* x, const double* dy, std::size_t rows, std::size_t in, std::size_t out,
         double* dw, double* db) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t k = 0; k < in; ++k) {
      const double xk = xr[k];
      double* dwk = dw + k * out;
      for (std::size_t j = 0; j < out; ++j) dwk[j] += xk * dyr[j];
    }
    if (db)
      for (std::size_t j = 0; j < out; ++j) db[j] += dyr[j];
  }
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const DenseKernels scalar_kernels{gemm, ger, axpy};

}  // namespace mdns::kernels::detail
