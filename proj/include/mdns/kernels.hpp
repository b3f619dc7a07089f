#pragma once

#include <cstddef>
#include <string>

namespace mdns::kernels {

enum class Isa { Scalar, Avx2, Avx512 };

/// Dense-layer primitives over row-major double arrays.
///
/// Every ISA variant computes the same sums; the SIMD versions differ from the
/// scalar reference only by floating-point reassociation and FMA rounding.
struct DenseKernels {
  /// y[r, j] = b[j] + sum_k x[r, k] * w[k, j], with x: rows x in, w: in x out.
  /// b may be null (treated as zero). y is overwritten.
  void (*gemm)(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
               std::size_t out, double* y);
  /// dw[k, j] += sum_r x[r, k] * dy[r, j]; db[j] += sum_r dy[r, j] (db may be null).
  void (*ger)(const double* x, const double* dy, std::size_t rows, std::size_t in, std::size_t out,
              double* dw, double* db);
  /// y[i] += a * x[i].
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
};

const DenseKernels& kernels_for(Isa isa);
bool isa_supported(Isa isa);
Isa detect_isa();

/// The kernels used by the score model. Chosen once from the CPU, or from the
/// MDNS_SIMD environment variable (scalar, avx2, avx512) when set.
const DenseKernels& active();
Isa active_isa();
/// Overrides the active ISA; throws a config error if the CPU lacks it.
void force_isa(Isa isa);

std::string to_string(Isa isa);
Isa isa_from_string(const std::string& name);

namespace detail {
extern const DenseKernels scalar_kernels;
#if defined(MDNS_HAVE_X86_KERNELS)
extern const DenseKernels avx2_kernels;
extern const DenseKernels avx512_kernels;
#endif
}  // namespace detail

}  // namespace mdns::kernels
