#include <cstdlib>

#include "mdns/error.hpp"
#include "mdns/kernels.hpp"

namespace mdns::kernels {
namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("MDNS_SIMD"); env && *env) {
    const Isa requested = isa_from_string(env);
    if (isa_supported(requested)) return requested;
  }
  return detect_isa();
}

Isa& current() {
  static Isa isa = initial_isa();
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
#if defined(MDNS_HAVE_X86_KERNELS)
    case Isa::Avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::Avx512:
      return __builtin_cpu_supports("avx512f");
#endif
    default:
      return false;
  }
}

Isa detect_isa() {
  if (isa_supported(Isa::Avx512)) return Isa::Avx512;
  if (isa_supported(Isa::Avx2)) return Isa::Avx2;
  return Isa::Scalar;
}

const DenseKernels& kernels_for(Isa isa) {
  if (!isa_supported(isa)) throw_config("SIMD variant '" + to_string(isa) + "' is not supported on this CPU");
  switch (isa) {
#if defined(MDNS_HAVE_X86_KERNELS)
    case Isa::Avx2:
      return detail::avx2_kernels;
    case Isa::Avx512:
      return detail::avx512_kernels;
#endif
    default:
      return detail::scalar_kernels;
  }
}

const DenseKernels& active() { return kernels_for(current()); }

Isa active_isa() { return current(); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) throw_config("SIMD variant '" + to_string(isa) + "' is not supported on this CPU");
  current() = isa;
}

std::string to_string(Isa isa) {
  switch (isa) {
    case Isa::Avx2:
      return "avx2";
    case Isa::Avx512:
      return "avx512";
    default:
      return "scalar";
  }
}

Isa isa_from_string(const std::string& name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "avx512") return Isa::Avx512;
  throw_config("unknown SIMD variant '" + name + "' (expected scalar, avx2 or avx512)");
}

}  // namespace mdns::kernels
