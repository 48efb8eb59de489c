#include <cstdlib>
#include <string_view>

#include "cursorprof/kernels.hpp"

namespace cursorprof::kernels {

#if defined(CURSORPROF_HAVE_AVX2)
namespace detail {
const KernelSet& avx2_set();
}
#endif

const KernelSet* avx2_kernels() {
#if defined(CURSORPROF_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (supported) return &detail::avx2_set();
#endif
  return nullptr;
}

const KernelSet& active() {
  static const KernelSet& chosen = [&]() -> const KernelSet& {
    const char* forced = std::getenv("CURSORPROF_SIMD");
    if (forced != nullptr && std::string_view(forced) == "scalar")
      return scalar_kernels();
    if (const KernelSet* k = avx2_kernels()) return *k;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace cursorprof::kernels
