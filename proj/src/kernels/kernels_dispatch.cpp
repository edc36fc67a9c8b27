#include "ridgeem/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace ridgeem::kernels {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::sum_sq_diff, &scalar::matern32,
                                   Isa::scalar};
#if defined(RIDGEEM_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::sum_sq_diff, &avx2::matern32, Isa::avx2};
#endif

const KernelTable& select() {
  if (const char* env = std::getenv("RIDGEEM_SIMD"); env && std::string_view(env) == "scalar")
    return kScalarTable;
  if (cpu_supports(Isa::avx2)) return table_for(Isa::avx2);
  return kScalarTable;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(RIDGEEM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
#if defined(RIDGEEM_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

}  // namespace ridgeem::kernels
