#pragma once

// Data-parallel inner loops shared by the covariance builders, the EM
// traces and the benchmark metrics. Each kernel has a scalar reference and,
// on x86-64, an AVX2/FMA variant. The variant is picked once at first use
// from CPUID; setting RIDGEEM_SIMD=scalar in the environment forces the
// reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace ridgeem::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
  // out[i] = variance * (1 + dist[i]*inv_range) * exp(-dist[i]*inv_range)
  void (*matern32)(const double* dist, std::size_t n, double inv_range, double variance,
                   double* out);
  Isa isa;
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
void matern32(const double* dist, std::size_t n, double inv_range, double variance, double* out);
}  // namespace scalar

#if defined(RIDGEEM_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
void matern32(const double* dist, std::size_t n, double inv_range, double variance, double* out);
}  // namespace avx2
#endif

bool cpu_supports(Isa isa);
const KernelTable& table_for(Isa isa);
const KernelTable& active();
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  return active().sum_sq_diff(a.data(), b.data(), a.size());
}

inline void matern32(std::span<const double> dist, double inv_range, double variance,
                     std::span<double> out) {
  active().matern32(dist.data(), dist.size(), inv_range, variance, out.data());
}

}  // namespace ridgeem::kernels
