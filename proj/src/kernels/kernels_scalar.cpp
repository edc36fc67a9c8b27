#include "ridgeem/kernels.hpp"

#include <cmath>

namespace ridgeem::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

void matern32(const double* dist, std::size_t n, double inv_range, double variance, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double u = dist[i] * inv_range;
    out[i] = variance * (1.0 + u) * std::exp(-u);
  }
}

}  // namespace ridgeem::kernels::scalar
