#pragma once

#include "ridgeem/errors.hpp"
#include "ridgeem/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace ridgeem::detail {

inline Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !llt.matrixLLT().diagonal().allFinite())
    throw ModelError(what + " is not positive definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Eigen::MatrixXd inverse_spd(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::Index d = llt.matrixLLT().rows();
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (inv + inv.transpose());
}

// Tr(A B) for symmetric A, B: the Frobenius inner product of the two arrays.
inline double trace_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return kernels::dot({a.data(), static_cast<std::size_t>(a.size())},
                      {b.data(), static_cast<std::size_t>(b.size())});
}

}  // namespace ridgeem::detail
