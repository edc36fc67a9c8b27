#include "ridgeem/optimize.hpp"

#include "ridgeem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace ridgeem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return (project(x - g, lo, hi) - x).lpNorm<Eigen::Infinity>();
}

struct Pair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// Two-loop recursion restricted to the free coordinates.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<Pair>& hist,
                                const Eigen::Array<bool, Eigen::Dynamic, 1>& free) {
  Eigen::VectorXd q = free.select(g, 0.0);
  std::vector<double> a(hist.size());
  for (std::size_t k = hist.size(); k-- > 0;) {
    a[k] = hist[k].rho * hist[k].s.dot(q);
    q -= a[k] * hist[k].y;
    q = free.select(q, 0.0);
  }
  if (!hist.empty()) {
    const Pair& last = hist.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double b = hist[k].rho * hist[k].y.dot(q);
    q += (a[k] - b) * hist[k].s;
    q = free.select(q, 0.0);
  }
  return -q;
}

}  // namespace

Eigen::VectorXd finite_diff_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                     double rel_step, const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  Eigen::VectorXd probe = x;
  double f0 = std::numeric_limits<double>::quiet_NaN();
  auto eval = [&](Eigen::Index i) {
    const double v = objective(probe);
    if (!std::isfinite(v))
      throw NumericalError("non-finite objective while differencing coordinate " +
                           std::to_string(i));
    return v;
  };
  auto center = [&](Eigen::Index i) {
    if (std::isnan(f0)) {
      probe = x;
      f0 = eval(i);
    }
    return f0;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = rel_step * std::max(std::abs(x(i)), 1.0);
    const bool room_up = x(i) + h <= upper(i);
    const bool room_down = x(i) - h >= lower(i);
    if (room_up && room_down) {
      probe = x;
      probe(i) = x(i) + h;
      const double fp = eval(i);
      probe(i) = x(i) - h;
      const double fm = eval(i);
      g(i) = (fp - fm) / (2.0 * h);
    } else if (room_up) {
      const double fc = center(i);
      probe = x;
      probe(i) = x(i) + h;
      g(i) = (eval(i) - fc) / h;
    } else if (room_down) {
      const double fc = center(i);
      probe = x;
      probe(i) = x(i) - h;
      g(i) = (fc - eval(i)) / h;
    } else {
      // box narrower than the step: difference across the whole interval
      const double span = upper(i) - lower(i);
      if (!(span > 0.0)) {
        g(i) = 0.0;
        continue;
      }
      probe = x;
      probe(i) = upper(i);
      const double fp = eval(i);
      probe(i) = lower(i);
      g(i) = (fp - eval(i)) / span;
    }
  }
  return g;
}

Eigen::VectorXd finite_diff_gradient(const Objective& objective, const Eigen::VectorXd& x,
                                     double rel_step) {
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(x.size(), -kInf);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(x.size(), kInf);
  return finite_diff_gradient(objective, x, rel_step, lo, hi);
}

OptResult minimize_bounded(const BoundedProblem& p, const OptOptions& opts) {
  const Eigen::Index n = p.dim();
  if (n < 1 || p.lower.size() != n || p.upper.size() != n)
    throw std::invalid_argument("bounded problem dimensions disagree");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(p.lower(i) < p.upper(i)))
      throw std::invalid_argument("lower bound must be below upper bound");
    if (!(p.lower(i) <= p.x0(i) && p.x0(i) <= p.upper(i)))
      throw std::invalid_argument("start point lies outside the box");
  }
  if (opts.history_size < 1) throw std::invalid_argument("history size must be positive");

  OptResult res;
  auto f_eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    return p.objective(x);
  };
  auto g_eval = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (p.gradient) return p.gradient(x);
    const Objective counted = [&](const Eigen::VectorXd& z) { return f_eval(z); };
    return finite_diff_gradient(counted, x, opts.rel_step, p.lower, p.upper);
  };

  Eigen::VectorXd x = p.x0;
  double f = f_eval(x);
  if (!std::isfinite(f)) throw std::invalid_argument("objective is not finite at the start point");
  res.x_opt = x;
  res.f_opt = f;
  if (opts.on_iterate) opts.on_iterate(x, f);

  Eigen::VectorXd g;
  try {
    g = g_eval(x);
  } catch (const NumericalError&) {
    res.grad_norm = kInf;
    return res;
  }

  std::deque<Pair> hist;
  constexpr double c1 = 1e-4;
  constexpr int kMaxBacktracks = 30;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    res.grad_norm = projected_gradient_norm(x, g, p.lower, p.upper);
    if (res.grad_norm < opts.tol) {
      res.converged = true;
      break;
    }
    Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
    for (Eigen::Index i = 0; i < n; ++i)
      free(i) = !((x(i) <= p.lower(i) && g(i) > 0.0) || (x(i) >= p.upper(i) && g(i) < 0.0));

    Eigen::VectorXd dir = lbfgs_direction(g, hist, free);
    if (!(g.dot(dir) < 0.0) || !dir.allFinite()) {
      hist.clear();
      dir = free.select(-g, 0.0);
    }
    double t = 1.0;
    if (hist.empty()) t = std::min(1.0, 1.0 / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300));

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = kInf;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_new = project(x + t * dir, p.lower, p.upper);
      const Eigen::VectorXd step = x_new - x;
      if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
      f_new = f_eval(x_new);
      if (std::isfinite(f_new) && f_new <= f + c1 * g.dot(step)) {
        accepted = true;
        break;
      }
      // predicted decrease below the rounding level of f: take any non-increasing step
      if (-g.dot(step) <= 1e-14 * std::abs(f)) {
        accepted = std::isfinite(f_new) && f_new <= f;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (hist.empty()) break;
      hist.clear();  // retry along steepest descent before giving up
      continue;
    }

    Eigen::VectorXd g_new;
    try {
      g_new = g_eval(x_new);
    } catch (const NumericalError&) {
      x = x_new;
      f = f_new;
      res.x_opt = x;
      res.f_opt = f;
      res.iterations = iter + 1;
      if (opts.on_iterate) opts.on_iterate(x, f);
      res.grad_norm = kInf;
      return res;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * y.squaredNorm() && sy > 0.0) {
      hist.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(hist.size()) > opts.history_size) hist.pop_front();
    }
    x = x_new;
    f = f_new;
    g = g_new;
    res.iterations = iter + 1;
    if (opts.on_iterate) opts.on_iterate(x, f);
  }
  res.x_opt = x;
  res.f_opt = f;
  res.grad_norm = projected_gradient_norm(x, g, p.lower, p.upper);
  if (res.grad_norm < opts.tol) res.converged = true;
  return res;
}

}  // namespace ridgeem
