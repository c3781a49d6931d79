#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "colortrigger/errors.hpp"
#include "colortrigger/window_affinity.hpp"

namespace colortrigger {

struct QpOptions {
  double tolerance = 1e-6;
  std::size_t max_iter = 10000;
};

/// min  lambda * w^T A w   s.t.  0 <= w <= 1,  sum(w) = budget.
struct QpProblem {
  AffinityMatrix affinity;
  double budget = 0.0;
  double lambda = 1.0;
};

struct QpSolution {
  Vector w;
  double objective = 0.0;
  /// Unit-step projected-gradient residual ||w - P(w - grad)||_inf at w.
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  /// False when max_iter was hit with the residual still above tolerance.
  /// The iterate is feasible either way.
  bool converged = true;
};

namespace detail {

inline constexpr double kProjectionSumTolerance = 1e-10;
inline constexpr int kProjectionMaxIter = 200;

inline void check_budget(double m, std::size_t n) {
  if (!std::isfinite(m) || m < 0.0 || m > static_cast<double>(n)) {
    throw error(errc::infeasible_budget,
                "budget " + std::to_string(m) + " outside [0, " + std::to_string(n) + "]");
  }
}

struct ClippedSum {
  double sum = 0.0;
  // Linear model of the sum around the evaluation point:
  // sum(mu) = saturated + free_v_sum - free_count * mu  between breakpoints.
  double free_v_sum = 0.0;
  std::size_t free_count = 0;
  std::size_t saturated = 0;
};

inline ClippedSum clipped_sum(std::span<const double> v, double mu) noexcept {
  ClippedSum out;
  for (double x : v) {
    const double y = x - mu;
    if (y >= 1.0) {
      out.sum += 1.0;
      ++out.saturated;
    } else if (y > 0.0) {
      out.sum += y;
      out.free_v_sum += x;
      ++out.free_count;
    }
  }
  return out;
}

// Projection without the budget check; `out` must not alias `v`.
//
// Bisection on mu, safeguarded with the exact root of the current linear
// piece: whenever that root falls inside the bracket it is tried first, which
// ends the search as soon as the bracket isolates the final piece.
inline void project_into(std::span<const double> v, double m, std::span<double> out) noexcept {
  const std::size_t n = v.size();
  if (m <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  if (m >= static_cast<double>(n)) {
    std::fill(out.begin(), out.end(), 1.0);
    return;
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  // sum(clip(v - lo)) = n >= m  and  sum(clip(v - hi)) = 0 <= m.
  double lo = *lo_it - 1.0;
  double hi = *hi_it;
  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < kProjectionMaxIter; ++it) {
    mu = 0.5 * (lo + hi);
    const ClippedSum at_mid = clipped_sum(v, mu);
    if (std::abs(at_mid.sum - m) <= kProjectionSumTolerance) break;
    if (at_mid.sum > m) {
      lo = mu;
    } else {
      hi = mu;
    }
    if (at_mid.free_count > 0) {
      const double root =
          (static_cast<double>(at_mid.saturated) + at_mid.free_v_sum - m) / static_cast<double>(at_mid.free_count);
      if (root > lo && root < hi) {
        const ClippedSum at_root = clipped_sum(v, root);
        if (std::abs(at_root.sum - m) <= kProjectionSumTolerance) {
          mu = root;
          break;
        }
        if (at_root.sum > m) {
          lo = root;
        } else {
          hi = root;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(v[i] - mu, 0.0, 1.0);
}

inline void multiply(const AffinityMatrix& a, std::span<const double> x, std::span<double> y) noexcept {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = dot(a.row(i), x);
}

inline double quadratic_form(const AffinityMatrix& a, std::span<const double> w) {
  std::vector<double> aw(w.size());
  multiply(a, w, aw);
  return dot(w, aw);
}

}  // namespace detail

/// Euclidean projection of `v` onto {w : 0 <= w <= 1, sum(w) = m}.
///
/// The solution is clip(v - mu, 0, 1) for the scalar mu at which the clipped
/// sum equals m; the clipped sum is non-increasing in mu, so mu is located by
/// bisection (stops at |sum - m| <= 1e-10 or after 200 halvings).
inline Vector project_box_simplex(std::span<const double> v, double m) {
  detail::check_budget(m, v.size());
  Vector out(v.size());
  detail::project_into(v, m, out);
  return out;
}

inline double max_row_sum(const AffinityMatrix& a) noexcept {
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) s += x;
    best = std::max(best, s);
  }
  return best;
}

namespace detail {

// Conjugate gradient on the face {w : w_i fixed for i not in `free_idx`,
// sum(w) constant}, started from a feasible w. Runs until the face optimum is
// reached or a box bound blocks; in the latter case the blocking coordinate is
// snapped to its bound.
struct FaceStep {
  std::size_t products = 0;
  bool hit_bound = false;
};

struct FaceWorkspace {
  std::vector<double> r, d, hd, d_full;
};

inline FaceStep face_conjugate_gradient(const AffinityMatrix& a, double lambda,
                                           const std::vector<std::size_t>& free_idx,
                                           std::span<const double> grad, std::span<double> w,
                                           double tolerance, FaceWorkspace& ws) {
  const std::size_t k = free_idx.size();
  FaceStep out;
  if (k < 2) return out;

  auto center = [](std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
  };

  auto& r = ws.r;
  auto& d = ws.d;
  auto& hd = ws.hd;
  auto& d_full = ws.d_full;
  r.resize(k);
  hd.resize(k);
  // Entries outside the face stay zero for the whole call.
  d_full.assign(a.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) r[i] = -grad[free_idx[i]];
  center(r);
  d = r;
  double rr = 0.0;
  for (double x : r) rr += x * x;

  for (std::size_t it = 0; it < k; ++it) {
    double r_inf = 0.0;
    for (double x : r) r_inf = std::max(r_inf, std::abs(x));
    if (r_inf <= 0.1 * tolerance) break;

    for (std::size_t i = 0; i < k; ++i) d_full[free_idx[i]] = d[i];
    for (std::size_t i = 0; i < k; ++i) hd[i] = 2.0 * lambda * dot(a.row(free_idx[i]), d_full);
    center(hd);
    ++out.products;

    double curvature = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      curvature += d[i] * hd[i];
      dd += d[i] * d[i];
    }

    // Largest step keeping the free coordinates inside [0, 1].
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t blocking = k;
    for (std::size_t i = 0; i < k; ++i) {
      const double wi = w[free_idx[i]];
      double room = std::numeric_limits<double>::infinity();
      if (d[i] > 0.0) {
        room = (1.0 - wi) / d[i];
      } else if (d[i] < 0.0) {
        room = -wi / d[i];
      }
      if (room < max_step) {
        max_step = room;
        blocking = i;
      }
    }

    const bool flat = curvature <= 1e-14 * dd;
    const double step = flat ? max_step : rr / curvature;
    if (step >= max_step) {
      for (std::size_t i = 0; i < k; ++i) w[free_idx[i]] += max_step * d[i];
      if (blocking < k) w[free_idx[blocking]] = d[blocking] > 0.0 ? 1.0 : 0.0;
      for (std::size_t i = 0; i < k; ++i) w[free_idx[i]] = std::clamp(w[free_idx[i]], 0.0, 1.0);
      out.hit_bound = true;
      break;
    }

    for (std::size_t i = 0; i < k; ++i) {
      w[free_idx[i]] += step * d[i];
      r[i] -= step * hd[i];
    }
    center(r);
    double rr_next = 0.0;
    for (double x : r) rr_next += x * x;
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < k; ++i) d[i] = r[i] + beta * d[i];
  }
  return out;
}

}  // namespace detail

/// Solves the diversity QP by gradient projection with face-restricted
/// conjugate gradient.
///
/// Cold start at (m/n) * 1. Each outer iteration takes one projected gradient
/// step of length 1 / (2 * lambda * B), where B is the largest row sum of the
/// non-negative affinity matrix (an upper bound on its spectral radius), then
/// minimizes over the face of coordinates strictly inside (0, 1) with CG until
/// a bound blocks. Stops once the unit-step residual ||w - P(w - grad)||_inf
/// falls to the tolerance. `iterations` counts gradient steps plus CG
/// products. The problem is convex because the affinity matrix is PSD.
inline QpSolution solve_qp(const QpProblem& problem, const QpOptions& options = {}) {
  const AffinityMatrix& a = problem.affinity;
  const std::size_t n = a.size();
  const double m = problem.budget;
  const double lambda = problem.lambda;
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw error(errc::invalid_config, "lambda must be positive, got " + std::to_string(lambda));
  }
  detail::check_budget(m, n);

  QpSolution sol;
  if (n == 0) return sol;
  if (m == 0.0 || m == static_cast<double>(n)) {
    // Single feasible point.
    sol.w.assign(n, m == 0.0 ? 0.0 : 1.0);
    sol.objective = lambda * detail::quadratic_form(a, sol.w);
    return sol;
  }

  const double bound = max_row_sum(a);
  const double step = 1.0 / (2.0 * lambda * bound);

  Vector w(n, m / static_cast<double>(n));
  Vector grad(n), trial(n), probe(n);
  std::vector<std::size_t> free_idx;
  free_idx.reserve(n);
  detail::FaceWorkspace workspace;

  auto residual_at = [&](const Vector& x) {
    detail::multiply(a, x, grad);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] *= 2.0 * lambda;
      trial[i] = x[i] - grad[i];
    }
    detail::project_into(trial, m, probe);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(x[i] - probe[i]));
    return r;
  };

  std::size_t it = 0;
  double residual = residual_at(w);
  while (residual > options.tolerance && it < options.max_iter) {
    for (std::size_t i = 0; i < n; ++i) trial[i] = w[i] - step * grad[i];
    detail::project_into(trial, m, w);
    ++it;

    // Shrink the face each time CG runs into a bound; only the projected
    // gradient step above releases coordinates from their bounds.
    for (;;) {
      detail::multiply(a, w, grad);
      for (double& g : grad) g *= 2.0 * lambda;
      free_idx.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] > 0.0 && w[i] < 1.0) free_idx.push_back(i);
      }
      const auto cg = detail::face_conjugate_gradient(a, lambda, free_idx, grad, w, options.tolerance, workspace);
      it += cg.products;
      if (!cg.hit_bound || it >= options.max_iter) break;
    }
    residual = residual_at(w);
  }

  // Re-project so the returned point is feasible regardless of how the loop ended.
  Vector final_w(n);
  detail::project_into(w, m, final_w);
  sol.w = std::move(final_w);
  sol.iterations = it;
  sol.kkt_residual = residual_at(sol.w);
  sol.converged = sol.kkt_residual <= options.tolerance;
  sol.objective = lambda * detail::quadratic_form(a, sol.w);
  return sol;
}

/// Weight of the newest frame (last component); 0 for an empty solution.
inline double current_score(const QpSolution& solution) noexcept {
  return solution.w.empty() ? 0.0 : solution.w.back();
}

/// Scores the newest frame of a window. A one-frame window has the single
/// feasible point w = (m), so s = min(1, m) without running the solver.
inline QpSolution score_window(const AffinityMatrix& affinity, double budget, double lambda,
                               const QpOptions& options = {}) {
  if (affinity.size() == 1) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw error(errc::invalid_config, "lambda must be positive, got " + std::to_string(lambda));
    }
    detail::check_budget(budget, 1);
    QpSolution sol;
    const double s = std::min(1.0, budget);
    sol.w = {s};
    sol.objective = lambda * affinity(0, 0) * s * s;
    return sol;
  }
  return solve_qp(QpProblem{affinity, budget, lambda}, options);
}

}  // namespace colortrigger
