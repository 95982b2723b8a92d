#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "bda/error.hpp"
#include "bda/model.hpp"

namespace bda {

// g*(v + eta dv) for g* = ||.||^2 / 2 from three cached inner products.
struct LineModel {
  double v_sq = 0.0;
  double v_dot_dv = 0.0;
  double dv_sq = 0.0;

  double reg_conj_at(double eta) const { return 0.5 * (v_sq + eta * eta * dv_sq + 2.0 * eta * v_dot_dv); }
};

struct LineSearchResult {
  double eta = 0.0;
  double f_new = 0.0;
  double conj_new = 0.0;
  int backtracks = 0;
};

// Armijo backtracking: the smallest i >= 0 with eta = beta^i and
//   f(alpha + eta dalpha) <= f_old + eta tau delta_t.
// conj_at(eta) returns sum xi*(-alpha - eta dalpha); in the distributed
// solver each call is one scalar reduction.
template <class ConjAt>
LineSearchResult backtracking_line_search(const LineModel& line, double f_old, double delta_t, double tau,
                                          double beta, int max_backtracks, ConjAt&& conj_at) {
  double eta = 1.0;
  for (int i = 0;; ++i) {
    const double conj = conj_at(eta);
    const double f = line.reg_conj_at(eta) + conj;
    if (f <= f_old + eta * tau * delta_t) return {eta, f, conj, i};
    if (i >= max_backtracks)
      throw LineSearchError("line search: no acceptable step after " + std::to_string(max_backtracks) +
                            " backtracks (delta_t = " + std::to_string(delta_t) + ")");
    eta *= beta;
  }
}

// Minimizer over [0,1] of f_old + eta * slope + eta^2 / 2 * curvature.
inline double exact_step(double slope, double curvature) {
  if (!(curvature > 0.0)) return slope < 0.0 ? 1.0 : 0.0;
  return std::clamp(-slope / curvature, 0.0, 1.0);
}

// Lower bound on any accepted backtracking step when the model is solved
// exactly, C1 the smallest eigenvalue of B and C2 the strong convexity of
// the model.
inline double step_size_lower_bound(double tau, double beta, double sigma, double c1, double c2, double xtx_norm) {
  if (!(xtx_norm > 0.0)) return 1.0;
  return std::min(1.0, beta * (1.0 - tau) * sigma * (c1 + c2) / xtx_norm);
}

// Matching bound on the number of backtracks, max(0, ceil(log_beta(...))).
inline double backtrack_ceiling(double tau, double beta, double sigma, double c1, double c2, double xtx_norm) {
  const double r = (1.0 - tau) * sigma * (c1 + c2) / xtx_norm;
  if (!(r > 0.0)) return kInf;
  return std::max(0.0, std::ceil(std::log(r) / std::log(beta)));
}

// Exact step along dalpha for losses whose dual is quadratic on the segment
// [alpha, alpha + dalpha]. Returns nullopt when a coordinate changes sign
// strictly (the eps|alpha| term of SVR then has a kink inside the segment).
inline std::optional<double> exact_line_search_quadratic(const LossSpec& loss, std::span<const double> labels,
                                                         std::span<const double> alpha,
                                                         std::span<const double> dalpha,
                                                         std::span<const double> v, std::span<const double> dv) {
  if (!loss.has_quadratic_dual())
    throw UnsupportedLossError("exact line search needs a quadratic dual; use backtracking for logistic");
  bool moved = false;
  double slope = 0.0, curvature = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (dalpha[i] == 0.0) continue;
    moved = true;
    const auto q = quadratic_conjugate(loss, labels[i]);
    const double a = alpha[i], b = alpha[i] + dalpha[i];
    if (q.abs > 0.0 && ((a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0))) return std::nullopt;
    const double side = (a > 0.0 || (a == 0.0 && b > 0.0)) ? 1.0 : -1.0;
    slope += (q.lin + q.quad * a + q.abs * side) * dalpha[i];
    curvature += q.quad * dalpha[i] * dalpha[i];
  }
  if (!moved) return 0.0;
  double v_dv = 0.0, dv_sq = 0.0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    v_dv += v[r] * dv[r];
    dv_sq += dv[r] * dv[r];
  }
  return exact_step(v_dv + slope, dv_sq + curvature);
}

}  // namespace bda
