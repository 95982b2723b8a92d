#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bda/error.hpp"

namespace bda {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class LossKind { l1_svm, l2_svm, logistic, svr, l2_svr, least_squares };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::l1_svm: return "l1-svm";
    case LossKind::l2_svm: return "l2-svm";
    case LossKind::logistic: return "logistic";
    case LossKind::svr: return "svr";
    case LossKind::l2_svr: return "l2-svr";
    case LossKind::least_squares: return "lsq";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "l1-svm" || s == "hinge") return LossKind::l1_svm;
  if (s == "l2-svm" || s == "squared-hinge") return LossKind::l2_svm;
  if (s == "logistic") return LossKind::logistic;
  if (s == "svr") return LossKind::svr;
  if (s == "l2-svr") return LossKind::l2_svr;
  if (s == "lsq" || s == "least-squares") return LossKind::least_squares;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

inline constexpr LossKind kAllLosses[] = {LossKind::l1_svm, LossKind::l2_svm,       LossKind::logistic,
                                          LossKind::svr,    LossKind::l2_svr,       LossKind::least_squares};

// Loss family and its parameters. eps is the SVR insensitivity and is ignored
// by the other kinds.
struct LossSpec {
  LossKind kind = LossKind::l1_svm;
  double C = 1.0;
  double eps = 0.0;

  void validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("loss: C must be positive");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("loss: eps must be non-negative");
  }

  bool is_classification() const {
    return kind == LossKind::l1_svm || kind == LossKind::l2_svm || kind == LossKind::logistic;
  }
  bool uses_eps() const { return kind == LossKind::svr || kind == LossKind::l2_svr; }
  // The dual objective is a quadratic on each sign-preserving segment.
  bool has_quadratic_dual() const { return kind != LossKind::logistic; }
};

inline nlohmann::json to_json(const LossSpec& s) {
  return nlohmann::json{{"loss", std::string(to_string(s.kind))}, {"C", s.C}, {"eps", s.eps}};
}

inline LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec s{parse_loss_kind(j.at("loss").get<std::string>()), j.at("C").get<double>(), j.value("eps", 0.0)};
  s.validate();
  return s;
}

// g(w) = ||w||^2 / 2, the only regularizer shipped. sigma is its strong
// convexity modulus.
struct RegularizerSpec {
  double sigma = 1.0;
};

inline double reg_conj_value(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return 0.5 * s;
}

inline std::vector<double> reg_conj_grad(std::span<const double> v) { return {v.begin(), v.end()}; }

// Feasible interval of one dual coordinate (in raw alpha, label already folded).
struct DualInterval {
  double lo;
  double hi;

  bool contains(double a) const { return a >= lo && a <= hi; }
  double project(double a) const { return std::clamp(a, lo, hi); }
};

inline DualInterval dual_interval(const LossSpec& s, double y) {
  switch (s.kind) {
    case LossKind::l1_svm:
    case LossKind::logistic:
      return y > 0 ? DualInterval{0.0, s.C} : DualInterval{-s.C, 0.0};
    case LossKind::l2_svm:
      return y > 0 ? DualInterval{0.0, kInf} : DualInterval{-kInf, 0.0};
    case LossKind::svr:
      return {-s.C, s.C};
    case LossKind::l2_svr:
    case LossKind::least_squares:
      return {-kInf, kInf};
  }
  return {0.0, 0.0};
}

// xi(z) for one instance with label / target y.
inline double primal_loss(const LossSpec& s, double y, double z) {
  switch (s.kind) {
    case LossKind::l1_svm: return s.C * std::max(1.0 - y * z, 0.0);
    case LossKind::l2_svm: {
      double m = std::max(1.0 - y * z, 0.0);
      return s.C * m * m;
    }
    case LossKind::logistic: {
      double t = -y * z;
      return s.C * (t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
    }
    case LossKind::svr: return s.C * std::max(std::abs(z - y) - s.eps, 0.0);
    case LossKind::l2_svr: {
      double m = std::max(std::abs(z - y) - s.eps, 0.0);
      return s.C * m * m;
    }
    case LossKind::least_squares: return s.C * (z - y) * (z - y);
  }
  return 0.0;
}

// Everything except logistic has conjugate
//   xi*(-a) = lin * a + quad / 2 * a^2 + abs * |a|   on the dual interval.
struct QuadraticConjugate {
  double lin;
  double quad;
  double abs;
  DualInterval box;

  double value(double a) const {
    if (!box.contains(a)) return kInf;
    return lin * a + 0.5 * quad * a * a + abs * std::abs(a);
  }
};

inline QuadraticConjugate quadratic_conjugate(const LossSpec& s, double y) {
  const double q = 1.0 / (2.0 * s.C);
  switch (s.kind) {
    case LossKind::l1_svm: return {-y, 0.0, 0.0, dual_interval(s, y)};
    case LossKind::l2_svm: return {-y, q, 0.0, dual_interval(s, y)};
    case LossKind::svr: return {-y, 0.0, s.eps, dual_interval(s, y)};
    case LossKind::l2_svr: return {-y, q, s.eps, dual_interval(s, y)};
    case LossKind::least_squares: return {-y, q, 0.0, dual_interval(s, y)};
    case LossKind::logistic: break;
  }
  throw UnsupportedLossError("logistic conjugate is not quadratic");
}

namespace detail {

// b log(b / C), with 0 log 0 = 0.
inline double xlogx_over(double b, double C) { return b > 0.0 ? b * std::log(b / C) : 0.0; }

}  // namespace detail

// xi*(-a), +inf outside the dual interval. The logistic conjugate is
// normalized so that xi*(0) = 0, which makes f(0) = 0 for every loss.
inline double conjugate(const LossSpec& s, double y, double a) {
  if (s.kind == LossKind::logistic) {
    const DualInterval box = dual_interval(s, y);
    if (!box.contains(a)) return kInf;
    const double b = y * a;
    return detail::xlogx_over(b, s.C) + detail::xlogx_over(s.C - b, s.C);
  }
  return quadratic_conjugate(s, y).value(a);
}

// d/da xi*(-a) at an interior point (right derivative at the |a| kink).
inline double conjugate_derivative(const LossSpec& s, double y, double a) {
  if (s.kind == LossKind::logistic) {
    const double b = y * a;
    return y * std::log(b / (s.C - b));
  }
  const auto q = quadratic_conjugate(s, y);
  return q.lin + q.quad * a + q.abs * (a >= 0 ? 1.0 : -1.0);
}

// Lower bound on the strong convexity modulus of a -> xi*(-a) on its interval.
inline double conjugate_strong_convexity(const LossSpec& s) {
  switch (s.kind) {
    case LossKind::l2_svm:
    case LossKind::l2_svr:
    case LossKind::least_squares: return 1.0 / (2.0 * s.C);
    case LossKind::logistic: return 4.0 / s.C;
    default: return 0.0;
  }
}

// Diagnostic constants: rho (Lipschitz constant of xi') for smooth losses,
// L (Lipschitz constant of xi) for the non-smooth ones, mu = 1 / (2 rho).
struct LossConstants {
  std::optional<double> rho;
  std::optional<double> lipschitz;
  std::optional<double> mu;
};

inline LossConstants loss_constants(const LossSpec& s) {
  switch (s.kind) {
    case LossKind::l1_svm:
    case LossKind::svr: return {std::nullopt, s.C, std::nullopt};
    case LossKind::logistic: return {s.C / 4.0, std::nullopt, 2.0 / s.C};
    default: return {2.0 * s.C, std::nullopt, 1.0 / (4.0 * s.C)};
  }
}

inline void validate_labels(const LossSpec& s, std::span<const double> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(labels[i])) throw ConfigError("non-finite label at instance " + std::to_string(i));
    if (s.is_classification() && labels[i] != 1.0 && labels[i] != -1.0)
      throw ConfigError("loss " + std::string(to_string(s.kind)) + " needs labels in {-1,+1}; instance " +
                        std::to_string(i) + " has " + std::to_string(labels[i]));
  }
}

inline constexpr double kLogisticMargin = 1e-12;

namespace detail {

// Minimizes grad_q*(b - b_old) + hess_q/2*(b - b_old)^2 + b log b + (C-b) log(C-b)
// over [margin, C - margin], b = y * a. Newton with a maintained bracket.
inline double logistic_coordinate(double C, double b_old, double g, double h) {
  const double lo0 = kLogisticMargin, hi0 = C - kLogisticMargin;
  auto dphi = [&](double b) { return g + h * (b - b_old) + std::log(b / (C - b)); };
  if (dphi(lo0) >= 0.0) return lo0;
  if (dphi(hi0) <= 0.0) return hi0;

  double lo = lo0, hi = hi0;
  double b = std::clamp(b_old, lo0, hi0);
  if (b == lo0 || b == hi0) b = 0.5 * C;
  int newton_steps = 0;
  for (int it = 0; it < 200; ++it) {
    const double d = dphi(b);
    if (std::abs(d) <= 1e-12) return b;
    if (d < 0) lo = b; else hi = b;
    const double next = b - d / (h + C / (b * (C - b)));
    if (newton_steps < 20 && next > lo && next < hi) {
      ++newton_steps;
      b = next;
    } else {
      b = 0.5 * (lo + hi);
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return b;
  }
  return b;
}

}  // namespace detail

// Exact minimizer over the dual interval of
//   grad_q * d + hess_q / 2 * d^2 + xi*(-(a_old + d)),   returned as a_old + d.
// hess_q must be positive unless the conjugate itself is strongly convex.
inline double coordinate_solve(const LossSpec& s, double y, double a_old, double grad_q, double hess_q) {
  if (!(hess_q >= 0.0) || (hess_q == 0.0 && conjugate_strong_convexity(s) == 0.0))
    throw ContractError("coordinate_solve: hess_q must be positive, got " + std::to_string(hess_q));

  if (s.kind == LossKind::logistic)
    return y * detail::logistic_coordinate(s.C, std::clamp(y * a_old, 0.0, s.C), y * grad_q, hess_q);

  const auto q = quadratic_conjugate(s, y);
  const double H = hess_q + q.quad;
  double z = (hess_q * a_old - grad_q - q.lin) / H;
  if (q.abs > 0.0) {
    const double t = q.abs / H;
    z = z > t ? z - t : (z < -t ? z + t : 0.0);
  }
  return q.box.project(z);
}

}  // namespace bda
