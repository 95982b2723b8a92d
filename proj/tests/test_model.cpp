#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bda/model.hpp"
#include "bda/oracle.hpp"

using namespace bda;

namespace {

LossSpec spec(LossKind k, double C = 1.0, double eps = 0.0) { return {k, C, eps}; }

// sup_z (u z - xi(z)) by ternary search; the objective is concave in z.
double legendre(const LossSpec& s, double y, double u) {
  double lo = -60.0, hi = 60.0;
  auto f = [&](double z) { return u * z - primal_loss(s, y, z); };
  for (int it = 0; it < 300; ++it) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (f(m1) < f(m2)) lo = m1; else hi = m2;
  }
  return f(0.5 * (lo + hi));
}

double coord_obj(const LossSpec& s, double y, double a_old, double g, double h, double a) {
  const double d = a - a_old;
  return g * d + 0.5 * h * d * d + conjugate(s, y, a);
}

}  // namespace

TEST(PrimalLoss, SpecExamples) {
  EXPECT_EQ(primal_loss(spec(LossKind::l1_svm), 1, 1), 0.0);
  EXPECT_NEAR(primal_loss(spec(LossKind::logistic), 1, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(primal_loss(spec(LossKind::svr, 2.0, 0.5), 1, 2), 1.0, 1e-15);
}

TEST(PrimalLoss, AllKindsByHand) {
  EXPECT_DOUBLE_EQ(primal_loss(spec(LossKind::l1_svm, 2), -1, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(primal_loss(spec(LossKind::l2_svm, 2), 1, -1), 8.0);
  EXPECT_DOUBLE_EQ(primal_loss(spec(LossKind::l2_svr, 1, 0.5), 0, 2), 2.25);
  EXPECT_DOUBLE_EQ(primal_loss(spec(LossKind::least_squares, 3), 1, 3), 12.0);
  // Large margins must not overflow.
  EXPECT_NEAR(primal_loss(spec(LossKind::logistic), 1, -800), 800.0, 1e-9);
  EXPECT_GE(primal_loss(spec(LossKind::logistic), 1, 800), 0.0);
  EXPECT_NEAR(primal_loss(spec(LossKind::logistic), 1, 30), std::exp(-30.0), 1e-20);
}

TEST(Conjugate, SpecExamples) {
  EXPECT_EQ(conjugate(spec(LossKind::l1_svm), 1, 0), 0.0);
  EXPECT_EQ(conjugate(spec(LossKind::l1_svm), 1, 1.5), kInf);
  EXPECT_NEAR(conjugate(spec(LossKind::logistic), 1, 0.5), -std::log(2.0), 1e-15);
}

TEST(Conjugate, ZeroAtOriginForAllLosses) {
  for (LossKind k : kAllLosses)
    for (double y : {-1.0, 1.0}) EXPECT_EQ(conjugate(spec(k, 1.7, 0.2), y, 0.0), 0.0) << to_string(k);
}

TEST(Conjugate, MatchesNumericalLegendreTransform) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (LossKind k : kAllLosses) {
    for (int t = 0; t < 40; ++t) {
      const auto s = spec(k, 0.5 + u(rng), 0.3 * u(rng));
      const double y = s.is_classification() ? (u(rng) < 0.5 ? -1.0 : 1.0) : 2.0 * u(rng) - 1.0;
      const auto box = dual_interval(s, y);
      const double lo = std::max(box.lo, -2.0 * s.C), hi = std::min(box.hi, 2.0 * s.C);
      const double a = lo + (0.05 + 0.9 * u(rng)) * (hi - lo);
      EXPECT_NEAR(conjugate(s, y, a), legendre(s, y, -a), 1e-6) << to_string(k) << " a=" << a;
    }
  }
}

TEST(DualInterval, SpecExamples) {
  const auto a = dual_interval(spec(LossKind::l1_svm), -1);
  EXPECT_EQ(a.lo, -1.0);
  EXPECT_EQ(a.hi, 0.0);
  const auto b = dual_interval(spec(LossKind::svr, 3), 0.4);
  EXPECT_EQ(b.lo, -3.0);
  EXPECT_EQ(b.hi, 3.0);
  const auto c = dual_interval(spec(LossKind::least_squares), 2);
  EXPECT_EQ(c.lo, -kInf);
  EXPECT_EQ(c.hi, kInf);
  for (LossKind k : kAllLosses)
    for (double y : {-1.0, 1.0}) EXPECT_TRUE(dual_interval(spec(k), y).contains(0.0));
}

TEST(RegConj, ValueAndGradient) {
  std::vector<double> zero(3, 0.0), v{3.0, 4.0};
  EXPECT_EQ(reg_conj_value(zero), 0.0);
  EXPECT_EQ(reg_conj_grad(zero), zero);
  EXPECT_EQ(reg_conj_value(v), 12.5);
  EXPECT_EQ(reg_conj_grad(v), v);
}

TEST(RegConj, ValueIsIntegralOfGradientAlongRay) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> v(6);
  for (auto& x : v) x = g(rng);
  // Simpson's rule on t -> grad(t v) . v over [0, 1].
  const int n = 100;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    std::vector<double> tv(v);
    for (auto& x : tv) x *= t;
    const auto gr = reg_conj_grad(tv);
    double d = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) d += gr[j] * v[j];
    integral += (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0)) * d;
  }
  integral /= 3.0 * n;
  EXPECT_NEAR(reg_conj_value(v), integral, 1e-8);
}

TEST(CoordinateSolve, SpecExamples) {
  EXPECT_EQ(coordinate_solve(spec(LossKind::l1_svm), 1, 0, 1, 1), 0.0);
  EXPECT_EQ(coordinate_solve(spec(LossKind::l1_svm), 1, 0, 0, 1), 1.0);
  const auto lg = spec(LossKind::logistic);
  const double a = coordinate_solve(lg, 1, 0.5, 0, 1);
  const double deriv = (a - 0.5) + std::log(a / (1.0 - a));
  EXPECT_LE(std::abs(deriv), 1e-10);
}

TEST(CoordinateSolve, LogisticMatchesGoldenSection) {
  const auto lg = spec(LossKind::logistic);
  double lo = 1e-12, hi = 1.0 - 1e-12;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto f = [&](double b) { return coord_obj(lg, 1, 0.5, 0, 1, b); };
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (f(m1) < f(m2)) hi = m2; else lo = m1;
  }
  EXPECT_NEAR(coordinate_solve(lg, 1, 0.5, 0, 1), 0.5 * (lo + hi), 1e-7);
}

TEST(CoordinateSolve, ClosedFormsByHand) {
  // L2-SVM, C = 1: minimize -0.5 d + d^2/2 + (-a + a^2/4) from a_old = 0.
  // d/da: -0.5 + a - 1 + a/2 = 0 -> a = 1.
  EXPECT_NEAR(coordinate_solve(spec(LossKind::l2_svm), 1, 0, -0.5, 1), 1.0, 1e-15);
  // Least squares, y = 2, C = 0.5: minimize g a + a^2/2 - 2a + a^2/2 with g = 0 -> a = 1.
  EXPECT_NEAR(coordinate_solve(spec(LossKind::least_squares, 0.5), 2, 0, 0, 1), 1.0, 1e-15);
  // SVR inside the dead zone of eps |a| stays at zero.
  EXPECT_EQ(coordinate_solve(spec(LossKind::svr, 1, 0.5), 0.2, 0, 0.1, 1), 0.0);
  // SVR clipped at C.
  EXPECT_EQ(coordinate_solve(spec(LossKind::svr, 1, 0.1), 5, 0, 0, 1), 1.0);
}

TEST(CoordinateSolve, RejectsNonPositiveCurvature) {
  EXPECT_THROW(coordinate_solve(spec(LossKind::l1_svm), 1, 0, 0, 0), ContractError);
  EXPECT_THROW(coordinate_solve(spec(LossKind::l2_svm), 1, 0, 0, -1), ContractError);
  EXPECT_NO_THROW(coordinate_solve(spec(LossKind::l2_svm), 1, 0, 0, 0));
}

TEST(CoordinateSolve, BeatsFineGridOnRandomInstances) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (LossKind k : kAllLosses) {
    for (int t = 0; t < 200; ++t) {
      const auto s = spec(k, 0.1 + 2 * u(rng), 0.5 * u(rng));
      const double y = s.is_classification() ? (u(rng) < 0.5 ? -1.0 : 1.0) : 4 * u(rng) - 2;
      const auto box = dual_interval(s, y);
      const double lo = std::max(box.lo, -10 * s.C), hi = std::min(box.hi, 10 * s.C);
      const double a_old = lo + (hi - lo) * u(rng);
      const double g = 4 * u(rng) - 2, h = 0.05 + 3 * u(rng);
      const double a = coordinate_solve(s, y, a_old, g, h);
      ASSERT_TRUE(box.contains(a));
      const double f = coord_obj(s, y, a_old, g, h, a);
      for (double x = lo; x <= hi; x += 1e-4) ASSERT_LE(f, coord_obj(s, y, a_old, g, h, x) + 1e-8) << to_string(k);
    }
  }
}

TEST(Calculus, FenchelYoungInequality) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (LossKind k : kAllLosses) {
    for (int t = 0; t < 1000; ++t) {
      const auto s = spec(k, 0.1 + 3 * u(rng), 0.5 * u(rng));
      const double y = s.is_classification() ? (u(rng) < 0.5 ? -1.0 : 1.0) : 4 * u(rng) - 2;
      const auto box = dual_interval(s, y);
      const double lo = std::max(box.lo, -10 * s.C), hi = std::min(box.hi, 10 * s.C);
      const double a = lo + (hi - lo) * u(rng);
      const double z = 10 * u(rng) - 5;
      EXPECT_GE(primal_loss(s, y, z) + conjugate(s, y, a) + a * z, -1e-9);
    }
  }
}

TEST(Calculus, ConjugateConvexAlongInterval) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (LossKind k : kAllLosses) {
    const auto s = spec(k, 1.3, 0.2);
    for (int t = 0; t < 500; ++t) {
      const double y = s.is_classification() ? 1.0 : 0.7;
      const auto box = dual_interval(s, y);
      const double lo = std::max(box.lo, -5.0), hi = std::min(box.hi, 5.0);
      const double p = lo + (hi - lo) * u(rng), q = lo + (hi - lo) * u(rng);
      EXPECT_LE(conjugate(s, y, 0.5 * (p + q)), 0.5 * (conjugate(s, y, p) + conjugate(s, y, q)) + 1e-12);
    }
  }
}

TEST(Calculus, LogisticConjugateDerivative) {
  const auto s = spec(LossKind::logistic, 1.5);
  for (double y : {-1.0, 1.0}) {
    for (double b = 0.05; b < 1.45; b += 0.1) {
      const double a = y * b;
      const auto fd = finite_diff_grad([&](std::span<const double> p) { return conjugate(s, y, p[0]); },
                                       std::span<const double>(&a, 1));
      ASSERT_FALSE(fd.skipped[0]);
      EXPECT_NEAR(fd.grad[0], y * std::log(b / (s.C - b)), 1e-5);
      EXPECT_NEAR(fd.grad[0], conjugate_derivative(s, y, a), 1e-5);
    }
  }
}

TEST(LossSpec, ValidationParsingAndJson) {
  EXPECT_THROW(spec(LossKind::l1_svm, 0).validate(), ConfigError);
  EXPECT_THROW(spec(LossKind::svr, 1, -1).validate(), ConfigError);
  EXPECT_THROW(parse_loss_kind("hinge2"), ConfigError);
  for (LossKind k : kAllLosses) EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  const LossSpec s{LossKind::svr, 2.5, 0.1};
  const auto j = to_json(s);
  EXPECT_EQ(j.at("loss"), "svr");
  const auto back = loss_from_json(j);
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.C, s.C);
  EXPECT_EQ(back.eps, s.eps);
}

TEST(LossSpec, LabelValidation) {
  std::vector<double> good{1, -1, 1}, bad{1, 0.5};
  EXPECT_NO_THROW(validate_labels(spec(LossKind::logistic), good));
  EXPECT_THROW(validate_labels(spec(LossKind::l1_svm), bad), ConfigError);
  EXPECT_NO_THROW(validate_labels(spec(LossKind::svr), bad));
}

TEST(LossSpec, DiagnosticConstants) {
  const auto c = loss_constants(spec(LossKind::logistic, 2));
  ASSERT_TRUE(c.rho && c.mu);
  EXPECT_DOUBLE_EQ(*c.rho, 0.5);
  EXPECT_DOUBLE_EQ(*c.mu, 1.0 / (2.0 * *c.rho));
  EXPECT_DOUBLE_EQ(*loss_constants(spec(LossKind::l1_svm, 3)).lipschitz, 3.0);
}
