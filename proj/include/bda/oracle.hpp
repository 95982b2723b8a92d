#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bda/dataio.hpp"
#include "bda/model.hpp"
#include "bda/objective.hpp"
#include "bda/solver.hpp"

namespace bda {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferenceResult {
  double fstar = 0.0;   // dual optimum
  double f_dual = 0.0;  // certified dual value
  double f_primal = 0.0;
  int iterations = 0;
};

// Dual optimum to a certified duality gap. Runs the single-worker solver
// until pocket f^P + f <= tol (1 + |f|) and returns the midpoint of the
// bracket [f, -f^P]. Gives up after max_iter iterations or once the gap has
// not improved for `patience` iterations.
//
// For L1-SVM and SVR the primal objective at w = X alpha is nonsmooth, so
// its error behaves like the square root of the dual error and the gap
// bottoms out between 1e-9 and 1e-7 relative; see certification_tol.
inline ReferenceResult reference_optimum(const SparseColumnMatrix& X, const LabelVector& labels,
                                         const LossSpec& loss, double tol = 1e-10, int max_iter = 200000,
                                         int local_epochs = 4, int patience = 500) {
  const Algo algo = loss.has_quadratic_dual() ? Algo::bda_exact_ls : Algo::bda_backtrack;
  SolverConfig cfg = make_config(algo, loss, 1);
  cfg.local_epochs = local_epochs;
  cfg.max_iter = max_iter;
  cfg.stop_eps = 0.0;
  Solver s(X, labels, loss, cfg);
  s.initialize();
  auto gap = [&] { return s.state().pocket_f_primal + s.state().f_dual; };
  double best = gap();
  int it = 0, since_best = 0;
  while (!(gap() <= tol * (1.0 + std::abs(s.state().f_dual)))) {
    if (it >= max_iter || since_best >= patience) {
      std::ostringstream msg;
      msg << "reference_optimum: gap " << gap() << " not certified at tol " << tol << " after " << it
          << " iterations";
      throw OracleError(msg.str());
    }
    s.step();
    ++it;
    if (gap() < best) {
      best = gap();
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  const auto& st = s.state();
  return {0.5 * (st.f_dual - st.pocket_f_primal), st.f_dual, st.pocket_f_primal, it};
}

// Certification tolerance that is attainable in double precision: 1e-10
// when the primal is smooth, 1e-6 for the hinge-type losses.
inline double certification_tol(const LossSpec& loss) {
  return (loss.kind == LossKind::l1_svm || loss.kind == LossKind::svr) ? 1e-6 : 1e-10;
}

struct BruteForceResult {
  std::vector<double> alpha;
  double fstar = 0.0;
  bool truncated = false;
};

// Grid search over the feasible box of a problem with at most three dual
// coordinates, zooming in around the best grid point until the spacing is
// at most `resolution`. Unbounded sides are cut at 10 C.
inline BruteForceResult brute_force_dual(const SparseColumnMatrix& X, const LabelVector& labels,
                                         const LossSpec& loss, double resolution = 1e-6) {
  const std::size_t N = X.n_cols();
  if (N == 0 || N > 3) throw ContractError("brute_force_dual: needs 1 to 3 instances");
  BruteForceResult res;
  std::vector<double> lo(N), hi(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto box = dual_interval(loss, labels[i]);
    lo[i] = std::max(box.lo, -10.0 * loss.C);
    hi[i] = std::min(box.hi, 10.0 * loss.C);
    if (lo[i] != box.lo || hi[i] != box.hi) res.truncated = true;
  }
  if (res.truncated) std::clog << "warning: brute_force_dual truncated an unbounded interval at 10*C\n";

  const std::size_t G = N == 1 ? 2001 : (N == 2 ? 81 : 33);
  const double margin = 4.0;
  std::vector<double> best(N, 0.0);
  double fbest = dual_objective(X, labels, loss, best);
  std::vector<double> a(N), step(N);
  for (int pass = 0;; ++pass) {
    double widest = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      step[i] = (hi[i] - lo[i]) / static_cast<double>(G - 1);
      widest = std::max(widest, step[i]);
    }
    std::size_t total = 1;
    for (std::size_t i = 0; i < N; ++i) total *= G;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t r = idx;
      for (std::size_t i = 0; i < N; ++i) {
        a[i] = std::min(hi[i], lo[i] + static_cast<double>(r % G) * step[i]);
        r /= G;
      }
      const double f = dual_objective(X, labels, loss, a);
      if (f < fbest) {
        fbest = f;
        best = a;
      }
    }
    if (pass >= 2 && widest <= resolution) break;
    for (std::size_t i = 0; i < N; ++i) {
      const auto box = dual_interval(loss, labels[i]);
      const double w = std::max(margin * step[i], resolution);
      lo[i] = std::max(box.lo, best[i] - w);
      hi[i] = std::min(box.hi, best[i] + w);
    }
  }
  res.alpha = best;
  res.fstar = fbest;
  return res;
}

struct FiniteDiffResult {
  std::vector<double> grad;
  std::vector<bool> skipped;  // the function was not finite within h of the point
};

// Central differences with step h = scale (1 + |x_i|).
inline FiniteDiffResult finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> x, double scale = 1e-6) {
  FiniteDiffResult out;
  out.grad.assign(x.size(), 0.0);
  out.skipped.assign(x.size(), false);
  std::vector<double> p(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = scale * (1.0 + std::abs(x[i]));
    p[i] = x[i] + h;
    const double fp = f(p);
    p[i] = x[i] - h;
    const double fm = f(p);
    p[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      out.skipped[i] = true;
      continue;
    }
    out.grad[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace bda
