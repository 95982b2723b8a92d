#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bda/dataio.hpp"
#include "bda/model.hpp"

namespace bda {

// One worker's share of the direction.
struct LocalDirection {
  std::vector<double> dalpha;  // aligned with the block
  std::vector<double> dv;      // X_k dalpha_k, length n
  double conj_old = 0.0;       // sum over the block of xi*(-alpha)
  double conj_new = 0.0;       // sum over the block of xi*(-alpha - dalpha)
};

// Random-permuted cyclic coordinate descent on the worker's block of the
// quadratic model
//   grad^T d + a1/2 ||X_k d||^2 + a2/2 ||d||^2 + sum xi*(-alpha - d),
// with the gradient frozen at the snapshot v. Every coordinate step is an
// exact 1-D minimization, so the model value never increases.
inline LocalDirection local_subproblem_rpcd(const SparseColumnMatrix& X, std::span<const double> labels,
                                            const LossSpec& loss, std::span<const std::size_t> block,
                                            std::span<const double> alpha_block, std::span<const double> v,
                                            double a1, double a2, int epochs, std::mt19937_64& rng,
                                            std::span<const double> col_sq_norm = {}) {
  LocalDirection out;
  out.dalpha.assign(block.size(), 0.0);
  out.dv.assign(X.n_rows, 0.0);
  std::vector<double> cur(alpha_block.begin(), alpha_block.end());
  std::vector<std::size_t> order(block.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t p : order) {
      const std::size_t j = block[p];
      const auto& col = X.columns[j];
      double xv = 0.0, xdv = 0.0;
      for (const auto& en : col) {
        xv += en.value * v[en.row];
        xdv += en.value * out.dv[en.row];
      }
      const double sq = col_sq_norm.empty() ? squared_norm(col) : col_sq_norm[j];
      const double grad = xv + a1 * xdv + a2 * (cur[p] - alpha_block[p]);
      const double hess = a1 * sq + a2;
      const double next = coordinate_solve(loss, labels[j], cur[p], grad, hess);
      const double step = next - cur[p];
      if (step != 0.0) {
        axpy(step, col, out.dv);
        cur[p] = next;
      }
    }
  }
  for (std::size_t p = 0; p < block.size(); ++p) {
    out.dalpha[p] = cur[p] - alpha_block[p];
    out.conj_old += conjugate(loss, labels[block[p]], alpha_block[p]);
    out.conj_new += conjugate(loss, labels[block[p]], cur[p]);
  }
  return out;
}

// Value of the block model at dalpha (relative to its value at 0), for
// measuring how well the sub-problem was solved.
inline double local_model_value(const SparseColumnMatrix& X, std::span<const double> labels, const LossSpec& loss,
                                std::span<const std::size_t> block, std::span<const double> alpha_block,
                                std::span<const double> v, double a1, double a2,
                                std::span<const double> dalpha) {
  std::vector<double> dv(X.n_rows, 0.0);
  double lin = 0.0, sq = 0.0, conj = 0.0;
  for (std::size_t p = 0; p < block.size(); ++p) {
    const auto& col = X.columns[block[p]];
    axpy(dalpha[p], col, dv);
    lin += dot(col, v) * dalpha[p];
    sq += dalpha[p] * dalpha[p];
    const double y = labels[block[p]];
    conj += conjugate(loss, y, alpha_block[p] + dalpha[p]) - conjugate(loss, y, alpha_block[p]);
  }
  return lin + 0.5 * a1 * squared_norm(dv) + 0.5 * a2 * sq + conj;
}

}  // namespace bda
