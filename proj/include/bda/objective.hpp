#pragma once

#include <span>
#include <vector>

#include "bda/dataio.hpp"
#include "bda/model.hpp"

namespace bda {

// Sum of xi*(-alpha_j) over the listed columns; +inf if any is infeasible.
inline double conjugate_sum(const LossSpec& loss, std::span<const double> labels,
                            std::span<const std::size_t> columns, std::span<const double> alpha) {
  double s = 0.0;
  for (std::size_t p = 0; p < columns.size(); ++p) s += conjugate(loss, labels[columns[p]], alpha[p]);
  return s;
}

// f(alpha) = ||X alpha||^2 / 2 + sum_i xi*(-alpha_i), evaluated from scratch.
inline double dual_objective(const SparseColumnMatrix& X, std::span<const double> labels, const LossSpec& loss,
                             std::span<const double> alpha) {
  double conj = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) conj += conjugate(loss, labels[i], alpha[i]);
  if (conj == kInf) return kInf;
  return reg_conj_value(X.times(alpha)) + conj;
}

// f^P(w) = ||w||^2 / 2 + sum_i xi(x_i^T w). With the squared-L2 regularizer
// the primal point associated with alpha is w = v = X alpha.
inline double primal_objective(std::span<const double> w, const SparseColumnMatrix& X,
                               std::span<const double> labels, const LossSpec& loss) {
  double s = 0.0;
  for (std::size_t i = 0; i < X.n_cols(); ++i) s += primal_loss(loss, labels[i], dot(X.columns[i], w));
  return reg_conj_value(w) + s;
}

// Delta_t = grad g*(v)^T dv + sum xi*(-alpha - dalpha) - sum xi*(-alpha).
inline double compute_delta_t(std::span<const double> v, std::span<const double> dv, double conj_sum,
                              double conj_sum_new) {
  return dot(v, dv) + (conj_sum_new - conj_sum);
}

}  // namespace bda
