#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bda/cluster.hpp"
#include "bda/dataio.hpp"
#include "bda/error.hpp"
#include "bda/line_search.hpp"
#include "bda/model.hpp"
#include "bda/objective.hpp"
#include "bda/subproblem.hpp"

namespace bda {

enum class Algo { bda_exact_ls, bda_backtrack, disdca_practical, dsvm_ave, prox_grad };

inline std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::bda_exact_ls: return "bda-exact-ls";
    case Algo::bda_backtrack: return "bda-backtrack";
    case Algo::disdca_practical: return "disdca";
    case Algo::dsvm_ave: return "dsvm-ave";
    case Algo::prox_grad: return "proxgrad";
  }
  return "?";
}

inline Algo parse_algo(std::string_view s) {
  if (s == "bda-exact-ls") return Algo::bda_exact_ls;
  if (s == "bda-backtrack") return Algo::bda_backtrack;
  if (s == "disdca" || s == "disdca-practical") return Algo::disdca_practical;
  if (s == "dsvm-ave") return Algo::dsvm_ave;
  if (s == "proxgrad" || s == "prox-grad") return Algo::prox_grad;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

enum class StepRule { exact, backtrack, fixed };

inline std::string_view to_string(StepRule r) {
  switch (r) {
    case StepRule::exact: return "exact";
    case StepRule::backtrack: return "backtrack";
    case StepRule::fixed: return "fixed";
  }
  return "?";
}

// Damping used by the block-diagonal method when the conjugate is not
// strongly convex (hinge-type losses).
inline double default_a2(const LossSpec& loss) {
  return (loss.kind == LossKind::l1_svm || loss.kind == LossKind::svr) ? 1e-3 : 0.0;
}

struct BaselineParams {
  double a1 = 1.0;
  double a2 = 0.0;
  StepRule rule = StepRule::backtrack;
  double fixed_eta = 1.0;
  double tau = 1e-2;
  double beta = 0.5;
};

// Model scaling and step rule of each algorithm:
//   bda-*     a1 = 1, damping only for hinge-type losses, exact or Armijo step
//   disdca    a1 = K, unit step
//   dsvm-ave  a1 = 1, step 1/K
//   proxgrad  a1 = 0, a2 = ||X^T X|| / sigma, Armijo step
inline BaselineParams baseline_config(Algo algo, std::size_t K, const LossSpec& loss,
                                      double xtx_norm = std::numeric_limits<double>::quiet_NaN()) {
  if (K == 0) throw ConfigError("K must be >= 1");
  BaselineParams p;
  switch (algo) {
    case Algo::bda_exact_ls:
      if (!loss.has_quadratic_dual())
        throw UnsupportedLossError("bda-exact-ls needs a quadratic dual; use bda-backtrack for logistic");
      p.a2 = default_a2(loss);
      p.rule = StepRule::exact;
      break;
    case Algo::bda_backtrack:
      p.a2 = default_a2(loss);
      p.rule = StepRule::backtrack;
      break;
    case Algo::disdca_practical:
      p.a1 = static_cast<double>(K);
      p.rule = StepRule::fixed;
      p.fixed_eta = 1.0;
      break;
    case Algo::dsvm_ave:
      p.rule = StepRule::fixed;
      p.fixed_eta = 1.0 / static_cast<double>(K);
      break;
    case Algo::prox_grad:
      if (!(xtx_norm > 0.0)) throw ConfigError("proxgrad needs a positive estimate of ||X^T X||");
      p.a1 = 0.0;
      p.a2 = xtx_norm / RegularizerSpec{}.sigma;
      p.rule = StepRule::backtrack;
      break;
  }
  return p;
}

struct SolverConfig {
  Algo algo = Algo::bda_backtrack;
  std::size_t K = 1;
  double a1 = 1.0;
  double a2 = 0.0;
  StepRule step_rule = StepRule::backtrack;
  double fixed_eta = 1.0;
  double tau = 1e-2;
  double beta = 0.5;
  int local_epochs = 1;
  double stop_eps = 1e-3;
  int max_iter = 1000;
  int max_backtracks = 50;
  std::uint64_t seed = 1;
  bool shuffle = false;
  // Recompute X alpha and check replicas every this many iterations (0 = off).
  int consistency_check_every = 0;
  Scheduler scheduler = Scheduler::sequential;
  // Cost model for the simulated-time column.
  double latency = 1e-4;
  double bandwidth = 1e9;

  void validate() const {
    if (K == 0) throw ConfigError("K must be >= 1");
    if (!(a1 >= 0.0) || !(a2 >= 0.0) || !(a1 + a2 > 0.0))
      throw ConfigError("a1, a2 must be non-negative and not both zero");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0,1)");
    if (local_epochs < 0) throw ConfigError("local_epochs must be >= 0");
    if (!(stop_eps >= 0.0)) throw ConfigError("stop_eps must be >= 0");
    if (max_iter < 0) throw ConfigError("max_iter must be >= 0");
    if (max_backtracks < 0) throw ConfigError("max_backtracks must be >= 0");
    if (step_rule == StepRule::fixed && !(fixed_eta > 0.0 && fixed_eta <= 1.0))
      throw ConfigError("fixed step must lie in (0,1]");
    if (!(latency >= 0.0) || !(bandwidth > 0.0)) throw ConfigError("bad latency/bandwidth");
  }
};

inline SolverConfig make_config(Algo algo, const LossSpec& loss, std::size_t K,
                                double xtx_norm = std::numeric_limits<double>::quiet_NaN()) {
  const BaselineParams p = baseline_config(algo, K, loss, xtx_norm);
  SolverConfig c;
  c.algo = algo;
  c.K = K;
  c.a1 = p.a1;
  c.a2 = p.a2;
  c.step_rule = p.rule;
  c.fixed_eta = p.fixed_eta;
  c.tau = p.tau;
  c.beta = p.beta;
  return c;
}

inline nlohmann::json to_json(const SolverConfig& c) {
  return nlohmann::json{{"algo", std::string(to_string(c.algo))},
                        {"K", c.K},
                        {"a1", c.a1},
                        {"a2", c.a2},
                        {"step_rule", std::string(to_string(c.step_rule))},
                        {"fixed_eta", c.fixed_eta},
                        {"tau", c.tau},
                        {"beta", c.beta},
                        {"local_epochs", c.local_epochs},
                        {"stop_eps", c.stop_eps},
                        {"max_iter", c.max_iter},
                        {"max_backtracks", c.max_backtracks},
                        {"seed", c.seed},
                        {"shuffle", c.shuffle},
                        {"latency", c.latency},
                        {"bandwidth", c.bandwidth}};
}

// Dual iterate distributed over workers: alpha[k] is aligned with worker k's
// block, v[k] is worker k's replica of X alpha.
struct IterateState {
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> v;
  double f_dual = 0.0;
  double conj_sum = 0.0;
  double f_primal = kInf;
  double pocket_f_primal = kInf;
  std::vector<double> pocket_w;

  const std::vector<double>& shared_v() const { return v.front(); }

  std::vector<double> gather_alpha(const Partition& p) const {
    std::vector<double> out(p.assignment.size(), 0.0);
    for (std::size_t k = 0; k < p.blocks.size(); ++k)
      for (std::size_t q = 0; q < p.blocks[k].size(); ++q) out[p.blocks[k][q]] = alpha[k][q];
    return out;
  }
};

// Dual objective of a distributed state: g*(v) + sum of conjugates over blocks.
inline double dual_objective(const IterateState& s, const LossSpec& loss, std::span<const double> labels,
                             const Partition& p) {
  double conj = 0.0;
  for (std::size_t k = 0; k < p.blocks.size(); ++k) conj += conjugate_sum(loss, labels, p.blocks[k], s.alpha[k]);
  if (conj == kInf) return kInf;
  return reg_conj_value(s.shared_v()) + conj;
}

// Aggregated direction of one outer iteration.
struct Direction {
  std::vector<std::vector<double>> dalpha;
  std::vector<double> dv;
  double delta_t = 0.0;
  double conj_sum_new = 0.0;
};

// One row of the trace, describing iterate `iter` and the step that produced it.
struct TraceRecord {
  int iter = 0;
  double wall_time = 0.0;
  double sim_time = 0.0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t comm_bytes = 0;
  std::uint64_t vector_rounds = 0;
  std::uint64_t scalar_rounds = 0;
  double f_dual = 0.0;
  double f_primal = 0.0;
  double f_primal_pocket = 0.0;
  double eta = 0.0;
  int backtracks = 0;
  double delta_t = 0.0;
  // Set when the sequential-in-fp line search found no decrease to accept
  // (direction numerically zero); the iterate is left unchanged.
  bool stationary = false;
};

struct SolveResult {
  std::vector<double> w;
  std::vector<TraceRecord> trace;
  bool converged = false;
  CommStats comm;
  // Fixed-step iterations that increased the dual objective.
  int fixed_step_ascents = 0;
};

// Distributed block-diagonal approximation solver over a simulated cluster.
class Solver {
 public:
  Solver(const SparseColumnMatrix& X, const LabelVector& labels, const LossSpec& loss, const SolverConfig& config,
         std::optional<Partition> partition = std::nullopt)
      : X_(X),
        labels_(labels),
        loss_(loss),
        config_(config),
        partition_(partition ? std::move(*partition) : default_partition(X, config)),
        cluster_(partition_, config.seed, config.scheduler) {
    loss_.validate();
    config_.validate();
    validate_labels(loss_, labels_);
    X_.validate();
    if (labels_.size() != X_.n_cols()) throw ConfigError("label count does not match column count");
    if (X_.n_cols() == 0) throw ConfigError("no instances");
    if (partition_.workers() != config_.K) throw ConfigError("partition has wrong number of workers");
    if (config_.step_rule == StepRule::exact && !loss_.has_quadratic_dual())
      throw UnsupportedLossError("exact line search is not available for logistic loss");
    col_sq_.resize(X_.n_cols());
    for (std::size_t j = 0; j < X_.n_cols(); ++j) {
      col_sq_[j] = squared_norm(X_.columns[j]);
      if (config_.a1 * col_sq_[j] + config_.a2 == 0.0 && conjugate_strong_convexity(loss_) == 0.0)
        throw ConfigError("instance " + std::to_string(j) + " has no features and a2 = 0; set a2 > 0");
    }
    const std::size_t n = X_.n_rows;
    for (std::size_t k = 0; k < config_.K; ++k) {
      row_begin_.push_back(k * n / config_.K);
    }
    row_begin_.push_back(n);
  }

  static Partition default_partition(const SparseColumnMatrix& X, const SolverConfig& c) {
    auto nnz = X.column_nnz();
    return c.shuffle ? shuffled_partition_by_nnz(nnz, c.K, c.seed) : partition_by_nnz(nnz, c.K);
  }

  const IterateState& state() const { return state_; }
  const Partition& partition() const { return partition_; }
  const CommStats& comm() const { return cluster_.stats(); }
  const SolverConfig& config() const { return config_; }
  const Direction& last_direction() const { return dir_; }
  double initial_gap() const { return gap0_; }

  // alpha^0 = 0; v^0 and the conjugate sum are formed by one vector and one
  // scalar reduction. Returns the record of iterate 0.
  TraceRecord initialize() {
    start_ = std::chrono::steady_clock::now();
    const std::size_t K = config_.K;
    state_ = IterateState{};
    state_.alpha.resize(K);
    state_.v.resize(K);
    std::vector<std::vector<double>> parts(K);
    std::vector<double> conj(K);
    cluster_.run([&](WorkerContext& w) {
      const std::size_t k = w.worker_id;
      state_.alpha[k].assign(w.block.size(), 0.0);
      parts[k].assign(X_.n_rows, 0.0);
      for (std::size_t q = 0; q < w.block.size(); ++q) axpy(state_.alpha[k][q], X_.columns[w.block[q]], parts[k]);
      conj[k] = conjugate_sum(loss_, labels_, w.block, state_.alpha[k]);
    });
    const auto v0 = cluster_.allreduce_sum(parts);
    state_.conj_sum = cluster_.allreduce_sum(conj);
    for (auto& rep : state_.v) rep = v0;
    state_.f_dual = reg_conj_value(v0) + state_.conj_sum;
    update_primal();
    f_dual0_ = state_.f_dual;
    gap0_ = state_.f_dual + state_.f_primal;
    iter_ = 0;
    initialized_ = true;
    return record(0.0, 0, 0.0, false);
  }

  // Gap test: f(alpha^t) + f^P(w(alpha^t)) <= stop_eps * (same at t = 0).
  bool converged() const { return state_.f_dual + state_.f_primal <= config_.stop_eps * gap0_; }

  // One outer iteration: local sub-problems, one vector reduction of dv,
  // the step size, and the update of (alpha, v) and the pocket.
  TraceRecord step() {
    if (!initialized_) throw ContractError("Solver::step before initialize");
    const std::size_t K = config_.K;
    std::vector<LocalDirection> local(K);
    cluster_.run([&](WorkerContext& w) {
      const std::size_t k = w.worker_id;
      local[k] = local_subproblem_rpcd(X_, labels_, loss_, w.block, state_.alpha[k], state_.v[k], config_.a1,
                                       config_.a2, config_.local_epochs, w.rng, col_sq_);
    });

    std::vector<std::vector<double>> dv_parts(K);
    for (std::size_t k = 0; k < K; ++k) dv_parts[k] = std::move(local[k].dv);
    dir_.dv = cluster_.allreduce_sum(dv_parts);
    dir_.dalpha.resize(K);
    for (std::size_t k = 0; k < K; ++k) dir_.dalpha[k] = std::move(local[k].dalpha);

    // Delta_t: worker k contributes v^T dv over its slice of the features
    // plus the conjugate change over its block.
    std::vector<double> dparts(K);
    double v_dv = 0.0;
    const auto& v = state_.shared_v();
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t r = row_begin_[k]; r < row_begin_[k + 1]; ++r) s += v[r] * dir_.dv[r];
      v_dv += s;
      dparts[k] = s + (local[k].conj_new - local[k].conj_old);
    }
    dir_.delta_t = cluster_.allreduce_sum(dparts);
    // v and dv are replicated, so every worker can split Delta_t back into
    // its two parts without another reduction.
    dir_.conj_sum_new = state_.conj_sum + (dir_.delta_t - v_dv);

    const LineModel line{squared_norm(v), dot(v, dir_.dv), squared_norm(dir_.dv)};
    const double f_ref = line.reg_conj_at(0.0) + state_.conj_sum;

    LineSearchResult ls;
    bool stationary = false;
    if (!(dir_.delta_t < 0.0)) {
      // Not a descent direction (e.g. dalpha = 0 at a fixed point). The
      // objective is re-evaluated at the unchanged iterate.
      cluster_.allreduce_sum(conj_parts(0.0));
      ls = {0.0, state_.f_dual, state_.conj_sum, 0};
      stationary = true;
    } else {
      switch (config_.step_rule) {
        case StepRule::fixed: {
          const double eta = config_.fixed_eta;
          const double conj = cluster_.allreduce_sum(conj_parts(eta));
          ls = {eta, line.reg_conj_at(eta) + conj, conj, 0};
          if (ls.f_new > f_ref + 1e-12 * (1.0 + std::abs(f_ref))) {
            ++fixed_step_ascents_;
            std::clog << "warning: fixed step increased the dual objective at iteration " << iter_ + 1 << "\n";
          }
          break;
        }
        case StepRule::backtrack:
          ls = backtrack(line, f_ref, [&](double eta) { return cluster_.allreduce_sum(conj_parts(eta)); },
                         stationary);
          break;
        case StepRule::exact:
          ls = exact_step_distributed(line, f_ref, stationary);
          break;
      }
    }

    if (ls.eta > 0.0) {
      const double eta = ls.eta;
      cluster_.run([&](WorkerContext& w) {
        const std::size_t k = w.worker_id;
        for (std::size_t q = 0; q < w.block.size(); ++q) {
          const std::size_t j = w.block[q];
          state_.alpha[k][q] = dual_interval(loss_, labels_[j]).project(state_.alpha[k][q] + eta * dir_.dalpha[k][q]);
        }
        auto& rep = state_.v[k];
        for (std::size_t r = 0; r < rep.size(); ++r) rep[r] += eta * dir_.dv[r];
      });
      state_.conj_sum = ls.conj_new;
      state_.f_dual = ls.f_new;
    }
    ++iter_;
    update_primal();
    if (config_.consistency_check_every > 0 && iter_ % config_.consistency_check_every == 0) check_consistency();
    return record(ls.eta, ls.backtracks, dir_.delta_t, stationary);
  }

  SolveResult solve() {
    SolveResult res;
    res.trace.push_back(initialize());
    while (!converged() && iter_ < config_.max_iter) res.trace.push_back(step());
    res.converged = converged();
    res.w = state_.pocket_w;
    res.comm = cluster_.stats();
    res.fixed_step_ascents = fixed_step_ascents_;
    return res;
  }

  // Recomputes X alpha from the blocks and compares with every replica;
  // throws ContractError on drift, replica mismatch or infeasibility.
  void check_consistency() const {
    const auto alpha = state_.gather_alpha(partition_);
    for (std::size_t i = 0; i < alpha.size(); ++i)
      if (!dual_interval(loss_, labels_[i]).contains(alpha[i]))
        throw ContractError("alpha_" + std::to_string(i) + " left its dual interval");
    const auto xa = X_.times(alpha);
    const auto& v = state_.shared_v();
    double diff = 0.0;
    for (std::size_t r = 0; r < v.size(); ++r) diff += (v[r] - xa[r]) * (v[r] - xa[r]);
    if (std::sqrt(diff) > 1e-6 * (1.0 + std::sqrt(squared_norm(v))))
      throw ContractError("v drifted from X alpha by " + std::to_string(std::sqrt(diff)));
    for (const auto& rep : state_.v)
      if (rep != v) throw ContractError("v replicas differ across workers");
  }

 private:
  // Per-worker sums of xi*(-alpha - eta dalpha), evaluated at the same
  // projected points the update writes.
  std::vector<double> conj_parts(double eta) {
    std::vector<double> parts(config_.K);
    cluster_.run([&](WorkerContext& w) {
      const std::size_t k = w.worker_id;
      double s = 0.0;
      for (std::size_t q = 0; q < w.block.size(); ++q) {
        const std::size_t j = w.block[q];
        const double a = dual_interval(loss_, labels_[j]).project(state_.alpha[k][q] + eta * dir_.dalpha[k][q]);
        s += conjugate(loss_, labels_[j], a);
      }
      parts[k] = s;
    });
    return parts;
  }

  // Exact step for quadratic duals. One scalar reduction gathers the
  // conjugate curvature sum q * dalpha^2; the conjugate slope then follows
  // from the already reduced Delta_t. A worker whose block crosses zero
  // under an eps|alpha| term reports NaN, which switches this iteration to
  // backtracking (the trial at eta = 1 is known from Delta_t).
  // Armijo search. When Delta_t is within rounding of zero no trial can show
  // a decrease in floating point; the iterate is then kept (eta = 0) instead
  // of aborting the run.
  template <class ConjAt>
  LineSearchResult backtrack(const LineModel& line, double f_ref, ConjAt&& conj_at, bool& stationary) {
    int trials = 0;
    auto counted = [&](double eta) {
      ++trials;
      return conj_at(eta);
    };
    try {
      return backtracking_line_search(line, f_ref, dir_.delta_t, config_.tau, config_.beta, config_.max_backtracks,
                                      counted);
    } catch (const LineSearchError&) {
      if (std::abs(dir_.delta_t) > kRoundingDeltaT * (1.0 + std::abs(f_ref))) throw;
      stationary = true;
      return {0.0, state_.f_dual, state_.conj_sum, trials - 1};
    }
  }

  static constexpr double kRoundingDeltaT = 1e-11;

  LineSearchResult exact_step_distributed(const LineModel& line, double f_ref, bool& stationary) {
    std::vector<double> curv(config_.K);
    cluster_.run([&](WorkerContext& w) {
      const std::size_t k = w.worker_id;
      double s = 0.0;
      for (std::size_t q = 0; q < w.block.size(); ++q) {
        const double d = dir_.dalpha[k][q];
        if (d == 0.0) continue;
        const auto qc = quadratic_conjugate(loss_, labels_[w.block[q]]);
        const double a = state_.alpha[k][q], b = a + d;
        if (qc.abs > 0.0 && ((a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0))) {
          s = std::numeric_limits<double>::quiet_NaN();
          break;
        }
        s += qc.quad * d * d;
      }
      curv[k] = s;
    });
    const double curvature = cluster_.allreduce_sum(curv);
    const double conj_change = dir_.conj_sum_new - state_.conj_sum;

    if (std::isnan(curvature)) {
      return backtrack(
          line, f_ref,
          [&](double eta) {
            if (eta == 1.0) return dir_.conj_sum_new;
            return cluster_.allreduce_sum(conj_parts(eta));
          },
          stationary);
    }
    const double conj_slope = conj_change - 0.5 * curvature;
    const double eta = exact_step(line.v_dot_dv + conj_slope, line.dv_sq + curvature);
    const double conj = state_.conj_sum + eta * conj_slope + 0.5 * eta * eta * curvature;
    return {eta, line.reg_conj_at(eta) + conj, conj, 0};
  }

  // f^P(w(alpha)) with w = v: each worker sums xi over its block.
  void update_primal() {
    std::vector<double> parts(config_.K);
    cluster_.run([&](WorkerContext& w) {
      const std::size_t k = w.worker_id;
      double s = 0.0;
      for (std::size_t j : w.block) s += primal_loss(loss_, labels_[j], dot(X_.columns[j], state_.v[k]));
      parts[k] = s;
    });
    state_.f_primal = reg_conj_value(state_.shared_v()) + cluster_.monitor_sum(parts);
    if (state_.f_primal < state_.pocket_f_primal) {
      state_.pocket_f_primal = state_.f_primal;
      state_.pocket_w = state_.shared_v();
    }
  }

  TraceRecord record(double eta, int backtracks, double delta_t, bool stationary) const {
    const auto& s = cluster_.stats();
    TraceRecord r;
    r.iter = iter_;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    r.sim_time = simulated_time(s, config_.latency, config_.bandwidth);
    r.comm_rounds = s.rounds();
    r.comm_bytes = s.bytes_total;
    r.vector_rounds = s.vector_rounds;
    r.scalar_rounds = s.scalar_rounds;
    r.f_dual = state_.f_dual;
    r.f_primal = state_.f_primal;
    r.f_primal_pocket = state_.pocket_f_primal;
    r.eta = eta;
    r.backtracks = backtracks;
    r.delta_t = delta_t;
    r.stationary = stationary;
    return r;
  }

  const SparseColumnMatrix& X_;
  const LabelVector& labels_;
  LossSpec loss_;
  SolverConfig config_;
  Partition partition_;
  Cluster cluster_;
  std::vector<double> col_sq_;
  std::vector<std::size_t> row_begin_;
  IterateState state_;
  Direction dir_;
  double f_dual0_ = 0.0;
  double gap0_ = 0.0;
  int iter_ = 0;
  int fixed_step_ascents_ = 0;
  bool initialized_ = false;
  std::chrono::steady_clock::time_point start_{};
};

inline SolveResult solve(const SparseColumnMatrix& X, const LabelVector& labels, const LossSpec& loss,
                         const SolverConfig& config, std::optional<Partition> partition = std::nullopt) {
  Solver s(X, labels, loss, config, std::move(partition));
  return s.solve();
}

}  // namespace bda
