#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bda/bda.hpp"

namespace {

using namespace bda;

struct CommonOptions {
  std::string data;
  std::string loss = "l1-svm";
  double C = 1.0;
  double eps = 0.1;
  std::size_t K = 1;
  std::optional<double> a1, a2, tau, beta;
  int local_epochs = 1;
  double stop_eps = 1e-3;
  int max_iter = 1000;
  int max_backtracks = 50;
  std::uint64_t seed = 1;
  bool shuffle = false;
  std::string scheduler = "sequential";
  std::string time_column = "simulated";
  std::optional<std::string> fstar_path;
  double latency = 1e-4;
  double bandwidth = 1e9;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--data", o.data, "training data in LIBSVM format")->required()->check(CLI::ExistingFile);
  app->add_option("--loss", o.loss, "l1-svm, l2-svm, logistic, svr, l2-svr or lsq")->capture_default_str();
  app->add_option("--C", o.C, "loss weight")->capture_default_str();
  app->add_option("--eps", o.eps, "SVR insensitivity")->capture_default_str();
  app->add_option("--K", o.K, "number of workers")->capture_default_str();
  app->add_option("--a1", o.a1, "override the block-Hessian scale");
  app->add_option("--a2", o.a2, "override the damping");
  app->add_option("--tau", o.tau, "Armijo sufficient-decrease constant");
  app->add_option("--beta", o.beta, "backtracking shrink factor");
  app->add_option("--local-epochs", o.local_epochs, "RPCD epochs per outer iteration")->capture_default_str();
  app->add_option("--stop-eps", o.stop_eps, "relative duality-gap threshold")->capture_default_str();
  app->add_option("--max-iter", o.max_iter, "outer iteration budget")->capture_default_str();
  app->add_option("--max-backtracks", o.max_backtracks)->capture_default_str();
  app->add_option("--seed", o.seed)->capture_default_str();
  app->add_flag("--shuffle", o.shuffle, "permute instances before partitioning");
  app->add_option("--scheduler", o.scheduler)->check(CLI::IsMember({"sequential", "concurrent"}))->capture_default_str();
  app->add_option("--time", o.time_column, "time_s column: simulated cost model or wall clock")
      ->check(CLI::IsMember({"simulated", "wall"}))
      ->capture_default_str();
  app->add_option("--fstar", o.fstar_path, "file holding the dual optimum f*");
  app->add_option("--latency", o.latency, "seconds per communication round")->capture_default_str();
  app->add_option("--bandwidth", o.bandwidth, "bytes per second")->capture_default_str();
}

LossSpec make_loss(const CommonOptions& o) {
  LossSpec s{parse_loss_kind(o.loss), o.C, o.eps};
  if (!s.uses_eps()) s.eps = 0.0;
  s.validate();
  return s;
}

Dataset load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_libsvm(in);
}

SolverConfig make_solver_config(Algo algo, const CommonOptions& o, const LossSpec& loss, const Dataset& d) {
  const double xtx = algo == Algo::prox_grad ? spectral_norm_sq(d.matrix) : std::numeric_limits<double>::quiet_NaN();
  SolverConfig c = make_config(algo, loss, o.K, xtx);
  if (o.a1) c.a1 = *o.a1;
  if (o.a2) c.a2 = *o.a2;
  if (o.tau) c.tau = *o.tau;
  if (o.beta) c.beta = *o.beta;
  c.local_epochs = o.local_epochs;
  c.stop_eps = o.stop_eps;
  c.max_iter = o.max_iter;
  c.max_backtracks = o.max_backtracks;
  c.seed = o.seed;
  c.shuffle = o.shuffle;
  c.scheduler = o.scheduler == "concurrent" ? Scheduler::concurrent : Scheduler::sequential;
  c.latency = o.latency;
  c.bandwidth = o.bandwidth;
  c.validate();
  return c;
}

void write_outputs(const std::string& trace_path, const SolveResult& r, const SolverConfig& cfg, const LossSpec& loss,
                   const CommonOptions& o, std::optional<double> fstar) {
  {
    std::ofstream out(trace_path);
    if (!out) throw std::runtime_error("cannot write " + trace_path);
    write_trace_csv(out, r.trace, {o.time_column == "wall" ? TimeColumn::wall : TimeColumn::simulated, fstar});
  }
  nlohmann::json j = to_json(cfg);
  j.update(to_json(loss));
  j["data"] = o.data;
  j["scheduler"] = o.scheduler;
  j["time"] = o.time_column;
  if (fstar) j["fstar"] = *fstar;
  std::ofstream(trace_path + ".json") << j.dump(2) << '\n';
}

void print_summary(const SolveResult& r, std::optional<double> fstar) {
  const auto& last = r.trace.back();
  std::printf("iterations      %d\n", last.iter);
  std::printf("converged       %s\n", r.converged ? "yes" : "no");
  std::printf("f_dual          %.12g\n", last.f_dual);
  std::printf("f_primal_pocket %.12g\n", last.f_primal_pocket);
  std::printf("rounds          %llu\n", static_cast<unsigned long long>(r.comm.rounds()));
  std::printf("bytes           %llu\n", static_cast<unsigned long long>(r.comm.bytes_total));
  if (fstar) {
    std::printf("rel_primal      %.6e\n", relative_primal(last.f_primal_pocket, *fstar));
    std::printf("rel_dual        %.6e\n", relative_dual(last.f_dual, *fstar));
  }
  if (r.fixed_step_ascents > 0) std::printf("fixed-step ascents %d\n", r.fixed_step_ascents);
}

// Classification: fraction of sign(x^T w) matching the label. Regression:
// root-mean-square error of x^T w.
void report_test(const std::string& path, const LossSpec& loss, const std::vector<double>& w) {
  const auto t = load(path);
  double acc = 0.0;
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    double z = 0.0;
    for (const auto& e : t.matrix.columns[i])
      if (e.row < w.size()) z += e.value * w[e.row];
    if (loss.is_classification())
      acc += (z >= 0.0 ? 1.0 : -1.0) == t.labels[i];
    else
      acc += (z - t.labels[i]) * (z - t.labels[i]);
  }
  const double n = std::max<double>(1.0, static_cast<double>(t.labels.size()));
  if (loss.is_classification())
    std::printf("test_accuracy   %.6f\n", acc / n);
  else
    std::printf("test_rmse       %.6g\n", std::sqrt(acc / n));
}

int cmd_run(const CommonOptions& o, const std::string& algo_name, const std::string& trace_path,
            const std::optional<std::string>& test_path) {
  const auto loss = make_loss(o);
  const auto d = load(o.data);
  const Algo algo = parse_algo(algo_name);
  const auto cfg = make_solver_config(algo, o, loss, d);
  std::optional<double> fstar;
  if (o.fstar_path) fstar = read_fstar(*o.fstar_path);
  const auto r = solve(d.matrix, d.labels, loss, cfg);
  write_outputs(trace_path, r, cfg, loss, o, fstar);
  print_summary(r, fstar);
  if (test_path) report_test(*test_path, loss, r.w);
  return r.converged ? 0 : 2;
}

std::optional<std::uint64_t> rounds_to_gap(const std::vector<TraceRecord>& trace, double fstar, double target) {
  for (const auto& rec : trace)
    if (relative_dual(rec.f_dual, fstar) <= target) return rec.comm_rounds;
  return std::nullopt;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& algos, const std::string& prefix,
                double target) {
  const auto loss = make_loss(o);
  const auto d = load(o.data);
  double fstar = 0.0;
  if (o.fstar_path) {
    fstar = read_fstar(*o.fstar_path);
  } else {
    fstar = reference_optimum(d.matrix, d.labels, loss, certification_tol(loss)).fstar;
    std::printf("reference f*    %.15g\n", fstar);
  }
  struct Row {
    std::string algo;
    std::optional<std::uint64_t> rounds;
    double final_rel;
    std::string trace;
  };
  std::vector<Row> rows;
  bool all_converged = true;
  for (const auto& name : algos) {
    const Algo algo = parse_algo(name);
    const auto cfg = make_solver_config(algo, o, loss, d);
    const auto r = solve(d.matrix, d.labels, loss, cfg);
    all_converged = all_converged && r.converged;
    const std::string path = prefix + std::string(to_string(algo)) + ".csv";
    write_outputs(path, r, cfg, loss, o, fstar);
    rows.push_back({std::string(to_string(algo)), rounds_to_gap(r.trace, fstar, target),
                    relative_dual(r.trace.back().f_dual, fstar), path});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.rounds.value_or(std::numeric_limits<std::uint64_t>::max()) <
           b.rounds.value_or(std::numeric_limits<std::uint64_t>::max());
  });
  std::printf("%-14s %18s %14s  %s\n", "algo", "rounds_to_target", "final_rel", "trace");
  for (const auto& r : rows)
    std::printf("%-14s %18s %14.6e  %s\n", r.algo.c_str(), r.rounds ? std::to_string(*r.rounds).c_str() : "-",
                r.final_rel, r.trace.c_str());
  return all_converged ? 0 : 2;
}

int cmd_reference(const CommonOptions& o, double tol, const std::string& out) {
  const auto loss = make_loss(o);
  const auto d = load(o.data);
  const auto r = reference_optimum(d.matrix, d.labels, loss, tol);
  write_fstar(out, r.fstar);
  std::printf("f*              %.15g\n", r.fstar);
  std::printf("gap             %.3e\n", r.f_primal + r.f_dual);
  std::printf("iterations      %d\n", r.iterations);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed dual block-diagonal approximation solver (simulated cluster)"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::string run_algo = "bda-backtrack", run_trace;
  std::optional<std::string> test_path;
  auto* run = app.add_subcommand("run", "train one algorithm and write its trace");
  add_common(run, run_opts);
  run->add_option("--algo", run_algo, "bda-exact-ls, bda-backtrack, disdca, dsvm-ave or proxgrad")
      ->capture_default_str();
  run->add_option("--trace", run_trace, "CSV trace output")->required();
  run->add_option("--test", test_path, "held-out data for accuracy / RMSE")->check(CLI::ExistingFile);

  CommonOptions cmp_opts;
  std::vector<std::string> cmp_algos{"bda-exact-ls", "disdca", "dsvm-ave"};
  std::string cmp_prefix = "trace_";
  double cmp_target = 1e-4;
  auto* cmp = app.add_subcommand("compare", "run several algorithms on the same data and seed");
  add_common(cmp, cmp_opts);
  cmp->add_option("--algos", cmp_algos, "algorithms to compare")->delimiter(',')->capture_default_str();
  cmp->add_option("--trace-prefix", cmp_prefix, "trace files are <prefix><algo>.csv")->capture_default_str();
  cmp->add_option("--target", cmp_target, "relative dual suboptimality target")->capture_default_str();

  CommonOptions ref_opts;
  double ref_tol = 1e-10;
  std::string ref_out;
  auto* ref = app.add_subcommand("reference", "compute a certified dual optimum f*");
  add_common(ref, ref_opts);
  ref->add_option("--tol", ref_tol, "relative duality-gap certificate")->capture_default_str();
  ref->add_option("--out", ref_out, "f* output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run) return cmd_run(run_opts, run_algo, run_trace, test_path);
    if (*cmp) return cmd_compare(cmp_opts, cmp_algos, cmp_prefix, cmp_target);
    if (*ref) return cmd_reference(ref_opts, ref_tol, ref_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
