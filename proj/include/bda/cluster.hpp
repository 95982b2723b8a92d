#pragma once

#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "bda/dataio.hpp"
#include "bda/error.hpp"

namespace bda {

enum class Scheduler { sequential, concurrent };

// Communication counters. bytes_total covers the algorithm's reductions only:
// 8 n bytes per vector round plus 8 bytes per scalar round. Reductions done
// purely to monitor the primal objective are counted separately.
struct CommStats {
  std::uint64_t vector_rounds = 0;
  std::uint64_t scalar_rounds = 0;
  std::uint64_t bytes_total = 0;
  std::uint64_t monitor_rounds = 0;
  std::uint64_t monitor_bytes = 0;

  std::uint64_t rounds() const noexcept { return vector_rounds + scalar_rounds; }

  friend bool operator==(const CommStats&, const CommStats&) = default;
};

// Modelled communication time: every round pays the latency, every byte the
// inverse bandwidth.
inline double simulated_time(const CommStats& s, double latency, double bandwidth) {
  if (latency < 0.0 || bandwidth <= 0.0) throw ContractError("simulated_time: bad latency/bandwidth");
  return static_cast<double>(s.rounds()) * latency + static_cast<double>(s.bytes_total) / bandwidth;
}

struct WorkerContext {
  std::size_t worker_id = 0;
  std::vector<std::size_t> block;
  std::mt19937_64 rng;
};

// K logical workers in one process. Work runs either one worker after another
// or on one thread per worker; reductions always add contributions in
// ascending worker id, so both schedulers give bit-identical results.
class Cluster {
 public:
  Cluster(const Partition& partition, std::uint64_t seed, Scheduler scheduler = Scheduler::sequential)
      : scheduler_(scheduler) {
    partition.validate();
    workers_.resize(partition.workers());
    for (std::size_t k = 0; k < workers_.size(); ++k) {
      workers_[k].worker_id = k;
      workers_[k].block = partition.blocks[k];
      workers_[k].rng.seed(seed ^ static_cast<std::uint64_t>(k));
    }
  }

  std::size_t size() const noexcept { return workers_.size(); }
  Scheduler scheduler() const noexcept { return scheduler_; }
  WorkerContext& worker(std::size_t k) { return workers_[k]; }
  const WorkerContext& worker(std::size_t k) const { return workers_[k]; }

  // Runs fn(WorkerContext&) on every worker and waits for all of them.
  // If workers throw, the exception of the lowest worker id is rethrown.
  template <class Fn>
  void run(Fn&& fn) {
    if (scheduler_ == Scheduler::sequential || workers_.size() == 1) {
      for (auto& w : workers_) fn(w);
      return;
    }
    std::vector<std::exception_ptr> errors(workers_.size());
    {
      std::vector<std::jthread> threads;
      threads.reserve(workers_.size());
      for (std::size_t k = 0; k < workers_.size(); ++k) {
        threads.emplace_back([&, k] {
          try {
            fn(workers_[k]);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> allreduce_sum(std::span<const std::vector<double>> parts) {
    check_arity(parts.size());
    const std::size_t n = parts.front().size();
    std::vector<double> out(parts.front());
    for (std::size_t k = 1; k < parts.size(); ++k) {
      if (parts[k].size() != n) throw ContractError("allreduce: vector length mismatch");
      for (std::size_t i = 0; i < n; ++i) out[i] += parts[k][i];
    }
    ++stats_.vector_rounds;
    stats_.bytes_total += 8 * static_cast<std::uint64_t>(n);
    return out;
  }

  double allreduce_sum(std::span<const double> parts) {
    const double s = ordered_sum(parts);
    ++stats_.scalar_rounds;
    stats_.bytes_total += 8;
    return s;
  }

  // Scalar reduction for objective monitoring (pocket / stopping test).
  double monitor_sum(std::span<const double> parts) {
    const double s = ordered_sum(parts);
    ++stats_.monitor_rounds;
    stats_.monitor_bytes += 8;
    return s;
  }

  const CommStats& stats() const noexcept { return stats_; }

 private:
  void check_arity(std::size_t got) const {
    if (got != workers_.size())
      throw ContractError("allreduce: expected " + std::to_string(workers_.size()) + " contributions, got " +
                          std::to_string(got));
  }

  double ordered_sum(std::span<const double> parts) const {
    check_arity(parts.size());
    double s = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) s += parts[k];
    return s;
  }

  Scheduler scheduler_;
  std::vector<WorkerContext> workers_;
  CommStats stats_;
};

}  // namespace bda
