#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bda/error.hpp"

namespace bda {

struct Entry {
  std::uint32_t row;
  double value;

  friend bool operator==(const Entry&, const Entry&) = default;
};

using SparseColumn = std::vector<Entry>;

inline double dot(const SparseColumn& col, std::span<const double> x) {
  double s = 0.0;
  for (const auto& e : col) s += e.value * x[e.row];
  return s;
}

// y += a * col
inline void axpy(double a, const SparseColumn& col, std::span<double> y) {
  for (const auto& e : col) y[e.row] += a * e.value;
}

inline double squared_norm(const SparseColumn& col) {
  double s = 0.0;
  for (const auto& e : col) s += e.value * e.value;
  return s;
}

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double xi : x) s += xi * xi;
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// The data matrix X, one column per instance (= per dual coordinate).
struct SparseColumnMatrix {
  std::size_t n_rows = 0;
  std::vector<SparseColumn> columns;

  std::size_t n_cols() const noexcept { return columns.size(); }

  std::size_t nnz() const noexcept {
    std::size_t s = 0;
    for (const auto& c : columns) s += c.size();
    return s;
  }

  std::vector<std::size_t> column_nnz() const {
    std::vector<std::size_t> out(columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) out[j] = columns[j].size();
    return out;
  }

  // X * a, dense result of length n_rows.
  std::vector<double> times(std::span<const double> a) const {
    std::vector<double> out(n_rows, 0.0);
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (a[j] != 0.0) axpy(a[j], columns[j], out);
    return out;
  }

  void validate() const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto& col = columns[j];
      for (std::size_t p = 0; p < col.size(); ++p) {
        if (col[p].row >= n_rows)
          throw ContractError("column " + std::to_string(j) + ": row index out of range");
        if (p > 0 && col[p].row <= col[p - 1].row)
          throw ContractError("column " + std::to_string(j) + ": row indices not increasing");
        if (col[p].value == 0.0)
          throw ContractError("column " + std::to_string(j) + ": explicit zero stored");
      }
    }
  }

  friend bool operator==(const SparseColumnMatrix&, const SparseColumnMatrix&) = default;
};

using LabelVector = std::vector<double>;

struct Dataset {
  LabelVector labels;
  SparseColumnMatrix matrix;
};

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

inline bool parse_index(std::string_view tok, std::uint64_t& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

inline std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

}  // namespace detail

// Reads "<label> <idx>:<val> ..." lines with 1-based ascending feature
// indices. Blank lines and '#' comments are skipped. Zero values are dropped.
inline Dataset parse_libsvm(std::istream& in) {
  Dataset ds;
  std::uint64_t max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);

    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < sv.size()) {
      while (i < sv.size() && std::isspace(static_cast<unsigned char>(sv[i]))) ++i;
      std::size_t j = i;
      while (j < sv.size() && !std::isspace(static_cast<unsigned char>(sv[j]))) ++j;
      if (j > i) toks.push_back(sv.substr(i, j - i));
      i = j;
    }
    if (toks.empty()) continue;

    double label = 0.0;
    if (!detail::parse_double(toks[0], label))
      throw ParseError(lineno, "bad label '" + std::string(toks[0]) + "'");
    if (!std::isfinite(label)) throw ParseError(lineno, "non-finite label");

    SparseColumn col;
    col.reserve(toks.size() - 1);
    std::uint64_t prev = 0;
    for (std::size_t t = 1; t < toks.size(); ++t) {
      auto colon = toks[t].find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, "expected idx:val, got '" + std::string(toks[t]) + "'");
      std::uint64_t idx = 0;
      double val = 0.0;
      if (!detail::parse_index(toks[t].substr(0, colon), idx) || idx == 0)
        throw ParseError(lineno, "bad feature index in '" + std::string(toks[t]) + "'");
      if (idx > std::numeric_limits<std::uint32_t>::max())
        throw ParseError(lineno, "feature index too large");
      if (!detail::parse_double(toks[t].substr(colon + 1), val))
        throw ParseError(lineno, "bad feature value in '" + std::string(toks[t]) + "'");
      if (!std::isfinite(val)) throw ParseError(lineno, "non-finite feature value");
      if (idx == prev) throw ParseError(lineno, "duplicate feature index " + std::to_string(idx));
      if (idx < prev) throw ParseError(lineno, "feature indices not ascending");
      prev = idx;
      max_index = std::max(max_index, idx);
      if (val != 0.0) col.push_back({static_cast<std::uint32_t>(idx - 1), val});
    }
    ds.labels.push_back(label);
    ds.matrix.columns.push_back(std::move(col));
  }
  ds.matrix.n_rows = static_cast<std::size_t>(max_index);
  return ds;
}

inline Dataset parse_libsvm(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in);
}

inline void write_libsvm(std::ostream& out, const LabelVector& labels, const SparseColumnMatrix& X) {
  for (std::size_t j = 0; j < X.n_cols(); ++j) {
    out << detail::format_double(labels[j]);
    for (const auto& e : X.columns[j])
      out << ' ' << (e.row + 1) << ':' << detail::format_double(e.value);
    out << '\n';
  }
}

// Column -> worker map. blocks[k] lists worker k's columns in ascending order.
struct Partition {
  std::vector<std::size_t> assignment;
  std::vector<std::vector<std::size_t>> blocks;

  std::size_t workers() const noexcept { return blocks.size(); }

  static Partition from_blocks(std::vector<std::vector<std::size_t>> blocks, std::size_t n_cols) {
    Partition p;
    p.assignment.assign(n_cols, blocks.size());
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      std::sort(blocks[k].begin(), blocks[k].end());
      for (std::size_t j : blocks[k]) {
        if (j >= n_cols) throw ContractError("partition: column index out of range");
        if (p.assignment[j] != blocks.size()) throw ContractError("partition: blocks overlap");
        p.assignment[j] = k;
      }
    }
    for (std::size_t a : p.assignment)
      if (a == blocks.size()) throw ContractError("partition: blocks do not cover all columns");
    p.blocks = std::move(blocks);
    return p;
  }

  void validate() const {
    std::vector<int> seen(assignment.size(), 0);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      for (std::size_t p = 0; p < blocks[k].size(); ++p) {
        std::size_t j = blocks[k][p];
        if (j >= assignment.size() || assignment[j] != k)
          throw ContractError("partition: assignment and blocks disagree");
        if (p > 0 && blocks[k][p - 1] >= j) throw ContractError("partition: block not sorted");
        ++seen[j];
      }
    }
    for (int s : seen)
      if (s != 1) throw ContractError("partition: blocks are not a partition of the columns");
  }

  friend bool operator==(const Partition&, const Partition&) = default;
};

inline nlohmann::json to_json(const Partition& p) { return nlohmann::json{{"blocks", p.blocks}}; }

inline Partition partition_from_json(const nlohmann::json& j, std::size_t n_cols) {
  return Partition::from_blocks(j.at("blocks").get<std::vector<std::vector<std::size_t>>>(), n_cols);
}

namespace detail {

// Can the sequence be cut into at most `parts` contiguous pieces with load <= cap?
inline bool fits(std::span<const std::size_t> nnz, std::size_t parts, std::size_t cap) {
  std::size_t used = 1, load = 0;
  for (std::size_t c : nnz) {
    if (c > cap) return false;
    if (load + c > cap) {
      if (++used > parts) return false;
      load = 0;
    }
    load += c;
  }
  return true;
}

// Contiguous split of `nnz` into K ranges minimizing the maximum load. Among
// optimal splits each worker in turn takes the prefix whose load is closest
// to an even share of what remains; ties go to the longer prefix. Returns the
// K+1 range boundaries.
inline std::vector<std::size_t> balanced_cuts(std::span<const std::size_t> nnz, std::size_t K) {
  const std::size_t N = nnz.size();
  std::size_t total = std::accumulate(nnz.begin(), nnz.end(), std::size_t{0});
  std::size_t lo = nnz.empty() ? 0 : *std::max_element(nnz.begin(), nnz.end());
  std::size_t hi = std::max(lo, total);
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (fits(nnz, K, mid)) hi = mid; else lo = mid + 1;
  }
  const std::size_t cap = lo;

  std::vector<std::size_t> cuts{0};
  std::size_t start = 0, remaining = total;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const std::size_t rest_workers = K - k - 1;
    const double share = static_cast<double>(remaining) / static_cast<double>(K - k);
    std::size_t best_end = start;
    double best_dist = std::numeric_limits<double>::infinity();
    std::size_t load = 0;
    for (std::size_t end = start;; ++end) {
      if (load > cap) break;
      if (fits(nnz.subspan(end), rest_workers, cap)) {
        double dist = std::abs(static_cast<double>(load) - share);
        if (dist <= best_dist) {
          best_dist = dist;
          best_end = end;
        }
      }
      if (end == N || static_cast<double>(load) > share) break;
      load += nnz[end];
    }
    if (!std::isfinite(best_dist)) {
      // Greedy maximal prefix under the cap is always feasible.
      load = 0;
      best_end = start;
      while (best_end < N && load + nnz[best_end] <= cap) load += nnz[best_end++];
    }
    for (std::size_t j = start; j < best_end; ++j) remaining -= nnz[j];
    start = best_end;
    cuts.push_back(start);
  }
  cuts.push_back(N);
  return cuts;
}

}  // namespace detail

// Splits columns into K contiguous ranges balanced by non-zero count, in the
// original column order. Workers beyond the number of columns get empty blocks.
inline Partition partition_by_nnz(std::span<const std::size_t> column_nnz, std::size_t K) {
  if (K == 0) throw ContractError("partition_by_nnz: K must be >= 1");
  if (column_nnz.empty()) throw ContractError("partition_by_nnz: no columns");
  if (K > column_nnz.size())
    std::clog << "warning: " << K << " workers for " << column_nnz.size()
              << " columns; some workers receive empty blocks\n";
  auto cuts = detail::balanced_cuts(column_nnz, K);
  std::vector<std::vector<std::size_t>> blocks(K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = cuts[k]; j < cuts[k + 1]; ++j) blocks[k].push_back(j);
  return Partition::from_blocks(std::move(blocks), column_nnz.size());
}

// Same balancing applied to a seeded random permutation of the columns.
inline Partition shuffled_partition_by_nnz(std::span<const std::size_t> column_nnz, std::size_t K,
                                           std::uint64_t seed) {
  if (column_nnz.empty()) throw ContractError("partition_by_nnz: no columns");
  std::vector<std::size_t> perm(column_nnz.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> permuted(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = column_nnz[perm[i]];
  Partition inner = partition_by_nnz(permuted, K);
  std::vector<std::vector<std::size_t>> blocks(K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i : inner.blocks[k]) blocks[k].push_back(perm[i]);
  return Partition::from_blocks(std::move(blocks), column_nnz.size());
}

namespace detail {

inline double power_iteration(const SparseColumnMatrix& X, std::vector<double> u, double rel_tol, int max_iter) {
  std::vector<double> Xu(X.n_rows);
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    std::fill(Xu.begin(), Xu.end(), 0.0);
    for (std::size_t j = 0; j < u.size(); ++j) axpy(u[j], X.columns[j], Xu);
    const double next = squared_norm(Xu);  // u^T X^T X u with ||u|| = 1
    if (next == 0.0) return 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = dot(X.columns[j], Xu);
    const double un = std::sqrt(squared_norm(u));
    if (un == 0.0) return next;
    for (double& x : u) x /= un;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * next) return next;
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

// Largest eigenvalue of X^T X by power iteration from the normalized all-ones
// vector. Stops when the Rayleigh quotient changes by less than rel_tol.
// The all-ones start can be (nearly) orthogonal to the top eigenvector, e.g.
// for X = [x, -x]; the result is then below the largest squared column norm,
// which is a lower bound, and the iteration is rerun from that column.
inline double spectral_norm_sq(const SparseColumnMatrix& X, double rel_tol = 1e-6, int max_iter = 1000) {
  const std::size_t N = X.n_cols();
  if (N == 0 || X.n_rows == 0) throw ContractError("spectral_norm_sq: empty matrix");
  double lambda = detail::power_iteration(X, std::vector<double>(N, 1.0 / std::sqrt(static_cast<double>(N))),
                                          rel_tol, max_iter);
  std::size_t widest = 0;
  double widest_sq = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    const double sq = squared_norm(X.columns[j]);
    if (sq > widest_sq) {
      widest_sq = sq;
      widest = j;
    }
  }
  if (lambda < widest_sq * (1.0 - rel_tol)) {
    std::vector<double> e(N, 0.0);
    e[widest] = 1.0;
    lambda = std::max(lambda, detail::power_iteration(X, std::move(e), rel_tol, max_iter));
  }
  return lambda;
}

}  // namespace bda
