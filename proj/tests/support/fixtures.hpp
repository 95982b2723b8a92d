#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "bda/bda.hpp"

namespace fixtures {

struct Named {
  std::string name;
  bda::Dataset data;
};

// Random sparse design: every column gets `per_col` distinct features drawn
// from n_rows, values uniform in [-1, 1]. Classification labels come from the
// sign of a hidden linear model with 10% flips; regression labels are the
// hidden model's output plus Gaussian noise.
inline bda::Dataset synthetic(std::size_t n_rows, std::size_t n_cols, std::size_t per_col, bool classification,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(n_rows);
  for (auto& x : w) x = gauss(rng);

  bda::Dataset d;
  d.matrix.n_rows = n_rows;
  d.matrix.columns.resize(n_cols);
  std::vector<std::size_t> rows(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) rows[r] = r;
  for (std::size_t j = 0; j < n_cols; ++j) {
    const std::size_t m = std::min(per_col, n_rows);
    for (std::size_t t = 0; t < m; ++t) {
      std::uniform_int_distribution<std::size_t> pick(t, n_rows - 1);
      std::swap(rows[t], rows[pick(rng)]);
    }
    std::vector<std::size_t> chosen(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(chosen.begin(), chosen.end());
    double z = 0.0;
    for (std::size_t r : chosen) {
      double v = unif(rng);
      if (v == 0.0) v = 0.5;
      d.matrix.columns[j].push_back({static_cast<std::uint32_t>(r), v});
      z += v * w[r];
    }
    if (classification) {
      double y = z >= 0.0 ? 1.0 : -1.0;
      if (unif(rng) > 0.8) y = -y;
      d.labels.push_back(y);
    } else {
      d.labels.push_back(z + 0.1 * gauss(rng));
    }
  }
  return d;
}

inline bda::Dataset from_text(const std::string& s) { return bda::parse_libsvm(std::string_view(s)); }

// Hand fixtures with at most three instances.
inline std::vector<Named> tiny(bool classification) {
  if (classification)
    return {
        {"single", from_text("+1 1:1\n")},
        {"pair", from_text("+1 1:1 2:0.5\n-1 1:-0.5 2:1\n")},
        {"symmetric", from_text("+1 1:1\n-1 1:-1\n")},
        {"triple", from_text("+1 1:2 3:-1\n-1 2:1.5\n+1 1:0.5 2:0.5 3:1\n")},
    };
  return {
      {"single", from_text("0.5 1:1\n")},
      {"pair", from_text("1 1:1 2:0.5\n-0.5 1:-0.5 2:1\n")},
      {"symmetric", from_text("1 1:1\n-1 1:-1\n")},
      {"triple", from_text("0.7 1:2 3:-1\n-1.2 2:1.5\n0.3 1:0.5 2:0.5 3:1\n")},
  };
}

// Regression-label version of a classification dataset (labels kept, they
// are valid reals).
inline std::vector<Named> synthetic_corpus(bool classification) {
  return {
      {"syn-small", synthetic(50, 200, 5, classification, 11)},
      {"syn-medium", synthetic(400, 2000, 5, classification, 12)},
      {"syn-wide", synthetic(2000, 4000, 50, classification, 13)},
  };
}

inline std::vector<Named> corpus(bool classification) {
  auto c = synthetic_corpus(classification);
  for (auto& t : tiny(classification)) c.push_back(std::move(t));
  return c;
}

inline bda::LossSpec loss(bda::LossKind k, double C = 1.0) {
  bda::LossSpec s;
  s.kind = k;
  s.C = C;
  s.eps = s.uses_eps() ? 0.1 : 0.0;
  return s;
}

}  // namespace fixtures
