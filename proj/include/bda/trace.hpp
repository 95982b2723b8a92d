#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bda/dataio.hpp"
#include "bda/error.hpp"
#include "bda/solver.hpp"

namespace bda {

inline constexpr const char* kTraceHeader = "iter,time_s,rounds,bytes,f_dual,f_primal,f_primal_pocket,eta,backtracks,delta_t";

enum class TimeColumn { simulated, wall };

struct TraceOptions {
  TimeColumn time = TimeColumn::simulated;
  // Dual optimum f*; when set, rel_primal and rel_dual columns are appended.
  std::optional<double> fstar;
};

// (f - f*) / |f*| with f* the dual optimum; the primal side uses -f*.
inline double relative_dual(double f_dual, double fstar) {
  return (f_dual - fstar) / std::abs(fstar);
}
inline double relative_primal(double f_primal, double fstar) {
  return (f_primal + fstar) / std::abs(fstar);
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace, const TraceOptions& opt = {}) {
  out << kTraceHeader;
  if (opt.fstar) out << ",rel_primal,rel_dual";
  out << '\n';
  for (const auto& r : trace) {
    const double t = opt.time == TimeColumn::simulated ? r.sim_time : r.wall_time;
    out << r.iter << ',' << detail::format_double(t) << ',' << r.comm_rounds << ',' << r.comm_bytes << ','
        << detail::format_double(r.f_dual) << ',' << detail::format_double(r.f_primal) << ',' << detail::format_double(r.f_primal_pocket)
        << ',' << detail::format_double(r.eta) << ',' << r.backtracks << ',' << detail::format_double(r.delta_t);
    if (opt.fstar)
      out << ',' << detail::format_double(relative_primal(r.f_primal_pocket, *opt.fstar)) << ','
          << detail::format_double(relative_dual(r.f_dual, *opt.fstar));
    out << '\n';
  }
}

// A parsed trace row; only the columns of the fixed header are kept.
struct TraceRow {
  int iter = 0;
  double time_s = 0.0;
  std::uint64_t rounds = 0;
  std::uint64_t bytes = 0;
  double f_dual = 0.0, f_primal = 0.0, f_primal_pocket = 0.0, eta = 0.0;
  int backtracks = 0;
  double delta_t = 0.0;
};

inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kTraceHeader, 0) != 0) throw ParseError(1, "trace header mismatch");
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 10) throw ParseError(lineno, "trace row has too few columns");
    try {
      TraceRow r;
      r.iter = std::stoi(f[0]);
      r.time_s = std::stod(f[1]);
      r.rounds = std::stoull(f[2]);
      r.bytes = std::stoull(f[3]);
      r.f_dual = std::stod(f[4]);
      r.f_primal = std::stod(f[5]);
      r.f_primal_pocket = std::stod(f[6]);
      r.eta = std::stod(f[7]);
      r.backtracks = std::stoi(f[8]);
      r.delta_t = std::stod(f[9]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ParseError(lineno, "bad number in trace row");
    }
  }
  return rows;
}

inline void write_fstar(const std::string& path, double fstar) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << detail::format_double(fstar) << '\n';
}

inline double read_fstar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string tok;
  in >> tok;
  double v = 0.0;
  if (!detail::parse_double(tok, v) || !std::isfinite(v)) throw ParseError(1, "f* file must hold one finite real");
  if (v == 0.0) throw ParseError(1, "f* = 0 makes relative suboptimality undefined");
  return v;
}

}  // namespace bda
