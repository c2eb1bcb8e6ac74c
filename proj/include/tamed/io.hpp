#pragma once

// CSV serialization of experiment tables. Headers are fixed; doubles are
// written with 17 significant digits so they round-trip exactly.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tamed/experiments.hpp"
#include "tamed/scheme.hpp"

namespace tamed {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr std::string_view kConvergenceHeader = "mesh,lp_error,p,n_paths,n_diverged,seed";
inline constexpr std::string_view kStabilityHeader = "gap,lp_error,p,n_paths,n_diverged,seed";
inline constexpr std::string_view kHeatmapHeader = "gap,mesh,lp_error,p,n_paths,n_diverged,seed";
inline constexpr std::string_view kTimeshiftHeader = "ds,lp_error,p,n_paths,n_diverged,seed";
inline constexpr std::string_view kSlopesHeader = "experiment,slope,intercept,r_squared";

inline std::string_view csv_header(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::convergence: return kConvergenceHeader;
    case ExperimentKind::stability: return kStabilityHeader;
    case ExperimentKind::heatmap: return kHeatmapHeader;
    default: return kTimeshiftHeader;
  }
}

inline void write_table_csv(std::ostream& os, const ErrorTable& table) {
  os << csv_header(table.kind) << '\n';
  for (const auto& r : table.rows) {
    os << format_double(r.abscissa) << ',';
    if (table.kind == ExperimentKind::heatmap) os << format_double(r.mesh) << ',';
    os << format_double(r.error) << ',' << format_double(table.p) << ',' << r.n_paths << ',' << r.n_diverged << ','
       << r.seed << '\n';
  }
}

struct NamedFit {
  std::string experiment;
  SlopeFit fit;
};

inline void write_slopes_csv(std::ostream& os, std::span<const NamedFit> fits) {
  os << kSlopesHeader << '\n';
  for (const auto& f : fits) {
    os << f.experiment << ',' << format_double(f.fit.slope) << ',' << format_double(f.fit.intercept) << ','
       << format_double(f.fit.r_squared) << '\n';
  }
}

/// path_id,t,x_1..x_d
template <int D>
void write_trajectories_csv(std::ostream& os, std::span<const PathResult<D>> paths) {
  os << "path_id,t";
  for (int i = 1; i <= D; ++i) os << ",x_" << i;
  os << '\n';
  for (std::size_t k = 0; k < paths.size(); ++k) {
    for (const auto& [t, x] : paths[k].trajectory) {
      os << k << ',' << format_double(t);
      for (int i = 0; i < D; ++i) os << ',' << format_double(x[i]);
      os << '\n';
    }
  }
}

}  // namespace tamed
