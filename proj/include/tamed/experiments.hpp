#pragma once

// Coupled-noise studies of the scheme: strong convergence in the mesh,
// stability in the initial value, the joint (gap, mesh) error surface and
// initial-time perturbation, plus the L^p estimator and log-log fits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tamed/grid.hpp"
#include "tamed/levy.hpp"
#include "tamed/model.hpp"
#include "tamed/parallel.hpp"
#include "tamed/rng.hpp"
#include "tamed/scheme.hpp"

namespace tamed {

enum class ExperimentKind { convergence, stability, heatmap, timeshift };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::convergence: return "convergence";
    case ExperimentKind::stability: return "stability";
    case ExperimentKind::heatmap: return "heatmap";
    default: return "timeshift";
  }
}

struct ErrorRow {
  double abscissa = 0.0;  // mesh, gap or |s~ - s|
  double mesh = std::numeric_limits<double>::quiet_NaN();  // second abscissa (heatmap only)
  double error = 0.0;
  double standard_error = 0.0;  // delta-method Monte-Carlo SE of `error`
  std::size_t n_paths = 0;
  std::size_t n_diverged = 0;
  std::uint64_t seed = 0;
};

struct ErrorTable {
  ExperimentKind kind = ExperimentKind::convergence;
  double p = 2.0;
  std::vector<ErrorRow> rows;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};

struct ExperimentResult {
  ErrorTable table;
  std::optional<SlopeFit> fit;
  std::vector<std::string> warnings;
  std::size_t diverged_paths = 0;  // paths with at least one diverged arm
};

template <int D>
struct ExperimentSettings {
  double horizon = 1.0;
  Vec<D> x0 = Vec<D>::Constant(2.0);
  double start_time = 0.0;
  double epsilon = 0.05;
  std::size_t mc_samples = 1000;
  std::size_t n_paths = 500;
  double p = 2.0;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 1;

  void validate() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("T must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (mc_samples < 1) throw std::invalid_argument("mc samples must be >= 1");
    if (n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
    if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
    if (!(start_time >= 0.0 && start_time < horizon)) throw std::invalid_argument("start time must lie in [0, T)");
    if (!x0.allFinite()) throw std::invalid_argument("x0 must be finite");
  }
};

// ---------------------------------------------------------------------------
// Estimators

struct LpEstimate {
  double error = 0.0;
  double standard_error = 0.0;
};

/// ((1/N) sum |a_k - b_k|^p)^{1/p} with its delta-method standard error.
template <int D>
LpEstimate lp_error_with_se(std::span<const Vec<D>> a, std::span<const Vec<D>> b, double p) {
  if (a.size() != b.size()) throw std::invalid_argument("lp_error: length mismatch");
  if (a.empty()) throw std::invalid_argument("lp_error: empty input");
  if (!(p >= 1.0)) throw std::invalid_argument("lp_error: p must be >= 1");
  const double n = static_cast<double>(a.size());
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = std::pow((a[k] - b[k]).norm(), p);
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  LpEstimate e;
  e.error = std::pow(mean, 1.0 / p);
  if (a.size() > 1 && mean > 0.0) {
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    const double se_mean = std::sqrt(var / n);
    e.standard_error = std::pow(mean, 1.0 / p - 1.0) * se_mean / p;
  }
  return e;
}

template <int D>
double lp_error(std::span<const Vec<D>> a, std::span<const Vec<D>> b, double p) {
  return lp_error_with_se<D>(a, b, p).error;
}

inline double lp_error(std::span<const double> a, std::span<const double> b, double p) {
  std::vector<Vec<1>> va, vb;
  for (double v : a) va.emplace_back(v);
  for (double v : b) vb.emplace_back(v);
  return lp_error<1>(va, vb, p);
}

/// OLS of log2(y) on log2(x) over points with x > 0 and y > 0.
inline SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log2(x[i]));
      ly.push_back(std::log2(y[i]));
    }
  }
  if (lx.empty()) throw std::invalid_argument("fit: all errors are zero");
  if (lx.size() < 2) throw std::invalid_argument("fit: needs at least 2 rows with positive error");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit: abscissas are all equal");
  SlopeFit f;
  f.points = lx.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double ss_res = std::max(0.0, syy - f.slope * sxy);
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  f.slope_se = lx.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
  return f;
}

inline SlopeFit fit_loglog_slope(const ErrorTable& table) {
  std::vector<double> x, y;
  for (const auto& r : table.rows) {
    x.push_back(r.abscissa);
    y.push_back(r.error);
  }
  return fit_loglog(x, y);
}

/// Spearman rank correlation; ties get average ranks.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Experiment drivers

namespace detail {

inline constexpr std::uint64_t kBrownianPurpose = 1;
inline constexpr std::uint64_t kJumpPurpose = 2;
inline constexpr std::uint64_t kCompensatorPurpose = 3;

template <int D, int W>
NoiseRealization<D, W> path_noise(const DiscretizationMap& fine, const TruncatedJumpLaw<D>& tlaw, std::uint64_t seed,
                                  std::uint64_t tag, std::size_t path) {
  Engine bw = make_stream(seed, {tag, path, kBrownianPurpose});
  Engine jr = make_stream(seed, {tag, path, kJumpPurpose});
  return draw_noise<D, W>(fine, tlaw, bw, jr, derive_seed(seed, {tag, path, kCompensatorPurpose}));
}

template <int D>
struct ArmMatrix {
  std::size_t arms = 0;
  std::size_t paths = 0;
  std::vector<Vec<D>> terminal;  // [arm * paths + path]
  std::vector<char> diverged;

  ArmMatrix(std::size_t a, std::size_t n) : arms(a), paths(n), terminal(a * n, Vec<D>::Zero()), diverged(a * n, 0) {}

  void store(std::size_t arm, std::size_t path, const PathResult<D>& r) {
    terminal[arm * paths + path] = r.terminal_value;
    diverged[arm * paths + path] = r.diagnostics.diverged ? 1 : 0;
  }

  std::size_t diverged_paths() const {
    std::size_t c = 0;
    for (std::size_t k = 0; k < paths; ++k) {
      for (std::size_t a = 0; a < arms; ++a) {
        if (diverged[a * paths + k]) {
          ++c;
          break;
        }
      }
    }
    return c;
  }

  // Row comparing two arms; pairs with a diverged arm are excluded and counted.
  ErrorRow compare(std::size_t base, std::size_t arm, double p, std::uint64_t seed) const {
    std::vector<Vec<D>> a, b;
    ErrorRow row;
    row.seed = seed;
    row.n_paths = paths;
    for (std::size_t k = 0; k < paths; ++k) {
      if (diverged[base * paths + k] || diverged[arm * paths + k]) {
        ++row.n_diverged;
        continue;
      }
      a.push_back(terminal[base * paths + k]);
      b.push_back(terminal[arm * paths + k]);
    }
    if (a.empty()) {
      row.error = std::numeric_limits<double>::quiet_NaN();
      return row;
    }
    const auto e = lp_error_with_se<D>(a, b, p);
    row.error = e.error;
    row.standard_error = e.standard_error;
    return row;
  }
};

template <int D, int W>
void check_mc_hypothesis(const SdeModel<D, W>& model, const ExperimentSettings<D>& s, ExperimentResult& out) {
  std::optional<double> zd = model.constants.Z_d;
  if (!zd && model.jumps.sizes().has_density() && D == 1) zd = estimate_zd(model.jumps, model.p0);
  if (!zd) return;
  const double b = std::max(1.0, *zd / (s.epsilon * s.epsilon));
  const double required = b * b;
  if (static_cast<double>(s.mc_samples) < required) {
    out.warnings.push_back("M = " + std::to_string(s.mc_samples) + " is below (1 v eps^-2 Z_d)^2 = " +
                           std::to_string(required) + "; error bounds do not apply");
  }
}

inline void check_unique(std::span<const double> v, const char* what) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw std::invalid_argument(std::string(what) + " must be unique");
}

inline void check_dyadic_family(std::span<const double> meshes, double finest, double horizon) {
  for (double m : meshes) {
    if (!(m > 0.0)) throw std::invalid_argument("meshes must be positive");
    if (m < finest) throw std::invalid_argument("reference mesh must not exceed any coarse mesh");
    const double ratio = m / finest;
    if (!is_dyadic_mesh(ratio)) throw std::invalid_argument("meshes must be nested: mesh / reference mesh must be a power of two");
    (void)build_grid_with_mesh(m, horizon);
  }
}

template <int D>
Vec<D> offset(const Vec<D>& x, double gap) {
  return x + Vec<D>::Constant(gap / std::sqrt(static_cast<double>(D)));
}

}  // namespace detail

template <int D>
using ExactFlow = std::function<Vec<D>(const Vec<D>& x0, double s, double t)>;

/// Error of the scheme at each coarse mesh against a reference terminal value
/// computed from the same Brownian path and jump stream: the scheme at
/// `ref_mesh`, or `exact` when supplied. Reference and coarse runs draw
/// independent compensator variates.
template <int D, int W>
ExperimentResult strong_convergence(const SdeModel<D, W>& model, const std::vector<double>& meshes, double ref_mesh,
                                    const ExperimentSettings<D>& settings, const ExactFlow<D>& exact = {}) {
  model.validate();
  settings.validate();
  if (meshes.empty()) throw std::invalid_argument("meshes must not be empty");
  if (!(ref_mesh > 0.0)) throw std::invalid_argument("reference mesh must be positive");
  detail::check_unique(meshes, "meshes");
  detail::check_dyadic_family(meshes, ref_mesh, settings.horizon);

  const auto ref_map = build_grid_with_mesh(ref_mesh, settings.horizon);
  std::vector<DiscretizationMap> maps;
  for (double m : meshes) maps.push_back(build_grid_with_mesh(m, settings.horizon));
  const TruncatedJumpLaw<D> tlaw(model.jumps, settings.epsilon);
  const std::uint64_t tag = hash_tag("convergence");

  ExperimentResult out;
  out.table.kind = ExperimentKind::convergence;
  out.table.p = settings.p;
  detail::check_mc_hypothesis(model, settings, out);

  detail::ArmMatrix<D> arms(1 + meshes.size(), settings.n_paths);
  parallel_for(settings.n_paths, settings.threads, [&](std::size_t k) {
    const auto noise = detail::path_noise<D, W>(ref_map, tlaw, settings.seed, tag, k);
    auto config_for = [&](const DiscretizationMap& map) {
      return SchemeConfig<D>{settings.start_time, settings.x0, map, settings.epsilon, settings.mc_samples, false};
    };
    if (exact) {
      PathResult<D> r;
      r.terminal_value = exact(settings.x0, settings.start_time, settings.horizon);
      r.diagnostics.diverged = !r.terminal_value.allFinite();
      arms.store(0, k, r);
    } else {
      arms.store(0, k, simulate_path(model, config_for(ref_map), noise));
    }
    for (std::size_t m = 0; m < maps.size(); ++m) arms.store(1 + m, k, simulate_path(model, config_for(maps[m]), noise));
  });

  for (std::size_t m = 0; m < meshes.size(); ++m) {
    auto row = arms.compare(0, 1 + m, settings.p, settings.seed);
    row.abscissa = meshes[m];
    out.table.rows.push_back(row);
  }
  out.diverged_paths = arms.diverged_paths();
  try {
    out.fit = fit_loglog_slope(out.table);
  } catch (const std::invalid_argument&) {
    out.fit.reset();
  }
  return out;
}

/// Error between runs from x0 and x0 + gap sharing all randomness (Brownian
/// path, jumps and compensator variates) on one grid.
template <int D, int W>
ExperimentResult stability_initial_value(const SdeModel<D, W>& model, const std::vector<double>& gaps, double mesh,
                                         const ExperimentSettings<D>& settings) {
  model.validate();
  settings.validate();
  if (gaps.empty()) throw std::invalid_argument("gaps must not be empty");
  for (double g : gaps) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("gaps must be non-negative");
  }
  const auto map = build_grid_with_mesh(mesh, settings.horizon);
  const TruncatedJumpLaw<D> tlaw(model.jumps, settings.epsilon);
  const std::uint64_t tag = hash_tag("stability");

  ExperimentResult out;
  out.table.kind = ExperimentKind::stability;
  out.table.p = settings.p;
  detail::check_mc_hypothesis(model, settings, out);

  std::vector<Vec<D>> starts{settings.x0};
  for (double g : gaps) starts.push_back(detail::offset<D>(settings.x0, g));
  // exact zero gap must reproduce the base arm bit-for-bit
  for (std::size_t j = 0; j < gaps.size(); ++j) {
    if (gaps[j] == 0.0) starts[1 + j] = settings.x0;
  }

  detail::ArmMatrix<D> arms(starts.size(), settings.n_paths);
  const SchemeConfig<D> config{settings.start_time, settings.x0, map, settings.epsilon, settings.mc_samples, false};
  parallel_for(settings.n_paths, settings.threads, [&](std::size_t k) {
    const auto noise = detail::path_noise<D, W>(map, tlaw, settings.seed, tag, k);
    const auto res = simulate_coupled(model, config, std::span<const Vec<D>>(starts), noise);
    for (std::size_t a = 0; a < res.size(); ++a) arms.store(a, k, res[a]);
  });

  for (std::size_t j = 0; j < gaps.size(); ++j) {
    auto row = arms.compare(0, 1 + j, settings.p, settings.seed);
    row.abscissa = gaps[j];
    out.table.rows.push_back(row);
  }
  out.diverged_paths = arms.diverged_paths();
  try {
    out.fit = fit_loglog_slope(out.table);
  } catch (const std::invalid_argument&) {
    out.fit.reset();
  }
  return out;
}

/// Stability error at every (gap, mesh) pair. One noise realization per path
/// is drawn at the finest mesh and coarsened to the others.
template <int D, int W>
ExperimentResult heatmap_joint(const SdeModel<D, W>& model, const std::vector<double>& gaps,
                               const std::vector<double>& meshes, const ExperimentSettings<D>& settings) {
  model.validate();
  settings.validate();
  if (gaps.empty() || meshes.empty()) throw std::invalid_argument("heatmap needs gaps and meshes");
  for (double g : gaps) {
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gaps must be positive");
  }
  detail::check_unique(gaps, "gaps");
  detail::check_unique(meshes, "meshes");
  const double finest = *std::min_element(meshes.begin(), meshes.end());
  detail::check_dyadic_family(meshes, finest, settings.horizon);

  const auto fine_map = build_grid_with_mesh(finest, settings.horizon);
  std::vector<DiscretizationMap> maps;
  for (double m : meshes) maps.push_back(build_grid_with_mesh(m, settings.horizon));
  const TruncatedJumpLaw<D> tlaw(model.jumps, settings.epsilon);
  // same streams as the stability study: a 1x1 heatmap is a stability row
  const std::uint64_t tag = hash_tag("stability");

  ExperimentResult out;
  out.table.kind = ExperimentKind::heatmap;
  out.table.p = settings.p;
  detail::check_mc_hypothesis(model, settings, out);

  std::vector<Vec<D>> starts{settings.x0};
  for (double g : gaps) starts.push_back(detail::offset<D>(settings.x0, g));
  const std::size_t per_mesh = starts.size();

  detail::ArmMatrix<D> arms(per_mesh * meshes.size(), settings.n_paths);
  parallel_for(settings.n_paths, settings.threads, [&](std::size_t k) {
    const auto noise = detail::path_noise<D, W>(fine_map, tlaw, settings.seed, tag, k);
    for (std::size_t m = 0; m < maps.size(); ++m) {
      const SchemeConfig<D> config{settings.start_time, settings.x0, maps[m], settings.epsilon, settings.mc_samples, false};
      const auto res = simulate_coupled(model, config, std::span<const Vec<D>>(starts), noise);
      for (std::size_t a = 0; a < res.size(); ++a) arms.store(m * per_mesh + a, k, res[a]);
    }
  });

  for (std::size_t j = 0; j < gaps.size(); ++j) {
    for (std::size_t m = 0; m < meshes.size(); ++m) {
      auto row = arms.compare(m * per_mesh, m * per_mesh + 1 + j, settings.p, settings.seed);
      row.abscissa = gaps[j];
      row.mesh = meshes[m];
      out.table.rows.push_back(row);
    }
  }
  out.diverged_paths = arms.diverged_paths();
  return out;
}

/// Error between runs started at (s, x0) and (s~, x0) for each s~, all
/// evaluated at T on a shared noise realization. Rows are (|s~ - s|, error).
/// Start times must be grid points of the mesh.
template <int D, int W>
ExperimentResult initial_time_perturbation(const SdeModel<D, W>& model, const std::vector<double>& s_values,
                                           double mesh, const ExperimentSettings<D>& settings) {
  model.validate();
  settings.validate();
  if (s_values.empty()) throw std::invalid_argument("s values must not be empty");
  const auto map = build_grid_with_mesh(mesh, settings.horizon);
  for (double sv : s_values) {
    if (!(sv >= 0.0 && sv < settings.horizon)) throw std::invalid_argument("s values must lie in [0, T)");
    (void)locate_point(map.points(), sv);
  }
  (void)locate_point(map.points(), settings.start_time);
  std::vector<double> ds;
  for (double sv : s_values) ds.push_back(std::abs(sv - settings.start_time));
  detail::check_unique(ds, "|s~ - s| values");

  const TruncatedJumpLaw<D> tlaw(model.jumps, settings.epsilon);
  const std::uint64_t tag = hash_tag("timeshift");

  ExperimentResult out;
  out.table.kind = ExperimentKind::timeshift;
  out.table.p = settings.p;
  detail::check_mc_hypothesis(model, settings, out);

  detail::ArmMatrix<D> arms(1 + s_values.size(), settings.n_paths);
  parallel_for(settings.n_paths, settings.threads, [&](std::size_t k) {
    const auto noise = detail::path_noise<D, W>(map, tlaw, settings.seed, tag, k);
    SchemeConfig<D> config{settings.start_time, settings.x0, map, settings.epsilon, settings.mc_samples, false};
    arms.store(0, k, simulate_path(model, config, noise));
    for (std::size_t j = 0; j < s_values.size(); ++j) {
      config.start_time = s_values[j];
      arms.store(1 + j, k, simulate_path(model, config, noise));
    }
  });

  for (std::size_t j = 0; j < s_values.size(); ++j) {
    auto row = arms.compare(0, 1 + j, settings.p, settings.seed);
    row.abscissa = ds[j];
    out.table.rows.push_back(row);
  }
  out.diverged_paths = arms.diverged_paths();
  try {
    out.fit = fit_loglog_slope(out.table);
  } catch (const std::invalid_argument&) {
    out.fit.reset();
  }
  return out;
}

}  // namespace tamed
