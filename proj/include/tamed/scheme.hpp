#pragma once

// The fully implementable tamed Euler scheme: tamed drift and diffusion,
// jumps of size >= eps taken from a Poisson stream, and a Monte-Carlo
// estimate of the truncated compensator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "tamed/grid.hpp"
#include "tamed/levy.hpp"
#include "tamed/model.hpp"
#include "tamed/rng.hpp"

namespace tamed {

/// One draw of the driving noise at the resolution of a fine grid. Coarser
/// nested grids reuse it, which couples runs at different meshes.
template <int D, int W>
struct NoiseRealization {
  DiscretizationMap fine;
  std::vector<Vec<W>> brownian;  // increment over each fine cell
  JumpEventStream<D> jumps;      // events on (0, T] with |z| >= eps
  std::uint64_t compensator_seed = 0;
  double epsilon = 0.0;
};

/// Draws Brownian increments N(0, dt I) per fine cell and the truncated
/// jump stream over (0, T]. Compensator variates are not stored; they are
/// regenerated from `compensator_seed` keyed by (grid, anchor time).
template <int D, int W>
NoiseRealization<D, W> draw_noise(const DiscretizationMap& fine, const TruncatedJumpLaw<D>& tlaw,
                                  Engine& brownian_rng, Engine& jump_rng, std::uint64_t compensator_seed) {
  NoiseRealization<D, W> n{fine, {}, {}, compensator_seed, tlaw.epsilon()};
  const auto pts = fine.points();
  n.brownian.resize(fine.cells());
  boost::random::normal_distribution<double> normal;
  for (std::size_t i = 0; i < fine.cells(); ++i) {
    const double sd = std::sqrt(pts[i + 1] - pts[i]);
    for (int j = 0; j < W; ++j) n.brownian[i][j] = sd * normal(brownian_rng);
  }
  n.jumps = sample_jump_events(tlaw, 0.0, fine.horizon(), jump_rng);
  return n;
}

template <int D>
struct SchemeConfig {
  double start_time = 0.0;
  Vec<D> initial_value = Vec<D>::Zero();
  DiscretizationMap map;
  double epsilon = 0.05;
  std::size_t mc_samples = 1000;
  bool record_full_path = false;

  void validate() const {
    if (!(start_time >= 0.0 && start_time <= map.horizon())) throw std::invalid_argument("start time s must lie in [0, T]");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
    if (!initial_value.allFinite()) throw std::invalid_argument("initial value must be finite");
  }

  /// (1 v eps^{-2} Z_d)^2, the Monte-Carlo sample size required by the error bounds.
  double required_mc_samples(double zd) const {
    const double b = std::max(1.0, zd / (epsilon * epsilon));
    return b * b;
  }

  bool mc_hypothesis_violated(double zd) const {
    return static_cast<double>(mc_samples) < required_mc_samples(zd);
  }
};

struct PathDiagnostics {
  std::size_t steps = 0;
  std::size_t jumps_consumed = 0;
  std::size_t compensator_draws = 0;
  bool diverged = false;
  double diverged_at = 0.0;
};

template <int D>
struct PathResult {
  Vec<D> terminal_value = Vec<D>::Zero();
  std::vector<std::pair<double, Vec<D>>> trajectory;
  PathDiagnostics diagnostics;
};

/// (nu(A_eps) / M) * sum_i gamma(x, V_i), V_i i.i.d. from nu_eps.
/// `scratch` must hold M sizes.
template <int D, int W>
Vec<D> mc_compensator(const SdeModel<D, W>& model, const TruncatedJumpLaw<D>& tlaw, const Vec<D>& x,
                      std::span<Vec<D>> scratch, Engine& rng) {
  if (scratch.empty()) throw std::invalid_argument("compensator needs M >= 1");
  if (!(tlaw.mass() > 0.0)) return Vec<D>::Zero();
  tlaw.sample_block(rng, scratch);
  return model.jump_sum(x, std::span<const Vec<D>>(scratch.data(), scratch.size())) *
         (tlaw.mass() / static_cast<double>(scratch.size()));
}

template <int D, int W>
Vec<D> mc_compensator(const SdeModel<D, W>& model, const TruncatedJumpLaw<D>& tlaw, const Vec<D>& x,
                      std::size_t mc_samples, Engine& rng) {
  if (mc_samples < 1) throw std::invalid_argument("compensator needs M >= 1");
  std::vector<Vec<D>> scratch(mc_samples);
  return mc_compensator(model, tlaw, x, std::span<Vec<D>>(scratch), rng);
}

/// x + mu^d(x) dt + sigma^d(x) dW + jump_sum - comp dt, with taming at `mesh`.
template <int D, int W>
Vec<D> step(const SdeModel<D, W>& model, double mesh, const Vec<D>& x_prev, const Vec<W>& dW,
            const Vec<D>& jump_sum, const Vec<D>& comp_est, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step needs dt > 0");
  const double f = taming_factor<D>(x_prev, mesh, model.chi);
  return x_prev + (model.drift(x_prev) * (f * dt)) + (model.diffusion(x_prev) * f) * dW + jump_sum - comp_est * dt;
}

/// Per-cell view of a noise realization on a nested coarser grid.
template <int D, int W>
struct CoarseNoise {
  DiscretizationMap map;
  std::vector<Vec<W>> brownian;         // summed fine increments per coarse cell
  std::vector<std::size_t> jump_begin;  // events [jump_begin[i], jump_begin[i+1]) fall in cell i
};

namespace detail {

template <int W>
Vec<W> sum_increments(const std::vector<Vec<W>>& inc, std::size_t from, std::size_t to) {
  Vec<W> s = Vec<W>::Zero();
  for (std::size_t j = from; j < to; ++j) s += inc[j];
  return s;
}

}  // namespace detail

template <int D, int W>
CoarseNoise<D, W> coarsen_noise(const NoiseRealization<D, W>& noise, const DiscretizationMap& target) {
  const auto idx = nest_indices(target.grid(), noise.fine.grid());
  CoarseNoise<D, W> c{target, {}, {}};
  c.brownian.reserve(target.cells());
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) c.brownian.push_back(detail::sum_increments(noise.brownian, idx[i], idx[i + 1]));
  const auto pts = target.points();
  const auto& ev = noise.jumps.events;
  c.jump_begin.resize(pts.size());
  std::size_t k = 0;
  c.jump_begin[0] = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    while (k < ev.size() && ev[k].time <= pts[i]) ++k;
    c.jump_begin[i] = k;
  }
  return c;
}

/// Simulates several arms that share grid, start time, noise and compensator
/// variates but differ in their initial value. Each step draws the M
/// compensator sizes once and evaluates them for every live arm.
template <int D, int W>
std::vector<PathResult<D>> simulate_coupled(const SdeModel<D, W>& model, const SchemeConfig<D>& config,
                                            std::span<const Vec<D>> initial_values,
                                            const NoiseRealization<D, W>& noise) {
  config.validate();
  const auto& map = config.map;
  const auto pts = map.points();
  const double horizon = map.horizon();
  const double s = config.start_time;
  if (s > horizon) throw std::invalid_argument("start time after horizon");
  if (noise.epsilon != 0.0 && noise.epsilon != config.epsilon)
    throw std::invalid_argument("noise was drawn for a different epsilon");

  const auto fine_pts = noise.fine.points();
  const auto idx = nest_indices(map.grid(), noise.fine.grid());
  const std::size_t s_fine = locate_point(fine_pts, s);

  const TruncatedJumpLaw<D> tlaw(model.jumps, config.epsilon);
  const double mesh = map.mesh();
  const std::uint64_t grid_key = map.grid().fingerprint();

  std::vector<PathResult<D>> out(initial_values.size());
  std::vector<Vec<D>> state(initial_values.begin(), initial_values.end());
  std::size_t live = state.size();
  for (std::size_t a = 0; a < state.size(); ++a) {
    if (config.record_full_path) out[a].trajectory.emplace_back(s, state[a]);
  }

  std::vector<Vec<D>> comp_sizes(config.mc_samples);
  std::vector<Vec<D>> cell_sizes;
  const auto& events = noise.jumps.events;
  // first event strictly after s
  std::size_t ev = static_cast<std::size_t>(
      std::upper_bound(events.begin(), events.end(), s, [](double t, const JumpEvent<D>& e) { return t < e.time; }) -
      events.begin());

  // first grid point strictly after s
  std::size_t i = static_cast<std::size_t>(std::upper_bound(pts.begin(), pts.end(), s) - pts.begin());
  double anchor = s;
  std::size_t anchor_fine = s_fine;
  for (; i < pts.size() && live > 0; ++i) {
    const double right = pts[i];
    const std::size_t right_fine = idx[i];
    const double dt = right - anchor;
    const Vec<W> dW = detail::sum_increments(noise.brownian, anchor_fine, right_fine);

    cell_sizes.clear();
    while (ev < events.size() && events[ev].time <= right) cell_sizes.push_back(events[ev++].size);

    const bool has_comp = tlaw.mass() > 0.0;
    if (has_comp) {
      Engine comp_rng(derive_seed(noise.compensator_seed, {grid_key, time_key(anchor)}));
      tlaw.sample_block(comp_rng, comp_sizes);
    }
    const std::span<const Vec<D>> comp_view(comp_sizes.data(), comp_sizes.size());
    const std::span<const Vec<D>> jump_view(cell_sizes.data(), cell_sizes.size());
    const double comp_scale = tlaw.mass() / static_cast<double>(config.mc_samples);

    for (std::size_t a = 0; a < state.size(); ++a) {
      auto& diag = out[a].diagnostics;
      if (diag.diverged) continue;
      const Vec<D>& x = state[a];
      const Vec<D> jsum = jump_view.empty() ? Vec<D>(Vec<D>::Zero()) : model.jump_sum(x, jump_view);
      const Vec<D> comp = has_comp ? Vec<D>(model.jump_sum(x, comp_view) * comp_scale) : Vec<D>(Vec<D>::Zero());
      const Vec<D> next = step(model, mesh, x, dW, jsum, comp, dt);
      ++diag.steps;
      diag.jumps_consumed += cell_sizes.size();
      if (has_comp) diag.compensator_draws += config.mc_samples;
      if (!next.allFinite()) {
        diag.diverged = true;
        diag.diverged_at = right;
        --live;
        continue;
      }
      state[a] = next;
      if (config.record_full_path) out[a].trajectory.emplace_back(right, next);
    }
    anchor = right;
    anchor_fine = right_fine;
  }
  for (std::size_t a = 0; a < state.size(); ++a) out[a].terminal_value = state[a];
  return out;
}

/// One path of the scheme from (s, x) on config.map, driven by `noise`.
template <int D, int W>
PathResult<D> simulate_path(const SdeModel<D, W>& model, const SchemeConfig<D>& config,
                            const NoiseRealization<D, W>& noise) {
  const Vec<D> x = config.initial_value;
  auto r = simulate_coupled(model, config, std::span<const Vec<D>>(&x, 1), noise);
  return std::move(r.front());
}

}  // namespace tamed
