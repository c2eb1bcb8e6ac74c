#pragma once

// Time meshes and the left-anchor discretization map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tamed/rng.hpp"

namespace tamed {

/// Strictly increasing time points 0 = t_0 < ... < t_n = T with every
/// gap strictly below 1. Immutable after construction.
class Grid {
 public:
  explicit Grid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("grid needs at least 2 points");
    if (points_.front() != 0.0) throw std::invalid_argument("grid must start at 0");
    for (std::size_t i = 1; i < points_.size(); ++i) {
      const double gap = points_[i] - points_[i - 1];
      if (!(gap > 0.0)) throw std::invalid_argument("grid points must be strictly increasing");
      if (!(gap < 1.0)) throw std::invalid_argument("grid gap >= 1 at index " + std::to_string(i));
    }
  }

  std::span<const double> points() const noexcept { return points_; }
  double horizon() const noexcept { return points_.back(); }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t cells() const noexcept { return points_.size() - 1; }
  double operator[](std::size_t i) const { return points_[i]; }

  /// Hash of the point set; keys grid-indexed random streams.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = mix64(points_.size());
    for (double t : points_) h = combine(h, time_key(t));
    return h;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<double> points_;
};

/// A member of the discretization-map family: delta(t) maps t to the grid
/// point at or before it, with delta([t_0, t_1]) = t_0 and
/// delta((t_{i-1}, t_i]) = t_{i-1}.
class DiscretizationMap {
 public:
  explicit DiscretizationMap(Grid grid) : grid_(std::move(grid)) {
    const auto p = grid_.points();
    for (std::size_t i = 1; i < p.size(); ++i) mesh_ = std::max(mesh_, p[i] - p[i - 1]);
  }

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> points() const noexcept { return grid_.points(); }
  double mesh() const noexcept { return mesh_; }
  double horizon() const noexcept { return grid_.horizon(); }
  std::size_t cells() const noexcept { return grid_.cells(); }

  /// Index i such that delta(t) = t_i.
  std::size_t anchor_index(double t) const {
    const auto p = grid_.points();
    if (!(t >= 0.0 && t <= p.back())) throw std::out_of_range("time outside [0, T]");
    if (t <= p[1]) return 0;
    // first point >= t; the anchor is the one before it
    const auto it = std::lower_bound(p.begin(), p.end(), t);
    return static_cast<std::size_t>(it - p.begin()) - 1;
  }

  double operator()(double t) const { return grid_[anchor_index(t)]; }

  friend bool operator==(const DiscretizationMap&, const DiscretizationMap&) = default;

 private:
  Grid grid_;
  double mesh_ = 0.0;
};

inline double delta_eval(const DiscretizationMap& map, double t) { return map(t); }

/// Uniform grid t_i = i T / n. Computed as (T * i) / n so that dyadic
/// refinements reproduce coarse points bit-for-bit.
inline DiscretizationMap build_uniform_grid(std::size_t n, double horizon) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("T must be positive");
  if (!(horizon / static_cast<double>(n) < 1.0)) throw std::invalid_argument("grid gap >= 1 (T/n must be < 1)");
  std::vector<double> pts(n + 1);
  for (std::size_t i = 0; i <= n; ++i) pts[i] = (horizon * static_cast<double>(i)) / static_cast<double>(n);
  pts[n] = horizon;
  return DiscretizationMap(Grid(std::move(pts)));
}

/// Uniform grid whose mesh is the requested step; T / mesh must be an integer.
inline DiscretizationMap build_grid_with_mesh(double mesh, double horizon) {
  if (!(mesh > 0.0)) throw std::invalid_argument("mesh must be positive");
  const double n = horizon / mesh;
  const double rounded = std::round(n);
  if (rounded < 1.0 || std::abs(n - rounded) > 1e-9 * std::max(1.0, n))
    throw std::invalid_argument("T / mesh must be a positive integer");
  return build_uniform_grid(static_cast<std::size_t>(rounded), horizon);
}

/// Index j with fine[j] == t (to a relative 1e-12 of T), or throws.
inline std::size_t locate_point(std::span<const double> fine, double t) {
  const double tol = 1e-12 * std::max(1.0, fine.back());
  auto it = std::lower_bound(fine.begin(), fine.end(), t - tol);
  if (it == fine.end() || std::abs(*it - t) > tol)
    throw std::invalid_argument("incompatible grids: point " + std::to_string(t) + " is not on the fine grid");
  return static_cast<std::size_t>(it - fine.begin());
}

/// For each coarse point, its index in the fine grid. Throws unless every
/// coarse cell is a union of fine cells.
inline std::vector<std::size_t> nest_indices(const Grid& coarse, const Grid& fine) {
  if (std::abs(coarse.horizon() - fine.horizon()) > 1e-12 * std::max(1.0, fine.horizon()))
    throw std::invalid_argument("incompatible grids: horizons differ");
  std::vector<std::size_t> idx(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) idx[i] = locate_point(fine.points(), coarse[i]);
  return idx;
}

/// True when mesh is an exact power of two.
inline bool is_dyadic_mesh(double mesh) {
  int e = 0;
  const double m = std::frexp(mesh, &e);
  return m == 0.5;
}

}  // namespace tamed
