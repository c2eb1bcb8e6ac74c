#pragma once

// Finite-intensity Levy measures nu(dz) = lambda * phi(z) dz, their
// truncation to the large-jump region A_eps = {|z| >= eps}, jump-event
// sampling and quadrature of jump moments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/normal_distribution.hpp>

#include "tamed/rng.hpp"

namespace tamed {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

/// Law of a single jump size. Implementations must be immutable and
/// re-entrant; sampling draws only from the engine that is passed in.
template <int D>
class SizeDistribution {
 public:
  virtual ~SizeDistribution() = default;

  virtual Vec<D> sample(Engine& rng) const = 0;

  /// P(|Z| >= eps).
  virtual double tail_probability(double eps) const = 0;

  /// Fills `out` with draws conditioned on |Z| >= eps (rejection from sample()).
  virtual void sample_truncated(Engine& rng, double eps, std::span<Vec<D>> out) const {
    std::size_t k = 0;
    while (k < out.size()) {
      out[k] = sample(rng);
      k += out[k].norm() >= eps ? 1 : 0;
    }
  }

  /// Lebesgue density; only one-dimensional laws provide it.
  virtual bool has_density() const { return false; }
  virtual double density(double) const { throw std::logic_error("size law has no density"); }

  virtual std::string kind() const { return "custom"; }
};

/// N(mean, stddev^2) jump sizes.
class GaussianSizes final : public SizeDistribution<1> {
 public:
  GaussianSizes(double mean, double stddev) : mean_(mean), stddev_(stddev) {
    if (!(stddev > 0.0) || !std::isfinite(stddev) || !std::isfinite(mean))
      throw std::invalid_argument("gaussian sizes need finite mean and positive std");
  }

  double mean() const noexcept { return mean_; }
  double stddev() const noexcept { return stddev_; }

  double cdf(double z) const noexcept {
    return 0.5 * std::erfc(-(z - mean_) / (stddev_ * std::numbers::sqrt2));
  }

  Vec<1> sample(Engine& rng) const override {
    boost::random::normal_distribution<double> normal(mean_, stddev_);
    return Vec<1>(normal(rng));
  }

  double tail_probability(double eps) const override {
    // upper tail via erfc to keep precision when eps is far above the mean
    const double upper = 0.5 * std::erfc((eps - mean_) / (stddev_ * std::numbers::sqrt2));
    return upper + cdf(-eps);
  }

  void sample_truncated(Engine& rng, double eps, std::span<Vec<1>> out) const override {
    // rejection with branch-free compaction: a rejected draw is overwritten
    boost::random::normal_distribution<double> normal(mean_, stddev_);
    std::size_t k = 0;
    const std::size_t n = out.size();
    while (k < n) {
      const double v = normal(rng);
      out[k][0] = v;
      k += static_cast<std::size_t>(std::abs(v) >= eps);
    }
  }

  bool has_density() const override { return true; }
  double density(double z) const override {
    const double u = (z - mean_) / stddev_;
    return std::exp(-0.5 * u * u) / (stddev_ * std::sqrt(2.0 * std::numbers::pi));
  }

  std::string kind() const override { return "gaussian"; }

 private:
  double mean_;
  double stddev_;
};

/// One-dimensional law assembled from callables.
class CallableSizes final : public SizeDistribution<1> {
 public:
  CallableSizes(std::function<double(double)> density, std::function<double(double)> cdf,
                std::function<double(Engine&)> sampler)
      : density_(std::move(density)), cdf_(std::move(cdf)), sampler_(std::move(sampler)) {
    if (!density_ || !cdf_ || !sampler_) throw std::invalid_argument("callable sizes need density, cdf and sampler");
  }

  Vec<1> sample(Engine& rng) const override { return Vec<1>(sampler_(rng)); }
  double tail_probability(double eps) const override { return 1.0 - cdf_(eps) + cdf_(-eps); }
  bool has_density() const override { return true; }
  double density(double z) const override { return density_(z); }

 private:
  std::function<double(double)> density_;
  std::function<double(double)> cdf_;
  std::function<double(Engine&)> sampler_;
};

/// d-dimensional law given by a sampler and its tail function eps -> P(|Z| >= eps).
template <int D>
class SampledSizes final : public SizeDistribution<D> {
 public:
  SampledSizes(std::function<Vec<D>(Engine&)> sampler, std::function<double(double)> tail)
      : sampler_(std::move(sampler)), tail_(std::move(tail)) {
    if (!sampler_ || !tail_) throw std::invalid_argument("sampled sizes need sampler and tail function");
  }
  Vec<D> sample(Engine& rng) const override { return sampler_(rng); }
  double tail_probability(double eps) const override { return tail_(eps); }

 private:
  std::function<Vec<D>(Engine&)> sampler_;
  std::function<double(double)> tail_;
};

/// nu(dz) = lambda * phi(z) dz.
template <int D>
class JumpLaw {
 public:
  JumpLaw(double intensity, std::shared_ptr<const SizeDistribution<D>> sizes)
      : intensity_(intensity), sizes_(std::move(sizes)) {
    if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw std::invalid_argument("lambda must be >= 0");
    if (!sizes_) throw std::invalid_argument("jump law needs a size distribution");
  }

  double intensity() const noexcept { return intensity_; }
  const SizeDistribution<D>& sizes() const noexcept { return *sizes_; }
  std::shared_ptr<const SizeDistribution<D>> sizes_ptr() const noexcept { return sizes_; }

 private:
  double intensity_;
  std::shared_ptr<const SizeDistribution<D>> sizes_;
};

inline JumpLaw<1> gaussian_jump_law(double intensity, double mean, double stddev) {
  return JumpLaw<1>(intensity, std::make_shared<const GaussianSizes>(mean, stddev));
}

/// nu restricted to A_eps; `mass` is nu(A_eps) and samples follow nu_eps.
template <int D>
class TruncatedJumpLaw {
 public:
  TruncatedJumpLaw(JumpLaw<D> base, double epsilon) : base_(std::move(base)), epsilon_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    tail_prob_ = std::clamp(base_.sizes().tail_probability(epsilon), 0.0, 1.0);
    mass_ = base_.intensity() * tail_prob_;
  }

  const JumpLaw<D>& base() const noexcept { return base_; }
  double epsilon() const noexcept { return epsilon_; }
  double tail_prob() const noexcept { return tail_prob_; }
  double mass() const noexcept { return mass_; }

  Vec<D> sample(Engine& rng) const {
    if (!(mass_ > 0.0)) throw std::domain_error("truncated jump law has zero mass");
    Vec<D> z;
    base_.sizes().sample_truncated(rng, epsilon_, std::span<Vec<D>>(&z, 1));
    return z;
  }

  void sample_block(Engine& rng, std::span<Vec<D>> out) const {
    if (!(mass_ > 0.0)) throw std::domain_error("truncated jump law has zero mass");
    base_.sizes().sample_truncated(rng, epsilon_, out);
  }

 private:
  JumpLaw<D> base_;
  double epsilon_;
  double tail_prob_ = 0.0;
  double mass_ = 0.0;
};

template <int D>
TruncatedJumpLaw<D> truncate(const JumpLaw<D>& law, double epsilon) {
  return TruncatedJumpLaw<D>(law, epsilon);
}

template <int D>
Vec<D> sample_truncated_size(const TruncatedJumpLaw<D>& tlaw, Engine& rng) {
  return tlaw.sample(rng);
}

template <int D>
struct JumpEvent {
  double time;
  Vec<D> size;
};

/// Jumps of the truncated Poisson random measure on (t0, t1], sorted by time.
template <int D>
struct JumpEventStream {
  double t0 = 0.0;
  double t1 = 0.0;
  std::vector<JumpEvent<D>> events;

  std::size_t size() const noexcept { return events.size(); }
  bool empty() const noexcept { return events.empty(); }
};

/// Poisson(mass * (t1 - t0)) events: count first, then i.i.d. uniform times
/// on (t0, t1] (sorted), then i.i.d. sizes from nu_eps.
template <int D>
JumpEventStream<D> sample_jump_events(const TruncatedJumpLaw<D>& tlaw, double t0, double t1, Engine& rng) {
  if (!(t0 < t1)) throw std::invalid_argument("jump interval needs t0 < t1");
  JumpEventStream<D> stream{t0, t1, {}};
  if (!(tlaw.mass() > 0.0)) return stream;
  std::poisson_distribution<long> count_dist(tlaw.mass() * (t1 - t0));
  const long count = count_dist(rng);
  std::vector<double> times(static_cast<std::size_t>(count));
  for (auto& t : times) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    t = std::min(t1, t0 + u * (t1 - t0));
    if (!(t > t0)) t = std::nextafter(t0, t1);
  }
  std::sort(times.begin(), times.end());
  std::vector<Vec<D>> sizes(times.size());
  if (!sizes.empty()) tlaw.sample_block(rng, sizes);
  stream.events.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) stream.events.push_back({times[i], sizes[i]});
  return stream;
}

namespace detail {

struct QuadResult {
  double value;
  double error;
};

// A relative tolerance near the roundoff floor makes the error estimate
// stall and the bisection run to full depth everywhere; 1e-12 is reachable.
inline QuadResult gk_integrate(const std::function<double(double)>& g, double a, double b) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, a, b, 15, 1e-12, &err);
  return {v, err};
}

inline void check_quadrature(const QuadResult& r, double abs_tol) {
  if (!std::isfinite(r.value) || r.error > std::max(abs_tol, 1e-10 * std::abs(r.value)))
    throw std::runtime_error("jump-moment quadrature did not converge (error estimate " + std::to_string(r.error) +
                             ")");
}

}  // namespace detail

inline constexpr double kMomentTolerance = 1e-10;

/// lambda * integral over [a, b] of f(z) phi(z) dz. Infinite bounds allowed.
inline double integrate_measure(const JumpLaw<1>& law, const std::function<double(double)>& f, double a, double b) {
  if (!law.sizes().has_density()) throw std::logic_error("quadrature needs a size density");
  if (law.intensity() == 0.0 || !(a < b)) return 0.0;
  const auto& sizes = law.sizes();
  auto g = [&](double z) { return f(z) * sizes.density(z); };
  const auto r = detail::gk_integrate(g, a, b);
  detail::check_quadrature(r, kMomentTolerance / std::max(1.0, law.intensity()));
  return law.intensity() * r.value;
}

/// Integral over A_eps of f d(nu).
inline double truncated_moment(const TruncatedJumpLaw<1>& tlaw, const std::function<double(double)>& f) {
  const double inf = std::numeric_limits<double>::infinity();
  const double eps = tlaw.epsilon();
  return integrate_measure(tlaw.base(), f, -inf, -eps) + integrate_measure(tlaw.base(), f, eps, inf);
}

/// Integral over R of f d(nu).
inline double levy_moment(const JumpLaw<1>& law, const std::function<double(double)>& f) {
  const double inf = std::numeric_limits<double>::infinity();
  return integrate_measure(law, f, -inf, 0.0) + integrate_measure(law, f, 0.0, inf);
}

/// Integral over {|z| <= eps} of f d(nu).
inline double small_jump_moment(const JumpLaw<1>& law, double eps, const std::function<double(double)>& f) {
  return integrate_measure(law, f, -eps, eps);
}

/// sup over rho in [1, p0] of integral |z|^rho nu(dz), scanned on a grid of rho values.
inline double sup_abs_moment(const JumpLaw<1>& law, double p0, int rho_points = 41) {
  double best = 0.0;
  for (int k = 0; k < rho_points; ++k) {
    const double rho = 1.0 + (p0 - 1.0) * k / std::max(1, rho_points - 1);
    best = std::max(best, levy_moment(law, [rho](double z) { return std::pow(std::abs(z), rho); }));
  }
  return best;
}

/// Z_d = max{lambda, sup_rho integral |z|^rho nu(dz)}.
inline double estimate_zd(const JumpLaw<1>& law, double p0) {
  return std::max(law.intensity(), sup_abs_moment(law, p0));
}

}  // namespace tamed
