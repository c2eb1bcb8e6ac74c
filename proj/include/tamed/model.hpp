#pragma once

// SDE coefficient triples, the taming transform, the admissible error
// exponent p*, built-in models and statistical assumption probes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tamed/levy.hpp"
#include "tamed/rng.hpp"

namespace tamed {

/// Constants of the coefficient conditions. Unset means "not declared";
/// probes estimate them.
struct ModelConstants {
  std::optional<double> L;    // one-sided and polynomial Lipschitz
  std::optional<double> L_d;  // jump Lipschitz
  std::optional<double> N_d;  // jump growth
  std::optional<double> Z_d;  // small-jump / measure bound
  std::optional<double> q;    // small-jump exponent
};

/// dX = mu(X-) dt + sigma(X-) dW + int gamma(X-, z) pi~(dz, dt) in R^D,
/// driven by a W-dimensional Brownian motion.
///
/// Coefficient callables must be pure and re-entrant: paths are simulated
/// concurrently against one shared model.
template <int D, int W = D>
struct SdeModel {
  using State = Vec<D>;
  using JumpSize = Vec<D>;
  using BrownianIncrement = Vec<W>;
  using DiffusionMatrix = Eigen::Matrix<double, D, W>;

  static constexpr int kDim = D;
  static constexpr int kBrownianDim = W;

  std::string name = "custom";
  std::function<State(const State&)> drift;
  std::function<DiffusionMatrix(const State&)> diffusion;
  std::function<State(const State&, const JumpSize&)> jump;
  /// Optional fast path for sum_i gamma(x, z_i); must agree with `jump`.
  std::function<State(const State&, std::span<const JumpSize>)> jump_total;
  double chi = 1.0;
  double p0 = 2.0;
  JumpLaw<D> jumps;
  ModelConstants constants{};

  State jump_sum(const State& x, std::span<const JumpSize> sizes) const {
    if (jump_total) return jump_total(x, sizes);
    State acc = State::Zero();
    for (const auto& z : sizes) acc += jump(x, z);
    return acc;
  }

  void validate() const {
    if (!drift || !diffusion || !jump) throw std::invalid_argument("model '" + name + "' is missing a coefficient");
    if (!(chi >= 1.0)) throw std::invalid_argument("chi must be >= 1");
    if (!(p0 >= 2.0)) throw std::invalid_argument("p0 must be >= 2");
  }
};

using Model1D = SdeModel<1, 1>;

template <int D, int W>
struct TamedValues {
  Vec<D> drift;
  Eigen::Matrix<double, D, W> diffusion;
};

/// 1 / (1 + mesh^{1/2} |x|^chi)^{1/2}, the common taming factor.
template <int D>
double taming_factor(const Vec<D>& x, double mesh, double chi) {
  const double r = x.norm();
  if (r == 0.0) return 1.0;
  return 1.0 / std::sqrt(1.0 + std::sqrt(mesh) * std::pow(r, chi));
}

template <int D, int W>
TamedValues<D, W> tame(const SdeModel<D, W>& model, double mesh, const Vec<D>& x) {
  if (!(mesh > 0.0)) throw std::invalid_argument("mesh must be positive");
  const double f = taming_factor<D>(x, mesh, model.chi);
  return {model.drift(x) * f, model.diffusion(x) * f};
}

/// Tamed coefficients of a model at a fixed mesh.
template <int D, int W>
class TamedCoefficients {
 public:
  TamedCoefficients(const SdeModel<D, W>& base, double mesh) : base_(&base), mesh_(mesh) {
    if (!(mesh > 0.0)) throw std::invalid_argument("mesh must be positive");
  }
  double mesh() const noexcept { return mesh_; }
  const SdeModel<D, W>& base() const noexcept { return *base_; }
  TamedValues<D, W> operator()(const Vec<D>& x) const { return tame(*base_, mesh_, x); }

 private:
  const SdeModel<D, W>* base_;
  double mesh_;
};

// ---------------------------------------------------------------------------
// p*

struct PStarTerms {
  std::array<double, 3> terms{};
  std::size_t argmin = 0;
  double value() const noexcept { return terms[argmin]; }
};

inline constexpr double kDefaultZeta = 0.01;

inline PStarTerms pstar_terms(double p0, double chi, double zeta = kDefaultZeta) {
  if (!(p0 >= 2.0) || !(chi >= 1.0) || !(zeta > 0.0)) throw std::invalid_argument("pstar needs p0 >= 2, chi >= 1, zeta > 0");
  PStarTerms t;
  const double cz = chi * zeta;
  t.terms[0] = 2.0 * p0 / (chi + 2.0) - zeta;
  t.terms[1] = 2.0 * p0 / (3.0 * chi + 2.0);
  t.terms[2] = (-cz + std::sqrt(cz * (cz + 8.0 * p0))) / (2.0 * chi);
  t.argmin = static_cast<std::size_t>(std::min_element(t.terms.begin(), t.terms.end()) - t.terms.begin());
  return t;
}

inline double pstar(double p0, double chi, double zeta = kDefaultZeta) { return pstar_terms(p0, chi, zeta).value(); }

// ---------------------------------------------------------------------------
// Built-in models. Both use gamma(x, z) = x z and N(0.05, 0.15^2) jump sizes.

inline constexpr double kBuiltinJumpMean = 0.05;
inline constexpr double kBuiltinJumpStd = 0.15;

namespace detail {

inline void attach_linear_jumps(Model1D& m) {
  m.jump = [](const Vec<1>& x, const Vec<1>& z) { return Vec<1>(x[0] * z[0]); };
  m.jump_total = [](const Vec<1>& x, std::span<const Vec<1>> zs) {
    // four partial sums break the add latency chain over long blocks
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= zs.size(); i += 4) {
      acc[0] += zs[i][0];
      acc[1] += zs[i + 1][0];
      acc[2] += zs[i + 2][0];
      acc[3] += zs[i + 3][0];
    }
    for (; i < zs.size(); ++i) acc[0] += zs[i][0];
    return Vec<1>(x[0] * ((acc[0] + acc[1]) + (acc[2] + acc[3])));
  };
}

// For gamma = x z the jump constants reduce to moments of nu:
// L_d = N_d = m := sup_rho int |z|^rho nu(dz) and Z_d = max{m, lambda}.
inline void attach_linear_jump_constants(Model1D& m) {
  const double moment = sup_abs_moment(m.jumps, m.p0);
  m.constants.L_d = moment;
  m.constants.N_d = moment;
  m.constants.Z_d = std::max(moment, m.jumps.intensity());
}

}  // namespace detail

/// mu(x) = x - x^3, sigma(x) = x^2, gamma(x, z) = x z, chi = 4, p0 = 5/2.
inline Model1D make_model1(JumpLaw<1> jumps) {
  Model1D m{.name = "model1",
            .drift = [](const Vec<1>& x) { return Vec<1>(x[0] - x[0] * x[0] * x[0]); },
            .diffusion = [](const Vec<1>& x) { return Eigen::Matrix<double, 1, 1>(x[0] * x[0]); },
            .jump = {},
            .jump_total = {},
            .chi = 4.0,
            .p0 = 2.5,
            .jumps = std::move(jumps),
            .constants = {}};
  detail::attach_linear_jumps(m);
  m.constants.L = 2.0;
  detail::attach_linear_jump_constants(m);
  return m;
}

inline Model1D make_model1(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  return make_model1(gaussian_jump_law(lambda, kBuiltinJumpMean, kBuiltinJumpStd));
}

/// mu(x) = a x (b - |x|), sigma(x) = c |x|^{3/2}, gamma(x, z) = x z,
/// chi = 2, p0 = 4a / (3c^2) + 1.
inline Model1D make_model2(double a, double b, double c, JumpLaw<1> jumps) {
  if (!(a >= 0.0) || !(b >= 0.0) || !(c >= 0.0)) throw std::invalid_argument("model2 needs a, b, c >= 0");
  if (c == 0.0) throw std::invalid_argument("model2 needs c > 0 (p0 = 4a/(3c^2) + 1 undefined)");
  const double p0 = 4.0 * a / (3.0 * c * c) + 1.0;
  if (!(p0 >= 2.0)) throw std::invalid_argument("model2 needs 4a/(3c^2) + 1 >= 2");
  Model1D m{.name = "model2",
            .drift = [a, b](const Vec<1>& x) { return Vec<1>(a * x[0] * (b - std::abs(x[0]))); },
            .diffusion =
                [c](const Vec<1>& x) {
                  const double r = std::abs(x[0]);
                  return Eigen::Matrix<double, 1, 1>(c * r * std::sqrt(r));
                },
            .jump = {},
            .jump_total = {},
            .chi = 2.0,
            .p0 = p0,
            .jumps = std::move(jumps),
            .constants = {}};
  detail::attach_linear_jumps(m);
  m.constants.L = std::max({2.0 * a * b, a * (b + 1.0), std::sqrt(1.5) * c});
  detail::attach_linear_jump_constants(m);
  return m;
}

inline Model1D make_model2(double a, double b, double c, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  return make_model2(a, b, c, gaussian_jump_law(lambda, kBuiltinJumpMean, kBuiltinJumpStd));
}

/// mu(x) = -rate x with no diffusion and no jumps; the flow is x e^{-rate t}.
/// `chi` only enters through taming, which is negligible while |x|^chi is tiny.
inline Model1D make_linear_decay(double rate = 1.0, double chi = 32.0) {
  Model1D m{.name = "linear",
            .drift = [rate](const Vec<1>& x) { return Vec<1>(-rate * x[0]); },
            .diffusion = [](const Vec<1>&) { return Eigen::Matrix<double, 1, 1>(0.0); },
            .jump = [](const Vec<1>&, const Vec<1>&) { return Vec<1>(0.0); },
            .jump_total = {},
            .chi = chi,
            .p0 = 2.0,
            .jumps = gaussian_jump_law(0.0, kBuiltinJumpMean, kBuiltinJumpStd),
            .constants = {}};
  m.constants.L = 2.0 * rate;
  return m;
}

// ---------------------------------------------------------------------------
// Assumption probes

enum class Verdict { pass, fail, not_evaluated };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    default: return "not_evaluated";
  }
}

struct AssumptionCheck {
  std::string name;
  Verdict verdict = Verdict::not_evaluated;
  double estimate = 0.0;                 // estimated constant (sup of the probed ratio)
  std::vector<double> per_radius;        // sup of the ratio at each probe radius
  std::vector<double> witness_x;         // state(s) attaining the sup
  std::vector<double> witness_y;
  std::string note;
};

struct AssumptionReport {
  std::array<AssumptionCheck, 5> checks;  // A1..A5
  double pstar = 0.0;
  double zeta = kDefaultZeta;
  double fitted_q = 0.0;
  double zd_used = 0.0;
  std::size_t skipped_pairs = 0;
  bool insufficient_diversity = false;

  const AssumptionCheck& operator[](std::size_t i) const { return checks.at(i); }
};

struct ProbeOptions {
  std::size_t n_probe = 2000;
  double radius = 4.0;
  int radius_levels = 4;       // radii = radius * growth^k
  double radius_growth = 4.0;
  double unbounded_ratio = 1.5;  // sup growing by this factor between the last levels => fail
  double p = 2.0;              // exponent in the small-jump conditions
  std::size_t jump_points = 24;  // states used for quadrature-based checks
  double zeta = kDefaultZeta;
};

namespace detail {

template <int D>
Vec<D> sample_ball(Engine& rng, double r) {
  Vec<D> v;
  if constexpr (D == 1) {
    v[0] = r * (2.0 * rng.uniform() - 1.0);
  } else {
    boost::random::normal_distribution<double> n01;
    for (int i = 0; i < D; ++i) v[i] = n01(rng);
    const double u = std::pow(rng.uniform(), 1.0 / D);
    v *= r * u / std::max(v.norm(), 1e-300);
  }
  return v;
}

template <int D>
std::vector<double> to_vector(const Vec<D>& v) {
  return std::vector<double>(v.data(), v.data() + D);
}

template <int D>
struct PairSet {
  std::vector<Vec<D>> x, y;
};

// Half independent pairs, half near-diagonal pairs (sup of difference
// quotients often sits near x = y).
template <int D>
PairSet<D> sample_pairs(Engine& rng, std::size_t n, double r, std::size_t& skipped) {
  PairSet<D> s;
  s.x.reserve(n);
  s.y.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec<D> x = sample_ball<D>(rng, r);
    Vec<D> y = (i % 2 == 0) ? sample_ball<D>(rng, r) : Vec<D>(x + sample_ball<D>(rng, 1e-3 * r));
    if ((x - y).norm() == 0.0) {
      ++skipped;
      continue;
    }
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return s;
}

// Fill a check from per-radius sups; fail when the sup keeps growing with the
// radius (no finite constant) or is not finite.
inline void settle(AssumptionCheck& c, double growth_threshold) {
  const auto& v = c.per_radius;
  c.estimate = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(c.estimate)) {
    c.verdict = Verdict::fail;
    c.note = "non-finite ratio";
    return;
  }
  const std::size_t n = v.size();
  if (n >= 2) {
    const double last = v[n - 1], prev = v[n - 2];
    if (last > 0.0 && last > growth_threshold * std::max(prev, 0.0) && last - prev > 1e-9) {
      c.verdict = Verdict::fail;
      c.note = "ratio grows with probe radius (unbounded)";
      return;
    }
  }
  c.verdict = Verdict::pass;
}

}  // namespace detail

/// Statistical check of the coefficient conditions on random states in balls
/// of radius r, 4r, 16r, ... A condition passes when the sup of its ratio
/// stays bounded as the ball grows; a failure carries the witness pair.
/// Jump conditions (A3-A5) use quadrature and need a one-dimensional size law
/// with a density; otherwise they are reported as not evaluated.
template <int D, int W>
AssumptionReport probe_assumptions(const SdeModel<D, W>& model, const ProbeOptions& opt, Engine& rng) {
  model.validate();
  if (opt.n_probe < 100) throw std::invalid_argument("n_probe must be >= 100");
  if (!(opt.radius > 0.0)) throw std::invalid_argument("probe radius must be positive");

  AssumptionReport rep;
  rep.zeta = opt.zeta;
  rep.pstar = pstar(model.p0, model.chi, opt.zeta);
  const char* names[5] = {"A1", "A2", "A3", "A4", "A5"};
  for (int i = 0; i < 5; ++i) rep.checks[i].name = names[i];

  std::vector<detail::PairSet<D>> pair_sets;
  std::vector<double> radii;
  for (int k = 0; k < opt.radius_levels; ++k) {
    radii.push_back(opt.radius * std::pow(opt.radius_growth, k));
    pair_sets.push_back(detail::sample_pairs<D>(rng, opt.n_probe, radii.back(), rep.skipped_pairs));
  }
  rep.insufficient_diversity = rep.skipped_pairs * 2 > opt.n_probe;

  // A1: one-sided Lipschitz ratio; A2: polynomial Lipschitz ratio.
  auto& a1 = rep.checks[0];
  auto& a2 = rep.checks[1];
  double best1 = -std::numeric_limits<double>::infinity(), best2 = 0.0;
  for (const auto& ps : pair_sets) {
    double s1 = -std::numeric_limits<double>::infinity(), s2 = 0.0;
    for (std::size_t i = 0; i < ps.x.size(); ++i) {
      const auto& x = ps.x[i];
      const auto& y = ps.y[i];
      const Vec<D> dx = x - y;
      const double d2 = dx.squaredNorm();
      const Vec<D> dmu = model.drift(x) - model.drift(y);
      const double dsig = (model.diffusion(x) - model.diffusion(y)).norm();
      const double r1 = (2.0 * dx.dot(dmu) + (model.p0 - 1.0) * dsig * dsig) / d2;
      const double poly = std::sqrt(d2) * (1.0 + std::pow(x.norm(), model.chi / 2) + std::pow(y.norm(), model.chi / 2));
      const double r2 = std::max(dmu.norm(), dsig) / poly;
      if (r1 > s1) s1 = r1;
      if (r2 > s2) s2 = r2;
      if (r1 > best1) {
        best1 = r1;
        a1.witness_x = detail::to_vector<D>(x);
        a1.witness_y = detail::to_vector<D>(y);
      }
      if (r2 > best2) {
        best2 = r2;
        a2.witness_x = detail::to_vector<D>(x);
        a2.witness_y = detail::to_vector<D>(y);
      }
    }
    a1.per_radius.push_back(s1);
    a2.per_radius.push_back(s2);
  }
  detail::settle(a1, opt.unbounded_ratio);
  detail::settle(a2, opt.unbounded_ratio);

  if constexpr (D == 1) {
    if (model.jumps.sizes().has_density()) {
      const auto& law = model.jumps;
      const double inf = std::numeric_limits<double>::infinity();
      std::vector<double> rhos;
      for (int k = 0; k <= 4; ++k) rhos.push_back(1.0 + (model.p0 - 1.0) * k / 4.0);
      auto gamma = [&](double x, double z) { return model.jump(Vec<1>(x), Vec<1>(z))[0]; };
      auto measure = [&](const std::function<double(double)>& f, double a, double b) {
        return integrate_measure(law, f, a, b);
      };
      auto whole = [&](const std::function<double(double)>& f) {
        return measure(f, -inf, 0.0) + measure(f, 0.0, inf);
      };

      auto& a3 = rep.checks[2];
      auto& a4 = rep.checks[3];
      double best3 = 0.0, best4 = 0.0;
      for (std::size_t k = 0; k < pair_sets.size(); ++k) {
        const auto& ps = pair_sets[k];
        const std::size_t n = std::min(opt.jump_points, ps.x.size());
        double s3 = 0.0, s4 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = ps.x[i][0], y = ps.y[i][0];
          for (double rho : rhos) {
            const double r3 = whole([&](double z) { return std::pow(std::abs(gamma(x, z)), rho); }) /
                              (1.0 + std::pow(std::abs(x), rho));
            const double r4 = whole([&](double z) { return std::pow(std::abs(gamma(x, z) - gamma(y, z)), rho); }) /
                              std::pow(std::abs(x - y), rho);
            s3 = std::max(s3, r3);
            s4 = std::max(s4, r4);
            if (r3 >= best3) {
              best3 = r3;
              a3.witness_x = {x};
            }
            if (r4 >= best4) {
              best4 = r4;
              a4.witness_x = {x};
              a4.witness_y = {y};
            }
          }
        }
        a3.per_radius.push_back(s3);
        a4.per_radius.push_back(s4);
      }
      detail::settle(a3, opt.unbounded_ratio);
      detail::settle(a4, opt.unbounded_ratio);

      // A5: measure bound, then the largest q with
      // sup ratio(eps) <= eps^q Z_d over an eps sweep.
      auto& a5 = rep.checks[4];
      const double zd = model.constants.Z_d.value_or(std::max(law.intensity(), sup_abs_moment(law, model.p0)));
      rep.zd_used = zd;
      const double bounded_part = whole([](double z) { return std::min(1.0, z * z); });
      const auto& ps = pair_sets.back();
      const std::size_t n = std::min(opt.jump_points, ps.x.size());
      double q = inf;
      for (double eps = 0.01; eps < 0.95; eps += 0.04) {
        double sup_ratio = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = ps.x[i][0], y = ps.y[i][0];
          const double r52 =
              measure([&](double z) { return std::pow(std::abs(gamma(x, z) - gamma(y, z)), opt.p); }, -eps, eps) /
              std::pow(std::abs(x - y), opt.p);
          const double r53 = measure([&](double z) { return std::pow(std::abs(gamma(x, z)), opt.p); }, -eps, eps) /
                             (1.0 + std::pow(std::abs(x), opt.p));
          sup_ratio = std::max({sup_ratio, r52, r53});
        }
        a5.per_radius.push_back(sup_ratio);
        if (sup_ratio > 0.0) q = std::min(q, std::log(sup_ratio / zd) / std::log(eps));
      }
      if (!std::isfinite(q)) q = 0.0;  // all ratios zero: any q works; report 0
      rep.fitted_q = q;
      a5.estimate = bounded_part;
      if (bounded_part > zd * (1.0 + 1e-12)) {
        a5.verdict = Verdict::fail;
        a5.note = "int (1 ^ z^2) nu(dz) exceeds Z_d";
      } else if (!(q > 0.0) && a5.per_radius.back() > 0.0) {
        a5.verdict = Verdict::fail;
        a5.note = "no positive q bounds the small-jump integrals";
      } else {
        a5.verdict = Verdict::pass;
        a5.note = "fitted q = " + std::to_string(q);
      }
    } else {
      for (int i = 2; i < 5; ++i) rep.checks[i].note = "size law has no density";
    }
  } else {
    for (int i = 2; i < 5; ++i) rep.checks[i].note = "jump quadrature is one-dimensional";
  }
  return rep;
}

}  // namespace tamed
