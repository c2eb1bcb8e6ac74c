#include <gtest/gtest.h>

#include <cmath>
#include <iomanip>
#include <random>
#include <vector>

#include "tamed/model.hpp"

using namespace tamed;

namespace {

// Term-by-term evaluation written out independently of the library.
double pstar_oracle(double p0, double chi, double zeta) {
  const double t1 = 2.0 * p0 / (chi + 2.0) - zeta;
  const double t2 = 2.0 * p0 / (3.0 * chi + 2.0);
  const double t3 = (-chi * zeta + std::sqrt(chi * zeta * (chi * zeta + 8.0 * p0))) / (2.0 * chi);
  return std::min({t1, t2, t3});
}

Model1D squared_drift() {
  Model1D m{.name = "x^2",
            .drift = [](const Vec<1>& x) { return Vec<1>(x[0] * x[0]); },
            .diffusion = [](const Vec<1>&) { return Eigen::Matrix<double, 1, 1>(0.0); },
            .jump = [](const Vec<1>&, const Vec<1>&) { return Vec<1>(0.0); },
            .jump_total = {},
            .chi = 2.0,
            .p0 = 2.0,
            .jumps = gaussian_jump_law(0.0, 0.0, 1.0),
            .constants = {}};
  return m;
}

}  // namespace

TEST(Tame, ModelOneAtTwo) {
  const auto m = make_model1(3.0);
  const auto t = tame(m, 1.0 / 16.0, Vec<1>(2.0));
  EXPECT_NEAR(t.drift[0], -6.0 / std::sqrt(5.0), 1e-14);
  EXPECT_NEAR(t.diffusion(0, 0), 4.0 / std::sqrt(5.0), 1e-14);
  EXPECT_NEAR(t.drift[0], -2.68328, 1e-5);
  EXPECT_NEAR(t.diffusion(0, 0), 1.78885, 1e-5);
}

TEST(Tame, OriginAndVanishingMesh) {
  const auto m = make_model1(3.0);
  for (double h : {0.5, 1e-3, 1e-9}) {
    const auto t = tame(m, h, Vec<1>(0.0));
    EXPECT_EQ(t.drift[0], 0.0);
    EXPECT_EQ(t.diffusion(0, 0), 0.0);
  }
  const auto t = tame(m, 1e-30, Vec<1>(1.7));
  EXPECT_NEAR(t.drift[0], m.drift(Vec<1>(1.7))[0], 1e-12);
  EXPECT_NEAR(t.diffusion(0, 0), m.diffusion(Vec<1>(1.7))(0, 0), 1e-12);
  EXPECT_THROW(tame(m, 0.0, Vec<1>(1.0)), std::invalid_argument);
  const TamedCoefficients<1, 1> tc(m, 1.0 / 16.0);
  EXPECT_EQ(tc(Vec<1>(2.0)).drift[0], tame(m, 1.0 / 16.0, Vec<1>(2.0)).drift[0]);
}

TEST(Tame, DominanceAndConsistency) {
  for (const auto& m : {make_model1(3.0), make_model2(1, 2, 1, 3.0)}) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> xs(-20.0, 20.0);
    for (int i = 0; i < 2000; ++i) {
      const Vec<1> x(xs(gen));
      const double mu = m.drift(x).norm(), sg = m.diffusion(x).norm();
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 1; k <= 20; ++k) {
        const double h = std::ldexp(1.0, -k);
        const auto t = tame(m, h, x);
        ASSERT_LE(t.drift.norm(), mu);
        ASSERT_LE(t.diffusion.norm(), sg);
        const double diff = (m.drift(x) - t.drift).norm();
        ASSERT_LE(diff, prev * (1.0 + 1e-12));  // shrinks with the mesh
        prev = diff;
      }
    }
  }
}

TEST(Tame, GrowthBoundWithFrozenConstant) {
  // C fitted on a wide log-spaced probe set, then checked at scattered points
  // two decades further out. For model2 the ratio creeps up to a^2 from below.
  for (const auto& m : {make_model1(3.0), make_model2(1, 2, 1, 3.0)}) {
    auto ratio = [&](double x, double h) {
      const auto t = tame(m, h, Vec<1>(x));
      const double sq = std::max(t.drift.squaredNorm(), t.diffusion.squaredNorm());
      return sq * std::sqrt(h) / (1.0 + x * x);
    };
    double c = 0.0;
    for (double e = -3.0; e <= 4.0; e += 0.01)
      for (double sgn : {-1.0, 1.0})
        for (int k = 1; k <= 20; ++k) c = std::max(c, ratio(sgn * std::pow(10.0, e), std::ldexp(1.0, -k)));
    ASSERT_TRUE(std::isfinite(c));
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> xs(-1e6, 1e6);
    for (int i = 0; i < 20000; ++i) {
      const double x = xs(gen);
      for (int k = 1; k <= 20; ++k) ASSERT_LE(ratio(x, std::ldexp(1.0, -k)), 1.05 * c) << m.name << " x " << x;
    }
  }
}

TEST(PStar, PaperValues) {
  EXPECT_NEAR(pstar(2.5, 4.0, 0.01), 0.10692, 1e-5);
  EXPECT_NEAR(pstar(7.0 / 3.0, 2.0, 0.01), 0.14784, 1e-5);
  EXPECT_NEAR(pstar(10.0, 1.0, 0.1), 1.36509, 1e-5);
  EXPECT_NEAR(std::sqrt(0.04 * 20.04), 0.89532, 1e-5);
}

TEST(PStar, TermsAndArgmin) {
  const auto t = pstar_terms(10.0, 1.0, 0.1);
  EXPECT_NEAR(t.terms[0], 6.5667, 1e-4);
  EXPECT_NEAR(t.terms[1], 4.0, 1e-12);
  EXPECT_EQ(t.argmin, 2u);
  EXPECT_EQ(pstar_terms(2.5, 4.0, 0.01).argmin, 2u);
  EXPECT_THROW(pstar(1.5, 2.0), std::invalid_argument);
  EXPECT_THROW(pstar(2.5, 0.5), std::invalid_argument);
  EXPECT_THROW(pstar(2.5, 2.0, 0.0), std::invalid_argument);
}

TEST(PStar, MatchesOracleAndMonotone) {
  for (double p0 = 2.0; p0 <= 12.0; p0 += 0.5) {
    for (double chi = 1.0; chi <= 10.0; chi += 0.5) {
      for (double zeta : {0.001, 0.01, 0.1}) {
        const double v = pstar(p0, chi, zeta);
        ASSERT_NEAR(v, pstar_oracle(p0, chi, zeta), 1e-14);
        ASSERT_LE(pstar(p0, chi + 0.5, zeta), v + 1e-15);
        ASSERT_GE(pstar(p0 + 0.5, chi, zeta), v - 1e-15);
      }
    }
  }
}

TEST(BuiltinModels, Coefficients) {
  const auto m1 = make_model1(3.0);
  EXPECT_EQ(m1.drift(Vec<1>(2.0))[0], -6.0);
  EXPECT_EQ(m1.diffusion(Vec<1>(2.0))(0, 0), 4.0);
  EXPECT_EQ(m1.chi, 4.0);
  EXPECT_EQ(m1.p0, 2.5);
  EXPECT_EQ(m1.jumps.intensity(), 3.0);
  const auto m2 = make_model2(1, 2, 1, 3.0);
  EXPECT_EQ(m2.drift(Vec<1>(2.0))[0], 0.0);
  EXPECT_NEAR(m2.diffusion(Vec<1>(4.0))(0, 0), 8.0, 1e-14);
  EXPECT_NEAR(m2.p0, 7.0 / 3.0, 1e-15);
  EXPECT_EQ(m2.chi, 2.0);
  EXPECT_THROW(make_model2(1, 2, 0, 3.0), std::invalid_argument);
  EXPECT_THROW(make_model2(-1, 2, 1, 3.0), std::invalid_argument);
  EXPECT_THROW(make_model1(-1.0), std::invalid_argument);
}

TEST(BuiltinModels, JumpConstants) {
  const auto m1 = make_model1(3.0);
  ASSERT_TRUE(m1.constants.Z_d.has_value());
  EXPECT_NEAR(*m1.constants.Z_d, 3.0, 1e-12);
  // sup over rho of lambda E|Z|^rho is attained at rho = 1 for these small sizes
  EXPECT_NEAR(*m1.constants.L_d, levy_moment(m1.jumps, [](double z) { return std::abs(z); }), 1e-10);
}

TEST(BuiltinModels, JumpTotalAgreesWithPointwise) {
  const auto m = make_model1(3.0);
  std::vector<Vec<1>> zs;
  for (int i = 0; i < 103; ++i) zs.push_back(Vec<1>(0.01 * i - 0.4));
  Vec<1> ref = Vec<1>::Zero();
  for (const auto& z : zs) ref += m.jump(Vec<1>(1.3), z);
  EXPECT_NEAR(m.jump_sum(Vec<1>(1.3), zs)[0], ref[0], 1e-12);
}

TEST(Probe, ModelOne) {
  Engine rng(1);
  const auto rep = probe_assumptions(make_model1(3.0), ProbeOptions{}, rng);
  EXPECT_EQ(rep[0].verdict, Verdict::pass);
  // exact ratio is 2 - (x - y)^2 / 2; near-diagonal pairs add roundoff
  EXPECT_LE(rep[0].estimate, 2.0 + 1e-5) << std::setprecision(17) << rep[0].estimate;
  EXPECT_GT(rep[0].estimate, 1.9);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(rep[i].verdict, Verdict::pass) << rep[i].name;
  EXPECT_NEAR(rep.pstar, 0.10692, 1e-5);
  EXPECT_GT(rep.fitted_q, 0.0);
  EXPECT_NEAR(rep.zd_used, 3.0, 1e-12);
  EXPECT_FALSE(rep.insufficient_diversity);
}

TEST(Probe, ModelTwo) {
  Engine rng(2);
  const auto rep = probe_assumptions(make_model2(1, 2, 1, 3.0), ProbeOptions{}, rng);
  EXPECT_EQ(rep[0].verdict, Verdict::pass);
  EXPECT_LE(rep[0].estimate, 4.0 + 1e-6);
  EXPECT_NEAR(rep.pstar, 0.14784, 1e-5);
}

TEST(Probe, SquaredDriftFails) {
  Engine rng(3);
  const auto rep = probe_assumptions(squared_drift(), ProbeOptions{}, rng);
  EXPECT_EQ(rep[0].verdict, Verdict::fail);
  ASSERT_EQ(rep[0].witness_x.size(), 1u);
  ASSERT_EQ(rep[0].witness_y.size(), 1u);
  const double x = rep[0].witness_x[0], y = rep[0].witness_y[0];
  EXPECT_NEAR(rep[0].estimate, 2.0 * (x + y), 1e-6 * std::abs(x + y));
  EXPECT_GT(rep[0].estimate, 100.0);
  // per-radius sups keep growing
  for (std::size_t k = 1; k < rep[0].per_radius.size(); ++k) EXPECT_GT(rep[0].per_radius[k], rep[0].per_radius[k - 1]);
  EXPECT_EQ(rep[2].verdict, Verdict::pass);  // no jumps: nothing to violate
}

TEST(Probe, ReproducibleAndValidated) {
  Engine a(9), b(9);
  ProbeOptions o;
  o.n_probe = 200;
  const auto r1 = probe_assumptions(make_model1(3.0), o, a);
  const auto r2 = probe_assumptions(make_model1(3.0), o, b);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(r1[i].estimate, r2[i].estimate);
    EXPECT_EQ(r1[i].witness_x, r2[i].witness_x);
  }
  o.n_probe = 99;
  EXPECT_THROW(probe_assumptions(make_model1(3.0), o, a), std::invalid_argument);
}

TEST(Model, Validate) {
  auto m = make_model1(3.0);
  EXPECT_NO_THROW(m.validate());
  m.chi = 0.5;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = make_model1(3.0);
  m.p0 = 1.5;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = make_model1(3.0);
  m.drift = nullptr;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}
