#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "tamed/grid.hpp"

using namespace tamed;

namespace {

// Linear-scan reference for the half-open anchor convention.
double anchor_by_scan(const std::vector<double>& pts, double t) {
  if (t <= pts[1]) return pts[0];
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    if (t > pts[i] && t <= pts[i + 1]) return pts[i];
  }
  return pts[pts.size() - 2];
}

double mesh_by_pairwise_scan(const std::vector<double>& pts) {
  double m = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (j == i + 1) m = std::max(m, pts[j] - pts[i]);
  return m;
}

}  // namespace

TEST(Grid, UniformFourCells) {
  const auto map = build_uniform_grid(4, 1.0);
  const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
  ASSERT_EQ(map.points().size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(map.points()[i], expected[i]);
  EXPECT_DOUBLE_EQ(map.mesh(), 0.25);
}

TEST(Grid, DyadicMesh) {
  const auto map = build_uniform_grid(1024, 1.0);
  EXPECT_EQ(map.mesh(), std::ldexp(1.0, -10));
  EXPECT_EQ(map.cells(), 1024u);
  EXPECT_EQ(map.horizon(), 1.0);
}

TEST(Grid, RejectsGapOfOne) {
  try {
    build_uniform_grid(1, 2.0);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("gap >= 1"), std::string::npos);
  }
  EXPECT_THROW(build_uniform_grid(0, 1.0), std::invalid_argument);
  EXPECT_THROW(build_uniform_grid(4, 0.0), std::invalid_argument);
  EXPECT_THROW(build_uniform_grid(4, -1.0), std::invalid_argument);
  EXPECT_THROW(build_uniform_grid(1, 1.0), std::invalid_argument);
}

TEST(Grid, ConstructorInvariants) {
  EXPECT_THROW(Grid({0.0}), std::invalid_argument);
  EXPECT_THROW(Grid({0.1, 0.5}), std::invalid_argument);
  EXPECT_THROW(Grid({0.0, 0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(Grid({0.0, 0.6, 0.4}), std::invalid_argument);
  EXPECT_THROW(Grid({0.0, 1.0}), std::invalid_argument);
  EXPECT_NO_THROW(Grid({0.0, 0.1, 0.7, 1.5}));
}

TEST(DeltaEval, HalfOpenConvention) {
  const auto map = build_uniform_grid(4, 1.0);
  EXPECT_DOUBLE_EQ(delta_eval(map, 0.3), 0.25);
  EXPECT_DOUBLE_EQ(delta_eval(map, 0.25), 0.0);
  EXPECT_DOUBLE_EQ(delta_eval(map, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(delta_eval(map, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(delta_eval(map, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(delta_eval(map, 0.500001), 0.5);
}

TEST(DeltaEval, OutsideHorizonThrows) {
  const auto map = build_uniform_grid(4, 1.0);
  EXPECT_THROW(delta_eval(map, -1e-12), std::out_of_range);
  EXPECT_THROW(delta_eval(map, 1.0 + 1e-12), std::out_of_range);
}

TEST(DeltaEval, MatchesLinearScanOnRandomGrids) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> gap(0.01, 0.99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int g = 0; g < 50; ++g) {
    std::vector<double> pts{0.0};
    const int n = 2 + g % 17;
    for (int i = 0; i < n; ++i) pts.push_back(pts.back() + gap(gen));
    const DiscretizationMap map{Grid(pts)};
    EXPECT_DOUBLE_EQ(map.mesh(), mesh_by_pairwise_scan(pts));
    for (int k = 0; k < 200; ++k) {
      const double t = unit(gen) * pts.back();
      const double a = delta_eval(map, t);
      EXPECT_EQ(a, anchor_by_scan(pts, t));
      EXPECT_LE(a, t);
    }
    // grid points and cell interiors
    for (std::size_t i = 1; i < pts.size(); ++i) {
      EXPECT_EQ(delta_eval(map, pts[i]), anchor_by_scan(pts, pts[i]));
      EXPECT_EQ(delta_eval(map, 0.5 * (pts[i - 1] + pts[i])), pts[i - 1]);
    }
  }
}

TEST(Grid, MeshBuilderAndNesting) {
  const auto coarse = build_grid_with_mesh(0.25, 1.0);
  const auto fine = build_grid_with_mesh(0.0625, 1.0);
  const auto idx = nest_indices(coarse.grid(), fine.grid());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 4, 8, 12, 16}));
  EXPECT_THROW(build_grid_with_mesh(0.3, 1.0), std::invalid_argument);
  const auto odd = build_uniform_grid(3, 1.0);
  EXPECT_THROW(nest_indices(odd.grid(), fine.grid()), std::invalid_argument);
  EXPECT_THROW(nest_indices(build_grid_with_mesh(0.25, 2.0).grid(), fine.grid()), std::invalid_argument);
}

TEST(Grid, DyadicPredicate) {
  EXPECT_TRUE(is_dyadic_mesh(1.0));
  EXPECT_TRUE(is_dyadic_mesh(std::ldexp(1.0, -15)));
  EXPECT_TRUE(is_dyadic_mesh(8.0));
  EXPECT_FALSE(is_dyadic_mesh(0.3));
  EXPECT_FALSE(is_dyadic_mesh(0.0));
  EXPECT_FALSE(is_dyadic_mesh(-0.5));
}

TEST(Grid, FingerprintSeparatesGrids) {
  EXPECT_EQ(build_uniform_grid(8, 1.0).grid().fingerprint(), build_uniform_grid(8, 1.0).grid().fingerprint());
  EXPECT_NE(build_uniform_grid(8, 1.0).grid().fingerprint(), build_uniform_grid(16, 1.0).grid().fingerprint());
}
