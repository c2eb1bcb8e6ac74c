#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <string>

#include "tamed/io.hpp"

using namespace tamed;

TEST(Io, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, std::ldexp(1.0, -15), 2.2575000000000003, 1e-300, -7.25}) {
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(format_double(0.25), "0.25");
}

TEST(Io, TableHeaders) {
  ErrorTable t;
  t.p = 2.0;
  t.rows.push_back(ErrorRow{.abscissa = 0.125, .mesh = 0.5, .error = 0.1, .standard_error = 0.01, .n_paths = 10, .n_diverged = 1, .seed = 7});
  const std::pair<ExperimentKind, std::string> cases[] = {
      {ExperimentKind::convergence, "mesh,lp_error,p,n_paths,n_diverged,seed\n0.125,0.10000000000000001,2,10,1,7\n"},
      {ExperimentKind::stability, "gap,lp_error,p,n_paths,n_diverged,seed\n0.125,0.10000000000000001,2,10,1,7\n"},
      {ExperimentKind::heatmap, "gap,mesh,lp_error,p,n_paths,n_diverged,seed\n0.125,0.5,0.10000000000000001,2,10,1,7\n"},
      {ExperimentKind::timeshift, "ds,lp_error,p,n_paths,n_diverged,seed\n0.125,0.10000000000000001,2,10,1,7\n"},
  };
  for (const auto& [kind, expected] : cases) {
    t.kind = kind;
    std::ostringstream os;
    write_table_csv(os, t);
    EXPECT_EQ(os.str(), expected);
  }
}

TEST(Io, SlopesAndTrajectories) {
  std::ostringstream os;
  std::vector<NamedFit> fits{{"convergence", SlopeFit{.slope = 0.5, .intercept = -1.0, .r_squared = 1.0}}};
  write_slopes_csv(os, fits);
  EXPECT_EQ(os.str(), "experiment,slope,intercept,r_squared\nconvergence,0.5,-1,1\n");

  std::vector<PathResult<2>> paths(2);
  paths[0].trajectory = {{0.0, Vec<2>(1.0, 2.0)}, {0.5, Vec<2>(1.5, 2.5)}};
  paths[1].trajectory = {{0.0, Vec<2>(-1.0, 0.0)}};
  std::ostringstream tr;
  write_trajectories_csv<2>(tr, paths);
  EXPECT_EQ(tr.str(), "path_id,t,x_1,x_2\n0,0,1,2\n0,0.5,1.5,2.5\n1,0,-1,0\n");
}
