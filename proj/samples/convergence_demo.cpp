// Small strong-convergence run on the cubic-drift model, printed as a table.
// Takes a few seconds; the CLI runs the full-size study.

#include <cstdio>
#include <vector>

#include "tamed/tamed.hpp"

int main() {
  const auto model = tamed::make_model1(3.0);
  tamed::ExperimentSettings<1> s;
  s.n_paths = 64;
  s.mc_samples = 200;
  const std::vector<double> meshes{0x1p-5, 0x1p-6, 0x1p-7, 0x1p-8};
  const auto r = tamed::strong_convergence(model, meshes, 0x1p-10, s);
  std::printf("%-12s %-14s\n", "mesh", "L2 error");
  for (const auto& row : r.table.rows) std::printf("%-12.6g %-14.6g\n", row.abscissa, row.error);
  if (r.fit) std::printf("slope %.3f  r^2 %.3f\n", r.fit->slope, r.fit->r_squared);
  for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
}
