#pragma once

// Random mixed-model data sets shared by the stats unit and acceptance suites.

#include <string>
#include <vector>

#include "dense_lmm.hpp"
#include "polyprobe/random.hpp"
#include "polyprobe/stats/table.hpp"

namespace oracle {

struct CrossedData {
  polyprobe::stats::DataTable table;
  DenseProblem dense;
};

/// y = 1 + 0.5 x1 - 0.3 x2 + a[g1] + b[g2] + e with the given standard deviations.
inline CrossedData make_crossed(polyprobe::Rng& rng, std::size_t n, std::size_t levels_a, std::size_t levels_b,
                                double sd_a, double sd_b, double sd_e) {
  std::vector<double> effect_a(levels_a);
  std::vector<double> effect_b(levels_b);
  for (auto& v : effect_a) v = rng.normal(0.0, sd_a);
  for (auto& v : effect_b) v = rng.normal(0.0, sd_b);

  std::vector<double> y(n);
  std::vector<double> x1(n);
  std::vector<double> x2(n);
  std::vector<std::string> g1(n);
  std::vector<std::string> g2(n);
  CrossedData out;
  out.dense.x.resize(static_cast<Eigen::Index>(n), 3);
  out.dense.y.resize(static_cast<Eigen::Index>(n));
  out.dense.groups.assign(2, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    // every level appears at least once
    const auto a = static_cast<int>(i < levels_a ? i : rng.below(levels_a));
    const auto b = static_cast<int>(i < levels_b ? i : rng.below(levels_b));
    x1[i] = rng.normal();
    x2[i] = rng.uniform(-1.0, 1.0);
    y[i] = 1.0 + 0.5 * x1[i] - 0.3 * x2[i] + effect_a[static_cast<std::size_t>(a)] +
           effect_b[static_cast<std::size_t>(b)] + rng.normal(0.0, sd_e);
    g1[i] = "a" + std::to_string(a);
    g2[i] = "b" + std::to_string(b);
    const auto r = static_cast<Eigen::Index>(i);
    out.dense.x(r, 0) = 1.0;
    out.dense.x(r, 1) = x1[i];
    out.dense.x(r, 2) = x2[i];
    out.dense.y[r] = y[i];
    out.dense.groups[0][i] = a;
    out.dense.groups[1][i] = b;
  }
  out.table.add_numeric("y", y);
  out.table.add_numeric("x1", x1);
  out.table.add_numeric("x2", x2);
  out.table.add_categorical("g1", g1);
  out.table.add_categorical("g2", g2);
  return out;
}

/// Balanced one-way layout without covariates.
inline CrossedData make_one_way(polyprobe::Rng& rng, std::size_t groups, std::size_t replicates, double sd_group,
                                double sd_e) {
  const std::size_t n = groups * replicates;
  CrossedData out;
  std::vector<double> y(n);
  std::vector<std::string> g(n);
  out.dense.x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1);
  out.dense.y.resize(static_cast<Eigen::Index>(n));
  out.dense.groups.assign(1, std::vector<int>(n));
  for (std::size_t a = 0; a < groups; ++a) {
    const double effect = rng.normal(0.0, sd_group);
    for (std::size_t r = 0; r < replicates; ++r) {
      const std::size_t i = a * replicates + r;
      y[i] = 3.0 + effect + rng.normal(0.0, sd_e);
      g[i] = "g" + std::to_string(a);
      out.dense.y[static_cast<Eigen::Index>(i)] = y[i];
      out.dense.groups[0][i] = static_cast<int>(a);
    }
  }
  out.table.add_numeric("y", y);
  out.table.add_categorical("g", g);
  return out;
}

}  // namespace oracle
