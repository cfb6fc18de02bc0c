#pragma once

// Brute-force mixed-model likelihood: builds the full n x n marginal covariance
// and optimizes it with a compass (pattern) search. Shares no code with the
// library's profiled solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

struct DenseProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::vector<int>> groups;  // per factor: level index of each observation
};

struct DenseResult {
  double loglik = 0.0;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  std::vector<double> gamma;
};

/// ML log-likelihood with beta and sigma^2 profiled out, at variance ratios gamma.
inline DenseResult dense_profiled_loglik(const DenseProblem& prob, const std::vector<double>& gamma) {
  const auto n = prob.x.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t k = 0; k < prob.groups.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (prob.groups[k][static_cast<std::size_t>(i)] == prob.groups[k][static_cast<std::size_t>(j)]) {
          v(i, j) += gamma[k];
        }
      }
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  const Eigen::MatrixXd xt = llt.matrixL().solve(prob.x);
  const Eigen::VectorXd yt = llt.matrixL().solve(prob.y);
  DenseResult r;
  r.beta = (xt.transpose() * xt).ldlt().solve(xt.transpose() * yt);
  const double rss = (yt - xt * r.beta).squaredNorm();
  r.sigma2 = rss / static_cast<double>(n);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
  r.loglik = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi * r.sigma2) + logdet +
                     static_cast<double>(n));
  r.gamma = gamma;
  return r;
}

/// Compass search over log(gamma) from several starts; returns the best point.
inline DenseResult dense_ml_fit(const DenseProblem& prob) {
  const std::size_t k = prob.groups.size();
  const double lo = -23.0;
  const double hi = 13.0;
  auto objective = [&](const std::vector<double>& t) {
    std::vector<double> g(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) g[i] = std::exp(t[i]);
    return -dense_profiled_loglik(prob, g).loglik;
  };

  std::vector<double> best_t;
  double best_f = std::numeric_limits<double>::infinity();
  for (double start : {0.0, -4.0, 2.0, -20.0}) {
    std::vector<double> t(k, start);
    double f = objective(t);
    double step = 2.0;
    while (step > 1e-7) {
      bool moved = false;
      for (std::size_t i = 0; i < k; ++i) {
        for (double dir : {1.0, -1.0}) {
          auto trial = t;
          trial[i] = std::clamp(trial[i] + dir * step, lo, hi);
          const double ft = objective(trial);
          if (ft < f) {
            f = ft;
            t = trial;
            moved = true;
          }
        }
      }
      if (!moved) step *= 0.5;
    }
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  std::vector<double> g(k);
  for (std::size_t i = 0; i < k; ++i) g[i] = std::exp(best_t[i]);
  return dense_profiled_loglik(prob, g);
}

/// Successively refined grid search over log(gamma) for a single grouping factor.
inline DenseResult grid_search_one_factor(const DenseProblem& prob, double lo = -12.0, double hi = 6.0) {
  double best_t = lo;
  for (int round = 0; round < 10; ++round) {
    const int points = 200;
    const double step = (hi - lo) / points;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= points; ++i) {
      const double t = lo + step * i;
      const double ll = dense_profiled_loglik(prob, {std::exp(t)}).loglik;
      if (ll > best_ll) {
        best_ll = ll;
        best_t = t;
      }
    }
    lo = best_t - 2.0 * step;
    hi = best_t + 2.0 * step;
  }
  return dense_profiled_loglik(prob, {std::exp(best_t)});
}

}  // namespace oracle
