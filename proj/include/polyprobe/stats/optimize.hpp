#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace polyprobe::stats {

/// Derivative-free 1-D minimizer (golden section with parabolic steps) on [lo, hi].
template <class F>
double brent_minimize(F&& f, double lo, double hi, double tol) {
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double a = lo;
  double b = hi;
  double v = a + golden * (b - a);
  double w = v;
  double x = v;
  double d = 0.0;
  double e = 0.0;
  double fx = f(x);
  double fv = fx;
  double fw = fx;
  const double tol3 = tol / 3.0;

  for (;;) {
    const double xm = 0.5 * (a + b);
    const double tol1 = eps * std::abs(x) + tol3;
    const double t2 = 2.0 * tol1;
    if (std::abs(x - xm) <= t2 - 0.5 * (b - a)) break;

    double p = 0.0;
    double q = 0.0;
    double r = 0.0;
    if (std::abs(e) > tol1) {
      r = (x - w) * (fx - fv);
      q = (x - v) * (fx - fw);
      p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) {
        p = -p;
      } else {
        q = -q;
      }
      r = e;
      e = d;
    }

    double u = 0.0;
    if (std::abs(p) >= std::abs(0.5 * q * r) || p <= q * (a - x) || p >= q * (b - x)) {
      e = (x < xm) ? b - x : a - x;
      d = golden * e;
    } else {
      d = p / q;
      u = x + d;
      if (u - a < t2 || b - u < t2) d = (x < xm) ? tol1 : -tol1;
    }

    if (std::abs(d) >= tol1) {
      u = x + d;
    } else {
      u = d > 0.0 ? x + tol1 : x - tol1;
    }
    const double fu = f(u);

    if (fu <= fx) {
      if (u < x) {
        b = x;
      } else {
        a = x;
      }
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x) {
        a = u;
      } else {
        b = u;
      }
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return x;
}

struct BoxBounds {
  double lower;
  double upper;
};

struct OptimResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct NelderMeadOptions {
  double rel_tol = 1e-8;   // relative spread of simplex values
  double x_tol = 1e-6;     // simplex diameter (infinity norm)
  int max_iterations = 500;
  double initial_step = 1.0;
};

/// Nelder-Mead on a box; trial points are projected onto the bounds.
template <class F>
OptimResult nelder_mead(F&& f, std::vector<double> start, BoxBounds bounds,
                        const NelderMeadOptions& options = {}) {
  const std::size_t dim = start.size();
  auto clamp = [&](std::vector<double> p) {
    for (double& v : p) v = std::clamp(v, bounds.lower, bounds.upper);
    return p;
  };

  std::vector<std::vector<double>> simplex;
  simplex.push_back(clamp(start));
  for (std::size_t i = 0; i < dim; ++i) {
    auto p = simplex.front();
    p[i] += options.initial_step;
    if (p[i] > bounds.upper) p[i] = simplex.front()[i] - options.initial_step;
    simplex.push_back(clamp(p));
  }
  std::vector<double> values;
  for (const auto& p : simplex) values.push_back(f(p));

  OptimResult result;
  std::vector<std::size_t> order(dim + 1);
  for (int iter = 0;; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[dim - 1];

    double diameter = 0.0;
    for (const auto& p : simplex) {
      for (std::size_t i = 0; i < dim; ++i) diameter = std::max(diameter, std::abs(p[i] - simplex[best][i]));
    }
    const double spread = values[worst] - values[best];
    if (spread <= options.rel_tol * (std::abs(values[best]) + options.rel_tol) && diameter <= options.x_tol) {
      result.converged = true;
      result.iterations = iter;
      break;
    }
    if (iter >= options.max_iterations) {
      result.iterations = iter;
      break;
    }

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k) {
      const std::size_t idx = order[k];
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[idx][i] / static_cast<double>(dim);
    }
    auto along = [&](double t) {
      std::vector<double> p(dim);
      for (std::size_t i = 0; i < dim; ++i) p[i] = centroid[i] + t * (simplex[worst][i] - centroid[i]);
      return clamp(p);
    };

    auto reflected = along(-1.0);
    const double f_reflected = f(reflected);
    if (f_reflected < values[best]) {
      auto expanded = along(-2.0);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = std::move(expanded);
        values[worst] = f_expanded;
      } else {
        simplex[worst] = std::move(reflected);
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = std::move(reflected);
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    auto contracted = along(outside ? -0.5 : 0.5);
    const double f_contracted = f(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      simplex[worst] = std::move(contracted);
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t k = 1; k <= dim; ++k) {
      const std::size_t idx = order[k];
      for (std::size_t i = 0; i < dim; ++i) {
        simplex[idx][i] = simplex[best][i] + 0.5 * (simplex[idx][i] - simplex[best][i]);
      }
      values[idx] = f(simplex[idx]);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  result.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  result.value = *best_it;
  return result;
}

}  // namespace polyprobe::stats
