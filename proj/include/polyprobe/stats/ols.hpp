#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "polyprobe/error.hpp"

namespace polyprobe::stats {

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Simple least-squares line y = intercept + slope * x.
inline OlsFit ols_simple(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "ols_simple: x and y differ in length");
  const std::size_t n = x.size();
  if (n < 3) fail(ErrorKind::TooFewObservations, "ols_simple needs at least 3 points");

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
    scale += x[i] * x[i];
  }
  if (!(sxx > 1e-14 * scale)) fail(ErrorKind::ConstantPredictor, "ols_simple: x has no variance");

  OlsFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // A constant response leaves nothing to explain; report zero.
  fit.r_squared = syy > 0.0 ? std::min(1.0, (sxy * sxy) / (sxx * syy)) : 0.0;
  return fit;
}

}  // namespace polyprobe::stats
