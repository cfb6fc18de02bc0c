#pragma once

// Direct double-loop recomputations of the geometry and attention kernels.
// Written from the definitions, without the sum-of-units shortcut the library uses.

#include <algorithm>
#include <cmath>
#include <vector>

#include "polyprobe/random.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

inline std::vector<double> mean_row(const Rows& x) {
  std::vector<double> mean(x[0].size(), 0.0);
  for (const auto& row : x) {
    for (std::size_t d = 0; d < row.size(); ++d) mean[d] += row[d];
  }
  for (double& v : mean) v /= static_cast<double>(x.size());
  return mean;
}

inline double pairwise_cosine_distance(const Rows& x) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      total += std::clamp(1.0 - cosine_similarity(x[i], x[j]), 0.0, 2.0);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

inline double centered_isotropy(const Rows& x) {
  const auto mean = mean_row(x);
  Rows centered = x;
  for (auto& row : centered) {
    for (std::size_t d = 0; d < row.size(); ++d) row[d] -= mean[d];
  }
  return pairwise_cosine_distance(centered);
}

inline double intra_sentence_similarity(const Rows& x) {
  const auto mean = mean_row(x);
  double total = 0.0;
  for (const auto& row : x) total += cosine_similarity(row, mean);
  return total / static_cast<double>(x.size());
}

/// attn given as an n x n nested vector.
inline double attention_to_cue(const Rows& attn, std::size_t t0, std::size_t t1, std::size_t c0, std::size_t c1) {
  double mean = 0.0;
  for (std::size_t i = t0; i < t1; ++i) {
    double row_mass = 0.0;
    for (std::size_t j = c0; j < c1; ++j) row_mass += attn[i][j];
    mean += row_mass;
  }
  return mean / static_cast<double>(t1 - t0);
}

inline Rows random_rows(polyprobe::Rng& rng, std::size_t m, std::size_t dim) {
  Rows x(m, std::vector<double>(dim));
  const double offset = rng.normal(0.0, 2.0);
  for (auto& row : x) {
    for (double& v : row) v = rng.normal(offset, 1.0);
  }
  return x;
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
inline Rows random_rotation(polyprobe::Rng& rng, std::size_t dim) {
  Rows q;
  while (q.size() < dim) {
    std::vector<double> v(dim);
    for (double& e : v) e = rng.normal();
    for (const auto& u : q) {
      const double p = dot(u, v);
      for (std::size_t d = 0; d < dim; ++d) v[d] -= p * u[d];
    }
    const double len = std::sqrt(dot(v, v));
    if (len < 1e-6) continue;
    for (double& e : v) e /= len;
    q.push_back(std::move(v));
  }
  return q;
}

inline Rows apply(const Rows& x, const Rows& rotation) {
  Rows out(x.size(), std::vector<double>(rotation.size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t r = 0; r < rotation.size(); ++r) out[i][r] = dot(rotation[r], x[i]);
  }
  return out;
}

/// Row-stochastic n x n matrix with strictly positive entries.
inline Rows random_stochastic(polyprobe::Rng& rng, std::size_t n) {
  Rows a(n, std::vector<double>(n));
  for (auto& row : a) {
    double s = 0.0;
    for (double& v : row) {
      v = rng.uniform() + 1e-3;
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return a;
}

}  // namespace oracle
