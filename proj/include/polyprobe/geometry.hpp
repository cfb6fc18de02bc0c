#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "polyprobe/error.hpp"
#include "polyprobe/matrix_view.hpp"
#include "polyprobe/trace_store.hpp"

namespace polyprobe {

/// Norm floor below which a vector is treated as degenerate.
inline constexpr double kNormEpsilon = 1e-8;

enum class Pooling { mean };

struct PooledEmbedding {
  std::vector<double> vector;
  TokenSpan source_span;
  Pooling pooling = Pooling::mean;
};

struct IsotropyScores {
  double ci = 0.0;
  double mcd = 0.0;
  double iss = 0.0;
  std::size_t n_used = 0;
};

namespace detail {

template <class U, class V>
double dot(std::span<const U> a, std::span<const V> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <class U>
double norm(std::span<const U> a) {
  return std::sqrt(dot(a, a));
}

inline double clamp_distance(double d) { return std::clamp(d, 0.0, 2.0); }

/// Rows as doubles, optionally centered, scaled to unit length.
template <class T>
RowMatrix<double> unit_rows(RowMatrixView<T> x, bool center) {
  const std::size_t m = x.rows();
  const std::size_t dim = x.cols();
  std::vector<double> mean(dim, 0.0);
  if (center) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += static_cast<double>(x(i, d));
    }
    for (double& v : mean) v /= static_cast<double>(m);
  }
  RowMatrix<double> out(m, dim);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = out.row(i);
    for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<double>(x(i, d)) - mean[d];
    const double len = norm(std::span<const double>(row));
    if (len < kNormEpsilon) {
      fail(ErrorKind::DegenerateVector, center ? "token equals the sentence mean" : "zero-norm token row");
    }
    for (double& v : row) v /= len;
  }
  return out;
}

/// Mean of 1 - <u_i, u_j> over unordered pairs of unit rows, via |sum u|^2.
inline double mean_pairwise_unit_distance(const RowMatrix<double>& unit) {
  const std::size_t m = unit.rows;
  std::vector<double> total(unit.cols, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = unit.row(i);
    for (std::size_t d = 0; d < unit.cols; ++d) total[d] += row[d];
  }
  const double sq = dot(std::span<const double>(total), std::span<const double>(total));
  // sum_{i<j} <u_i,u_j> = (|sum u|^2 - m) / 2
  const double pair_count = static_cast<double>(m) * static_cast<double>(m - 1) / 2.0;
  const double mean_dot = (sq - static_cast<double>(m)) / 2.0 / pair_count;
  return clamp_distance(1.0 - mean_dot);
}

}  // namespace detail

/// Element-wise mean of the span's rows.
template <class T>
PooledEmbedding pool(RowMatrixView<T> layer, TokenSpan span) {
  if (!span.valid_for(layer.rows())) fail(ErrorKind::InvalidSpan, "pooling span out of range");
  PooledEmbedding out;
  out.source_span = span;
  out.vector.assign(layer.cols(), 0.0);
  for (std::size_t i = span.begin; i < span.end; ++i) {
    for (std::size_t d = 0; d < layer.cols(); ++d) out.vector[d] += static_cast<double>(layer(i, d));
  }
  for (double& v : out.vector) v /= static_cast<double>(span.size());
  for (double v : out.vector) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "pooled embedding is not finite");
  }
  if (detail::norm(std::span<const double>(out.vector)) < kNormEpsilon) {
    fail(ErrorKind::DegenerateVector, "pooled embedding has near-zero norm");
  }
  return out;
}

/// 1 - cos(u, v), clamped to [0, 2].
template <class U, class V>
double cosine_distance(std::span<const U> u, std::span<const V> v) {
  if (u.size() != v.size()) fail(ErrorKind::LengthMismatch, "cosine_distance: dimension mismatch");
  const double nu = detail::norm(u);
  const double nv = detail::norm(v);
  if (nu < kNormEpsilon || nv < kNormEpsilon) fail(ErrorKind::DegenerateVector, "cosine of a zero vector");
  return detail::clamp_distance(1.0 - detail::dot(u, v) / (nu * nv));
}

inline double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine_distance(std::span<const double>(u), std::span<const double>(v));
}

/// Centered Isotropy: center rows on their mean, unit-normalize, average 1 - dot over pairs.
template <class T>
double centered_isotropy(RowMatrixView<T> tokens) {
  if (tokens.rows() < 3) fail(ErrorKind::TooFewTokens, "centered isotropy needs at least 3 tokens");
  return detail::mean_pairwise_unit_distance(detail::unit_rows(tokens, /*center=*/true));
}

/// Mean pairwise cosine distance of the raw rows.
template <class T>
double mean_cosine_distance(RowMatrixView<T> tokens) {
  if (tokens.rows() < 2) fail(ErrorKind::TooFewTokens, "mean cosine distance needs at least 2 tokens");
  return detail::mean_pairwise_unit_distance(detail::unit_rows(tokens, /*center=*/false));
}

/// Mean cosine similarity between each row and the sentence mean.
template <class T>
double intra_sentence_similarity(RowMatrixView<T> tokens) {
  const std::size_t m = tokens.rows();
  if (m < 2) fail(ErrorKind::TooFewTokens, "intra-sentence similarity needs at least 2 tokens");
  std::vector<double> mean(tokens.cols(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t d = 0; d < tokens.cols(); ++d) mean[d] += static_cast<double>(tokens(i, d));
  }
  for (double& v : mean) v /= static_cast<double>(m);
  const double mean_norm = detail::norm(std::span<const double>(mean));
  if (mean_norm < kNormEpsilon) fail(ErrorKind::DegenerateVector, "sentence mean vector is zero");

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = tokens.row(i);
    const double row_norm = detail::norm(row);
    if (row_norm < kNormEpsilon) fail(ErrorKind::DegenerateVector, "zero-norm token row");
    total += detail::dot(row, std::span<const double>(mean)) / (row_norm * mean_norm);
  }
  return std::clamp(total / static_cast<double>(m), -1.0, 1.0);
}

template <class T>
IsotropyScores isotropy_scores(RowMatrixView<T> tokens) {
  return {centered_isotropy(tokens), mean_cosine_distance(tokens), intra_sentence_similarity(tokens),
          tokens.rows()};
}

/// Rows of one layer, skipping special tokens unless requested.
template <class T>
RowMatrix<double> gather_rows(RowMatrixView<T> layer, const std::vector<bool>& special_mask,
                              bool include_specials) {
  std::size_t kept = 0;
  for (std::size_t i = 0; i < layer.rows(); ++i) kept += (include_specials || !special_mask[i]) ? 1 : 0;
  RowMatrix<double> out(kept, layer.cols());
  std::size_t r = 0;
  for (std::size_t i = 0; i < layer.rows(); ++i) {
    if (!include_specials && special_mask[i]) continue;
    for (std::size_t d = 0; d < layer.cols(); ++d) out(r, d) = static_cast<double>(layer(i, d));
    ++r;
  }
  return out;
}

}  // namespace polyprobe
