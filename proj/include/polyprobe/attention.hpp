#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "polyprobe/error.hpp"
#include "polyprobe/matrix_view.hpp"
#include "polyprobe/trace_store.hpp"

namespace polyprobe {

/// Target-to-cue attention of one head: mean over target query rows of the
/// attention mass summed over the cue key columns.
template <class T>
double head_attention_to_cue(RowMatrixView<T> attn, TokenSpan target, TokenSpan cue,
                             double row_tolerance = kAttentionRowTolerance) {
  const std::size_t n = attn.rows();
  if (attn.cols() != n) fail(ErrorKind::ShapeMismatch, "attention map must be square");
  if (!target.valid_for(n) || !cue.valid_for(n)) fail(ErrorKind::InvalidSpan, "span out of range");
  if (target.overlaps(cue)) fail(ErrorKind::SpanOverlap, "target and cue spans overlap");
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += static_cast<double>(attn(i, j));
    if (std::abs(sum - 1.0) > row_tolerance) {
      fail(ErrorKind::RowSumViolation, "attention row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
  // extended accumulator: the only rounding left is the final one, so uniform
  // rows give m/n to within an ulp
  long double total = 0.0L;
  for (std::size_t i = target.begin; i < target.end; ++i) {
    for (std::size_t j = cue.begin; j < cue.end; ++j) total += static_cast<long double>(attn(i, j));
  }
  return std::clamp(static_cast<double>(total / static_cast<long double>(target.size())), 0.0, 1.0);
}

struct LayerAggregate {
  std::vector<double> layer_mean;
  std::vector<double> layer_max;
};

/// Mean and max over heads for each layer of an L x H matrix.
inline LayerAggregate aggregate_layers(RowMatrixView<double> per_head) {
  LayerAggregate out;
  const std::size_t heads = per_head.cols();
  if (heads == 0) fail(ErrorKind::ShapeMismatch, "no attention heads");
  for (std::size_t l = 0; l < per_head.rows(); ++l) {
    const auto row = per_head.row(l);
    double sum = 0.0;
    for (double v : row) sum += v;
    out.layer_mean.push_back(sum / static_cast<double>(heads));
    out.layer_max.push_back(*std::ranges::max_element(row));
  }
  return out;
}

/// Running maximum: out[l] = max(in[0..l]).
inline std::vector<double> cumulative_max(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

struct AttentionToCue {
  RowMatrix<double> per_head;  // L x H, row l holds layer l+1
  std::vector<double> layer_mean;
  std::vector<double> layer_max;
  std::vector<double> cum_max;
};

inline AttentionToCue attention_to_cue(const ActivationTrace& trace) {
  AttentionToCue out;
  out.per_head = RowMatrix<double>(trace.num_layers, trace.num_heads);
  for (std::size_t l = 1; l <= trace.num_layers; ++l) {
    for (std::size_t h = 0; h < trace.num_heads; ++h) {
      out.per_head(l - 1, h) = head_attention_to_cue(trace.attention_map(l, h), trace.header.target_span,
                                                     trace.header.cue_span);
    }
  }
  auto agg = aggregate_layers(out.per_head.view());
  out.layer_mean = std::move(agg.layer_mean);
  out.layer_max = std::move(agg.layer_max);
  out.cum_max = cumulative_max(out.layer_max);
  return out;
}

}  // namespace polyprobe
