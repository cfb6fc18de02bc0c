#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "polyprobe/error.hpp"
#include "polyprobe/stats/lmm.hpp"

namespace polyprobe::stats {

struct AicLadder {
  struct Entry {
    std::string label;
    double aic = 0.0;
    double delta_aic = 0.0;
  };

  std::string baseline;
  std::vector<Entry> entries;  // ascending delta_aic

  const Entry* find(std::string_view label) const {
    for (const auto& e : entries) {
      if (e.label == label) return &e;
    }
    return nullptr;
  }
  double delta(std::string_view label) const {
    if (const auto* e = find(label)) return e->delta_aic;
    fail(ErrorKind::InvalidConfig, "ladder has no entry '" + std::string(label) + "'");
  }
};

/// AIC of each fit relative to the baseline fit, sorted ascending.
inline AicLadder compare_aic(std::span<const LmmFit> fits, std::size_t baseline_index) {
  if (baseline_index >= fits.size()) fail(ErrorKind::InvalidConfig, "baseline index out of range");
  const LmmFit& base = fits[baseline_index];
  AicLadder ladder;
  ladder.baseline = base.label;
  for (const auto& f : fits) {
    if (f.n_obs != base.n_obs || f.row_fingerprint != base.row_fingerprint) {
      fail(ErrorKind::MismatchedObservations, "fit '" + f.label + "' uses a different observation set");
    }
    if (f.method != base.method) {
      fail(ErrorKind::MismatchedObservations, "fit '" + f.label + "' uses a different estimation method");
    }
    ladder.entries.push_back({f.label, f.aic, f.aic - base.aic});
  }
  std::stable_sort(ladder.entries.begin(), ladder.entries.end(),
                   [](const auto& a, const auto& b) { return a.delta_aic < b.delta_aic; });
  return ladder;
}

}  // namespace polyprobe::stats
