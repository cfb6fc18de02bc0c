#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "polyprobe/error.hpp"

namespace polyprobe::stats {

/// Column-oriented table of numeric and categorical columns. Missing values are
/// NaN (numeric) or "NA"/"" (categorical).
class DataTable {
 public:
  using Numeric = std::vector<double>;
  using Categorical = std::vector<std::string>;

  void add_numeric(std::string name, Numeric values) { add(std::move(name), std::move(values)); }
  void add_categorical(std::string name, Categorical values) { add(std::move(name), std::move(values)); }

  std::size_t rows() const noexcept { return rows_; }
  const std::vector<std::string>& column_names() const noexcept { return order_; }
  bool has(std::string_view name) const { return columns_.find(std::string(name)) != columns_.end(); }

  bool is_numeric(std::string_view name) const {
    return std::holds_alternative<Numeric>(column(name));
  }
  const Numeric& numeric(std::string_view name) const {
    const auto& c = column(name);
    if (!std::holds_alternative<Numeric>(c)) {
      fail(ErrorKind::InvalidConfig, "column '" + std::string(name) + "' is not numeric");
    }
    return std::get<Numeric>(c);
  }
  const Categorical& categorical(std::string_view name) const {
    const auto& c = column(name);
    if (!std::holds_alternative<Categorical>(c)) {
      fail(ErrorKind::InvalidConfig, "column '" + std::string(name) + "' is not categorical");
    }
    return std::get<Categorical>(c);
  }

  bool missing(std::string_view name, std::size_t row) const {
    const auto& c = column(name);
    if (const auto* num = std::get_if<Numeric>(&c)) return std::isnan((*num)[row]);
    const auto& s = std::get<Categorical>(c)[row];
    return s.empty() || s == "NA";
  }

  /// Value of any column rendered as a grouping label.
  std::string label(std::string_view name, std::size_t row) const {
    const auto& c = column(name);
    if (const auto* num = std::get_if<Numeric>(&c)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", (*num)[row]);
      return buf;
    }
    return std::get<Categorical>(c)[row];
  }

  /// Row `i` of the result is row `order[i]` of this table.
  DataTable permuted(const std::vector<std::size_t>& order) const {
    DataTable out;
    for (const auto& name : order_) {
      std::visit(
          [&](const auto& values) {
            std::decay_t<decltype(values)> copy;
            copy.reserve(order.size());
            for (std::size_t i : order) copy.push_back(values.at(i));
            out.add(name, std::move(copy));
          },
          columns_.at(name));
    }
    return out;
  }

 private:
  using Column = std::variant<Numeric, Categorical>;

  const Column& column(std::string_view name) const {
    auto it = columns_.find(std::string(name));
    if (it == columns_.end()) fail(ErrorKind::MissingColumn, "no column '" + std::string(name) + "'");
    return it->second;
  }

  template <class V>
  void add(std::string name, V values) {
    if (columns_.contains(name)) fail(ErrorKind::InvalidConfig, "duplicate column '" + name + "'");
    if (!order_.empty() && values.size() != rows_) {
      fail(ErrorKind::LengthMismatch, "column '" + name + "' has " + std::to_string(values.size()) +
                                          " rows, table has " + std::to_string(rows_));
    }
    rows_ = values.size();
    order_.push_back(name);
    columns_.emplace(std::move(name), std::move(values));
  }

  std::vector<std::string> order_;
  std::map<std::string, Column> columns_;
  std::size_t rows_ = 0;
};

/// response ~ 1 + fixed_effects + interactions + sum_k (1 | random_intercepts[k])
struct MixedModelSpec {
  std::string response;
  std::vector<std::string> fixed_effects;
  std::vector<std::string> random_intercepts;
  std::vector<std::pair<std::string, std::string>> interactions;

  void validate() const {
    if (response.empty()) fail(ErrorKind::InvalidConfig, "model spec has no response");
    std::set<std::string> terms;
    for (const auto& f : fixed_effects) {
      if (!terms.insert(f).second) fail(ErrorKind::InvalidConfig, "duplicate fixed effect '" + f + "'");
    }
    for (const auto& [a, b] : interactions) {
      if (a == b) fail(ErrorKind::InvalidConfig, "interaction of '" + a + "' with itself");
      const std::string key = a < b ? a + ":" + b : b + ":" + a;
      if (!terms.insert(key).second) fail(ErrorKind::InvalidConfig, "duplicate interaction " + key);
    }
    std::set<std::string> groups;
    for (const auto& g : random_intercepts) {
      if (!groups.insert(g).second) fail(ErrorKind::InvalidConfig, "duplicate grouping factor '" + g + "'");
    }
  }

  bool operator==(const MixedModelSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const MixedModelSpec& s) {
  nlohmann::json inter = nlohmann::json::array();
  for (const auto& [a, b] : s.interactions) inter.push_back({a, b});
  j = {{"response", s.response},
       {"fixed_effects", s.fixed_effects},
       {"random_intercepts", s.random_intercepts},
       {"interactions", inter}};
}

inline void from_json(const nlohmann::json& j, MixedModelSpec& s) {
  s.response = j.at("response").get<std::string>();
  s.fixed_effects = j.value("fixed_effects", std::vector<std::string>{});
  s.random_intercepts = j.value("random_intercepts", std::vector<std::string>{});
  s.interactions.clear();
  for (const auto& pair : j.value("interactions", nlohmann::json::array())) {
    s.interactions.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  }
}

}  // namespace polyprobe::stats
