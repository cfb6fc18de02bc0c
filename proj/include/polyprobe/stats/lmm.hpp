#pragma once

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/stats/optimize.hpp"
#include "polyprobe/stats/table.hpp"

namespace polyprobe::stats {

enum class Estimation { ml, reml };

constexpr std::string_view to_string(Estimation m) { return m == Estimation::ml ? "ML" : "REML"; }

struct LmmOptions {
  Estimation method = Estimation::ml;
  bool standardize = false;
  double rel_tol = 1e-8;
  int max_iterations = 500;
  double gamma_floor = 1e-10;
  double gamma_ceiling = 1e6;
  /// Evaluate at these variance ratios instead of optimizing (one per grouping factor).
  std::optional<std::vector<double>> fixed_gamma;
  std::string label;
};

struct Coefficient {
  std::string term;
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

struct VarianceComponent {
  std::string factor;
  double variance = 0.0;  // sigma^2_k
  double ratio = 0.0;     // sigma^2_k / sigma^2
  std::size_t n_levels = 0;
};

struct LmmFit {
  std::string label;
  MixedModelSpec spec;
  Estimation method = Estimation::ml;
  std::vector<Coefficient> beta;
  std::vector<VarianceComponent> variance_components;
  double residual_variance = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
  std::uint64_t row_fingerprint = 0;

  const Coefficient* coefficient(std::string_view term) const {
    for (const auto& c : beta) {
      if (c.term == term) return &c;
    }
    return nullptr;
  }
  const Coefficient& at(std::string_view term) const {
    if (const auto* c = coefficient(term)) return *c;
    fail(ErrorKind::InvalidConfig, "fit has no term '" + std::string(term) + "'");
  }
  const VarianceComponent* component(std::string_view factor) const {
    for (const auto& v : variance_components) {
      if (v.factor == factor) return &v;
    }
    return nullptr;
  }
};

/// Two-sided Wald p-value under the standard normal.
inline double wald_p_value(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

// --- design ------------------------------------------------------------------

struct GroupingFactor {
  std::string name;
  std::vector<std::string> levels;  // sorted
  std::vector<int> level_of_row;    // per used observation
};

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> terms;
  std::vector<std::size_t> rows;  // source table rows, in table order
  std::vector<GroupingFactor> factors;
};

namespace detail {

struct EncodedTerm {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;
};

inline EncodedTerm encode_term(const DataTable& data, const std::string& column,
                               const std::vector<std::size_t>& rows, bool standardize) {
  EncodedTerm out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (data.is_numeric(column)) {
    const auto& values = data.numeric(column);
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) col[i] = values[rows[static_cast<std::size_t>(i)]];
    if (standardize && n > 1) {
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
      col.array() -= mean;
      if (sd > 0.0) col /= sd;
    }
    out.names.push_back(column);
    out.columns.push_back(std::move(col));
    return out;
  }
  const auto& values = data.categorical(column);
  std::set<std::string> levels;
  for (std::size_t r : rows) levels.insert(values[r]);
  if (levels.size() < 2) {
    fail(ErrorKind::RankDeficientDesign, "categorical fixed effect '" + column + "' has a single level");
  }
  // Alphabetically first level is the reference.
  for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) col[i] = values[rows[static_cast<std::size_t>(i)]] == *it ? 1.0 : 0.0;
    out.names.push_back(column + "[" + *it + "]");
    out.columns.push_back(std::move(col));
  }
  return out;
}

inline std::uint64_t fingerprint(const std::vector<std::size_t>& rows) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  };
  mix(rows.size());
  for (auto r : rows) mix(r);
  return h;
}

/// Reorders observations by content (levels, response, covariates) so that the
/// floating-point work, and therefore every estimate, is independent of input row order.
inline Design canonical_order(const Design& d) {
  const auto n = d.x.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (const auto& f : d.factors) {
      const int la = f.level_of_row[static_cast<std::size_t>(a)];
      const int lb = f.level_of_row[static_cast<std::size_t>(b)];
      if (la != lb) return la < lb;
    }
    if (d.y[a] != d.y[b]) return d.y[a] < d.y[b];
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
      if (d.x(a, j) != d.x(b, j)) return d.x(a, j) < d.x(b, j);
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  Design out;
  out.terms = d.terms;
  out.x.resize(n, d.x.cols());
  out.y.resize(n);
  out.rows.resize(d.rows.size());
  out.factors = d.factors;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = order[static_cast<std::size_t>(i)];
    out.x.row(i) = d.x.row(src);
    out.y[i] = d.y[src];
    out.rows[static_cast<std::size_t>(i)] = d.rows[static_cast<std::size_t>(src)];
    for (std::size_t k = 0; k < d.factors.size(); ++k) {
      out.factors[k].level_of_row[static_cast<std::size_t>(i)] = d.factors[k].level_of_row[static_cast<std::size_t>(src)];
    }
  }
  return out;
}

}  // namespace detail

/// Complete-case design matrix with intercept, encoded fixed effects,
/// interactions, and grouping-factor level indices.
inline Design build_design(const DataTable& data, const MixedModelSpec& spec, bool standardize = false) {
  spec.validate();
  if (!data.is_numeric(spec.response)) {
    fail(ErrorKind::InvalidConfig, "response '" + spec.response + "' must be numeric");
  }
  std::vector<std::string> used = {spec.response};
  for (const auto& f : spec.fixed_effects) used.push_back(f);
  for (const auto& [a, b] : spec.interactions) {
    used.push_back(a);
    used.push_back(b);
  }
  for (const auto& g : spec.random_intercepts) used.push_back(g);
  for (const auto& c : used) {
    if (!data.has(c)) fail(ErrorKind::MissingColumn, "model column '" + c + "' not in table");
  }

  Design d;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    bool complete = true;
    for (const auto& c : used) complete = complete && !data.missing(c, r);
    if (complete) d.rows.push_back(r);
  }
  const auto n = static_cast<Eigen::Index>(d.rows.size());
  if (n == 0) fail(ErrorKind::TooFewObservations, "no complete rows for model of " + spec.response);

  std::vector<Eigen::VectorXd> columns;
  d.terms.emplace_back("(Intercept)");
  columns.push_back(Eigen::VectorXd::Ones(n));

  std::map<std::string, detail::EncodedTerm> encoded;
  auto encode = [&](const std::string& c) -> const detail::EncodedTerm& {
    auto it = encoded.find(c);
    if (it == encoded.end()) it = encoded.emplace(c, detail::encode_term(data, c, d.rows, standardize)).first;
    return it->second;
  };
  for (const auto& f : spec.fixed_effects) {
    const auto& term = encode(f);
    d.terms.insert(d.terms.end(), term.names.begin(), term.names.end());
    columns.insert(columns.end(), term.columns.begin(), term.columns.end());
  }
  for (const auto& [a, b] : spec.interactions) {
    const auto& ta = encode(a);
    const auto& tb = encode(b);
    for (std::size_t i = 0; i < ta.names.size(); ++i) {
      for (std::size_t j = 0; j < tb.names.size(); ++j) {
        d.terms.push_back(ta.names[i] + ":" + tb.names[j]);
        columns.push_back(ta.columns[i].cwiseProduct(tb.columns[j]));
      }
    }
  }

  d.x.resize(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) d.x.col(static_cast<Eigen::Index>(k)) = columns[k];
  const auto& response = data.numeric(spec.response);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.y[i] = response[d.rows[static_cast<std::size_t>(i)]];

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
  qr.setThreshold(1e-10);
  if (qr.rank() < d.x.cols()) {
    fail(ErrorKind::RankDeficientDesign, "fixed-effect design for " + spec.response + " has rank " +
                                             std::to_string(qr.rank()) + " < " +
                                             std::to_string(d.x.cols()) + " columns");
  }

  for (const auto& g : spec.random_intercepts) {
    GroupingFactor factor;
    factor.name = g;
    std::vector<std::string> labels;
    labels.reserve(d.rows.size());
    for (std::size_t r : d.rows) labels.push_back(data.label(g, r));
    std::set<std::string> levels(labels.begin(), labels.end());
    if (levels.size() < 2) fail(ErrorKind::SingularFactor, "grouping factor '" + g + "' has fewer than 2 levels");
    factor.levels.assign(levels.begin(), levels.end());
    for (const auto& label : labels) {
      auto it = std::lower_bound(factor.levels.begin(), factor.levels.end(), label);
      factor.level_of_row.push_back(static_cast<int>(it - factor.levels.begin()));
    }
    d.factors.push_back(std::move(factor));
  }
  return d;
}

// --- profiled likelihood -------------------------------------------------------

/// Profiled deviance of y = X b + sum_k Z_k u_k + e for given variance ratios.
/// With Lambda = diag(sqrt(gamma)) and A = Lambda Z'Z Lambda + I, the mixed-model
/// equations are solved blockwise: sparse Cholesky of A, dense Schur complement S for b.
class ProfiledLmm {
 public:
  struct Evaluation {
    double deviance_ml = 0.0;
    double deviance_reml = 0.0;
    double pwrss = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd schur_inverse;  // S^{-1}; cov(b) = sigma^2 S^{-1}
  };

  explicit ProfiledLmm(const Design& design) : design_(design) {
    const auto n = design.x.rows();
    Eigen::Index q = 0;
    for (std::size_t k = 0; k < design.factors.size(); ++k) {
      const auto& f = design.factors[k];
      offsets_.push_back(q);
      for (std::size_t l = 0; l < f.levels.size(); ++l) factor_of_level_.push_back(static_cast<int>(k));
      q += static_cast<Eigen::Index>(f.levels.size());
    }
    q_ = q;
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * design.factors.size());
    for (std::size_t k = 0; k < design.factors.size(); ++k) {
      const auto& f = design.factors[k];
      for (Eigen::Index i = 0; i < n; ++i) {
        triplets.emplace_back(i, offsets_[k] + f.level_of_row[static_cast<std::size_t>(i)], 1.0);
      }
    }
    z_.resize(n, q);
    z_.setFromTriplets(triplets.begin(), triplets.end());
    xtx_ = design.x.transpose() * design.x;
    xty_ = design.x.transpose() * design.y;
    if (q_ > 0) {
      ztz_ = (z_.transpose() * z_).pruned();
      ztx_ = z_.transpose() * design.x;
      zty_ = z_.transpose() * design.y;
      llt_.analyzePattern(ztz_);
    }
  }

  std::size_t n_obs() const { return static_cast<std::size_t>(design_.x.rows()); }
  std::size_t n_fixed() const { return static_cast<std::size_t>(design_.x.cols()); }

  Evaluation evaluate(const std::vector<double>& gamma) const {
    const auto n = static_cast<double>(design_.x.rows());
    const auto p = static_cast<double>(design_.x.cols());
    Evaluation ev;
    Eigen::MatrixXd schur = xtx_;
    Eigen::VectorXd rhs = xty_;
    Eigen::VectorXd lambda(q_);
    double logdet_a = 0.0;
    Eigen::MatrixXd w;
    Eigen::VectorXd wy;
    Eigen::MatrixXd lztx;
    if (q_ > 0) {
      for (Eigen::Index j = 0; j < q_; ++j) {
        lambda[j] = std::sqrt(std::max(0.0, gamma[static_cast<std::size_t>(factor_of_level_[static_cast<std::size_t>(j)])]));
      }
      Eigen::SparseMatrix<double> a = ztz_;
      for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it) {
          it.valueRef() *= lambda[it.row()] * lambda[it.col()];
          if (it.row() == it.col()) it.valueRef() += 1.0;
        }
      }
      llt_.factorize(a);
      if (llt_.info() != Eigen::Success) fail(ErrorKind::NonConvergence, "random-effect block not positive definite");
      logdet_a = 2.0 * llt_.matrixL().nestedExpression().diagonal().array().log().sum();
      lztx = lambda.asDiagonal() * ztx_;
      const Eigen::VectorXd lzty = lambda.asDiagonal() * zty_;
      w = llt_.solve(lztx);
      wy = llt_.solve(lzty);
      schur.noalias() -= lztx.transpose() * w;
      rhs.noalias() -= lztx.transpose() * wy;
    }
    Eigen::LLT<Eigen::MatrixXd> schur_llt(schur);
    if (schur_llt.info() != Eigen::Success) {
      fail(ErrorKind::RankDeficientDesign, "fixed-effect Schur complement is not positive definite");
    }
    ev.beta = schur_llt.solve(rhs);
    Eigen::VectorXd fitted = design_.x * ev.beta;
    double penalty = 0.0;
    if (q_ > 0) {
      const Eigen::VectorXd u = wy - w * ev.beta;
      penalty = u.squaredNorm();
      fitted += z_ * lambda.cwiseProduct(u);
    }
    ev.pwrss = (design_.y - fitted).squaredNorm() + penalty;
    if (!(ev.pwrss > 0.0)) fail(ErrorKind::RankDeficientDesign, "response is fitted exactly; residual variance is zero");
    const double logdet_s = 2.0 * schur_llt.matrixLLT().diagonal().array().log().sum();
    const double two_pi = 2.0 * std::numbers::pi;
    ev.deviance_ml = logdet_a + n * (1.0 + std::log(two_pi * ev.pwrss / n));
    ev.deviance_reml = logdet_a + logdet_s + (n - p) * (1.0 + std::log(two_pi * ev.pwrss / (n - p)));
    ev.schur_inverse = schur_llt.solve(Eigen::MatrixXd::Identity(schur.rows(), schur.cols()));
    return ev;
  }

  double deviance(const std::vector<double>& gamma, Estimation method) const {
    const auto ev = evaluate(gamma);
    return method == Estimation::ml ? ev.deviance_ml : ev.deviance_reml;
  }

 private:
  const Design& design_;
  Eigen::Index q_ = 0;
  std::vector<Eigen::Index> offsets_;
  std::vector<int> factor_of_level_;
  Eigen::SparseMatrix<double> z_;
  Eigen::SparseMatrix<double> ztz_;
  Eigen::MatrixXd ztx_;
  Eigen::VectorXd zty_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  mutable Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
};

// --- fitting -----------------------------------------------------------------

namespace detail {

struct GammaSearch {
  std::vector<double> gamma;
  int iterations = 0;
  bool converged = true;
};

/// Minimizes the profiled deviance over log variance ratios.
template <class Objective>
GammaSearch search_gamma(Objective&& deviance, std::size_t k, const LmmOptions& options) {
  const double lo = std::log(options.gamma_floor);
  const double hi = std::log(options.gamma_ceiling);
  auto safe = [&](const std::vector<double>& log_gamma) {
    std::vector<double> gamma(log_gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = std::exp(log_gamma[i]);
    try {
      const double v = deviance(gamma);
      return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    } catch (const Error&) {
      return std::numeric_limits<double>::max();
    }
  };

  GammaSearch out;
  std::vector<double> theta(k, 0.0);
  if (k == 1) {
    // Coarse scan brackets the global minimum, Brent refines it.
    double best = lo;
    double best_value = std::numeric_limits<double>::infinity();
    for (double t = lo; t <= hi + 1e-12; t += 1.0) {
      const double v = safe({t});
      ++out.iterations;
      if (v < best_value) {
        best_value = v;
        best = t;
      }
    }
    theta[0] = brent_minimize([&](double t) { ++out.iterations; return safe({t}); },
                              std::max(lo, best - 1.0), std::min(hi, best + 1.0), 1e-10);
  } else {
    NelderMeadOptions nm;
    nm.rel_tol = options.rel_tol;
    nm.max_iterations = options.max_iterations;
    auto result = nelder_mead(safe, theta, {lo, hi}, nm);
    out.iterations += result.iterations;
    for (int restart = 0; restart < 3; ++restart) {
      nm.initial_step = 0.5;
      auto again = nelder_mead(safe, result.x, {lo, hi}, nm);
      out.iterations += again.iterations;
      const bool improved = again.value < result.value - options.rel_tol * (std::abs(result.value) + 1.0);
      if (again.value <= result.value) result = std::move(again);
      if (!improved) break;
    }
    out.converged = result.converged;
    theta = result.x;
    // Coordinate polish for tight variance-ratio estimates.
    for (int sweep = 0; sweep < 20; ++sweep) {
      double change = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        auto line = [&](double t) {
          auto probe = theta;
          probe[i] = t;
          ++out.iterations;
          return safe(probe);
        };
        const double before = line(theta[i]);
        const double t = brent_minimize(line, std::max(lo, theta[i] - 0.5), std::min(hi, theta[i] + 0.5), 1e-10);
        if (line(t) < before) {
          change = std::max(change, std::abs(t - theta[i]));
          theta[i] = t;
        }
      }
      if (change < 1e-9) break;
    }
  }
  for (double t : theta) {
    if (t >= hi - 1e-6) out.converged = false;
  }
  for (double t : theta) out.gamma.push_back(std::exp(t));
  return out;
}

}  // namespace detail

/// Gaussian linear mixed model with crossed random intercepts, fitted by
/// maximizing the profiled (restricted) likelihood over variance ratios.
inline LmmFit fit_lmm(const DataTable& data, const MixedModelSpec& spec, const LmmOptions& options = {}) {
  const Design design = detail::canonical_order(build_design(data, spec, options.standardize));
  const std::size_t n = design.rows.size();
  const std::size_t p = static_cast<std::size_t>(design.x.cols());
  const std::size_t k = design.factors.size();

  LmmFit fit;
  fit.label = options.label;
  fit.spec = spec;
  fit.method = options.method;
  fit.n_obs = n;
  fit.n_params = p + k + 1;
  {
    auto rows = design.rows;
    std::sort(rows.begin(), rows.end());
    fit.row_fingerprint = detail::fingerprint(rows);
  }
  if (n <= fit.n_params) {
    fail(ErrorKind::TooFewObservations, spec.response + ": " + std::to_string(n) + " observations for " +
                                            std::to_string(fit.n_params) + " parameters");
  }
  if (options.method == Estimation::reml && n <= p) {
    fail(ErrorKind::TooFewObservations, "REML needs more observations than fixed effects");
  }

  const ProfiledLmm model(design);
  auto deviance = [&](const std::vector<double>& gamma) { return model.deviance(gamma, options.method); };

  std::vector<double> gamma;
  fit.converged = true;
  if (options.fixed_gamma) {
    if (options.fixed_gamma->size() != k) fail(ErrorKind::InvalidConfig, "fixed_gamma needs one ratio per factor");
    gamma = *options.fixed_gamma;
  } else if (k > 0) {
    auto search = detail::search_gamma(deviance, k, options);
    gamma = std::move(search.gamma);
    fit.iterations = search.iterations;
    fit.converged = search.converged;
    // Boundary estimates are reported as exactly zero.
    double current = deviance(gamma);
    for (std::size_t i = 0; i < k; ++i) {
      if (gamma[i] >= 100.0 * options.gamma_floor) continue;
      auto trial = gamma;
      trial[i] = 0.0;
      const double v = deviance(trial);
      if (v <= current + 1e-10 * (1.0 + std::abs(current))) {
        gamma = std::move(trial);
        current = v;
      }
    }
  }

  const auto ev = model.evaluate(gamma);
  const double denom = options.method == Estimation::ml ? static_cast<double>(n) : static_cast<double>(n - p);
  const double sigma2 = ev.pwrss / denom;
  fit.residual_variance = sigma2;
  for (std::size_t j = 0; j < p; ++j) {
    Coefficient c;
    c.term = design.terms[j];
    c.estimate = ev.beta[static_cast<Eigen::Index>(j)];
    c.std_error = std::sqrt(sigma2 * ev.schur_inverse(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    c.z = c.estimate / c.std_error;
    c.p_value = wald_p_value(c.z);
    fit.beta.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < k; ++i) {
    fit.variance_components.push_back(
        {design.factors[i].name, gamma[i] * sigma2, gamma[i], design.factors[i].levels.size()});
  }
  const double dev = options.method == Estimation::ml ? ev.deviance_ml : ev.deviance_reml;
  fit.loglik = -0.5 * dev;
  fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(fit.n_params);
  return fit;
}

// --- serialization -----------------------------------------------------------

inline nlohmann::json fit_to_json(const LmmFit& fit) {
  nlohmann::json fixed = nlohmann::json::array();
  for (const auto& c : fit.beta) {
    fixed.push_back({{"term", c.term}, {"estimate", c.estimate}, {"std_error", c.std_error},
                     {"z", c.z}, {"p_value", c.p_value}});
  }
  nlohmann::json components = nlohmann::json::array();
  for (const auto& v : fit.variance_components) {
    components.push_back({{"factor", v.factor}, {"variance", v.variance}, {"ratio", v.ratio},
                          {"n_levels", v.n_levels}});
  }
  return {{"label", fit.label},
          {"spec", fit.spec},
          {"method", std::string(to_string(fit.method))},
          {"fixed_effects", fixed},
          {"variance_components", components},
          {"residual_variance", fit.residual_variance},
          {"loglik", fit.loglik},
          {"aic", fit.aic},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"n_obs", fit.n_obs},
          {"n_params", fit.n_params},
          {"row_fingerprint", fit.row_fingerprint}};
}

inline LmmFit fit_from_json(const nlohmann::json& j) {
  LmmFit fit;
  fit.label = j.at("label").get<std::string>();
  fit.spec = j.at("spec").get<MixedModelSpec>();
  fit.method = j.at("method").get<std::string>() == "REML" ? Estimation::reml : Estimation::ml;
  for (const auto& c : j.at("fixed_effects")) {
    fit.beta.push_back({c.at("term").get<std::string>(), c.at("estimate").get<double>(),
                        c.at("std_error").get<double>(), c.at("z").get<double>(), c.at("p_value").get<double>()});
  }
  for (const auto& v : j.at("variance_components")) {
    fit.variance_components.push_back({v.at("factor").get<std::string>(), v.at("variance").get<double>(),
                                       v.at("ratio").get<double>(), v.at("n_levels").get<std::size_t>()});
  }
  fit.residual_variance = j.at("residual_variance").get<double>();
  fit.loglik = j.at("loglik").get<double>();
  fit.aic = j.at("aic").get<double>();
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.at("iterations").get<int>();
  fit.n_obs = j.at("n_obs").get<std::size_t>();
  fit.n_params = j.at("n_params").get<std::size_t>();
  fit.row_fingerprint = j.at("row_fingerprint").get<std::uint64_t>();
  return fit;
}

}  // namespace polyprobe::stats
