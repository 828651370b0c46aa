#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"
#include "bbsi/lasso.hpp"
#include "bbsi/stats.hpp"
#include "bbsi/stream.hpp"

namespace bbsi {

enum class SelectorKind { simple_threshold, stability, multi_cv };

inline std::string_view to_string(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::simple_threshold: return "simple";
    case SelectorKind::stability: return "stability";
    case SelectorKind::multi_cv: return "multicv";
  }
  return "?";
}

inline SelectorKind selector_kind_from_string(std::string_view name) {
  if (name == "simple" || name == "simple-threshold") return SelectorKind::simple_threshold;
  if (name == "stability") return SelectorKind::stability;
  if (name == "multicv" || name == "multi-cv") return SelectorKind::multi_cv;
  throw ConfigError("unknown selector kind '" + std::string(name) + "'");
}

/// Result of one black-box run. For the one-dimensional threshold rule the
/// selected set is {0} when the data passed and empty otherwise.
struct SelectionOutcome {
  std::vector<int> selected;
  std::vector<std::vector<int>> per_run_sets;  // diagnostics only

  bool contains(int j) const { return std::binary_search(selected.begin(), selected.end(), j); }
  bool passed() const { return !selected.empty(); }
};

// ---------------------------------------------------------------------------
// Randomized subsample-threshold rule

/// Selects a sample mean when at least q*m of m randomized checks
/// sqrt(n) * ybar + omega_i > tau pass, omega_i ~ N(0, sigma^2 n / n_s).
/// This is the large-sample form of re-checking the mean of m bootstrap
/// subsamples of size n_s.
struct SimpleThresholdParams {
  int m = 20;
  double q = 0.5;
  double tau = 1.3;
  double sigma = 1.0;
  int n = 100;
  int n_s = 50;

  void validate() const {
    detail::require(m >= 1, "simple selector: m must be >= 1");
    detail::require(q > 0.0 && q < 1.0, "simple selector: q must lie in (0, 1)");
    detail::require(!std::isnan(tau), "simple selector: tau must not be NaN");
    detail::require(sigma > 0.0 && std::isfinite(sigma), "simple selector: sigma must be positive");
    detail::require(n >= 1 && n_s >= 1 && n_s <= n, "simple selector: need 1 <= n_s <= n");
  }

  double randomization_sd() const {
    return sigma * std::sqrt(static_cast<double>(n) / static_cast<double>(n_s));
  }

  /// Large-sample per-check success probability at sample mean x.
  double success_probability(double x) const {
    if (std::isinf(tau)) return tau < 0 ? 1.0 : 0.0;
    return norm_sf((tau - std::sqrt(static_cast<double>(n)) * x) / randomization_sd());
  }
};

namespace detail {

template <class Engine>
int simple_threshold_successes(double ybar, const SimpleThresholdParams& params, int draws,
                               Engine& engine) {
  std::normal_distribution<double> omega(0.0, params.randomization_sd());
  const double base = std::sqrt(static_cast<double>(params.n)) * ybar;
  int successes = 0;
  for (int i = 0; i < draws; ++i) successes += (base + omega(engine) > params.tau) ? 1 : 0;
  return successes;
}

}  // namespace detail

inline bool simple_threshold_select(double ybar, const SimpleThresholdParams& params,
                                    const SeededStream& stream) {
  params.validate();
  if (!std::isfinite(ybar)) throw DomainError("simple_threshold_select: non-finite mean");
  auto engine = stream.engine();
  const int successes = detail::simple_threshold_successes(ybar, params, params.m, engine);
  return successes >= min_successes(params.q * params.m);
}

/// A single randomized check; the Bernoulli component of the rule above.
inline bool simple_threshold_component(double ybar, const SimpleThresholdParams& params,
                                       const SeededStream& stream) {
  params.validate();
  if (!std::isfinite(ybar)) throw DomainError("simple_threshold_component: non-finite mean");
  auto engine = stream.engine();
  return detail::simple_threshold_successes(ybar, params, 1, engine) == 1;
}

// ---------------------------------------------------------------------------
// Stability selection over the Lasso path

struct StabilityParams {
  int m = 5;
  double q = 0.6;

  void validate() const {
    detail::require(m >= 1, "stability selector: m must be >= 1");
    detail::require(q > 0.0 && q <= 1.0, "stability selector: q must lie in (0, 1]");
  }
};

/// Problem-level constants frozen at the observed data.
struct StabilityContext {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd half_gram;
  double sigma2 = 1.0;
  std::vector<double> lambda_grid;  // strictly decreasing
  CovarianceFactor randomization;  // factor of 0.5 sigma^2 gram

  /// Lambda range from the observed (gram, xty), 50 geometric values on it.
  static StabilityContext from_observed(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                                        double sigma2, int grid_size = 50) {
    detail::require(sigma2 > 0.0, "StabilityContext: sigma2 must be positive");
    const GramProblem observed(gram, xty);
    const LambdaRange range = lambda_range(observed);
    StabilityContext ctx;
    ctx.gram = gram;
    ctx.half_gram = 0.5 * gram;
    ctx.sigma2 = sigma2;
    ctx.lambda_grid = geometric_grid(range.lambda_max, range.lambda_min, grid_size);
    ctx.randomization = CovarianceFactor::from_covariance(0.5 * sigma2 * gram);
    return ctx;
  }

  int dim() const { return static_cast<int>(gram.rows()); }
};

/// Stability selection with subsampling replaced by its Gaussian equivalent:
/// run i solves the Lasso path on (data / 2 + omega_i, gram / 2) with
/// omega_i ~ N(0, 0.5 sigma^2 gram); j is kept when some lambda has
/// selection frequency >= q.
inline SelectionOutcome stability_select(const Eigen::VectorXd& data, const StabilityParams& params,
                                         const StabilityContext& ctx, const SeededStream& stream) {
  params.validate();
  if (data.size() != ctx.dim()) throw DomainError("stability_select: dimension mismatch");
  const int p = ctx.dim();
  const auto n_lambda = ctx.lambda_grid.size();
  std::vector<int> counts(n_lambda * static_cast<std::size_t>(p), 0);

  SelectionOutcome out;
  auto engine = stream.engine();
  const Eigen::VectorXd half_data = 0.5 * data;
  Eigen::VectorXd beta(p);
  for (int i = 0; i < params.m; ++i) {
    const Eigen::VectorXd xty = mvn_sample(half_data, ctx.randomization, engine);
    beta.setZero();
    for (std::size_t l = 0; l < n_lambda; ++l) {
      detail::lasso_cd_inplace(ctx.half_gram, xty, ctx.lambda_grid[l], beta);
      for (int j = 0; j < p; ++j)
        if (beta[j] != 0.0) ++counts[l * static_cast<std::size_t>(p) + static_cast<std::size_t>(j)];
    }
    out.per_run_sets.push_back(support_of(beta));
  }

  const long needed = min_successes(params.q * params.m);
  for (int j = 0; j < p; ++j) {
    for (std::size_t l = 0; l < n_lambda; ++l) {
      if (counts[l * static_cast<std::size_t>(p) + static_cast<std::size_t>(j)] >= needed) {
        out.selected.push_back(j);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multiple cross-validation

struct MultiCvParams {
  int m = 3;
  double q = 2.0 / 3.0;
  int folds = 5;

  void validate() const {
    detail::require(m >= 1, "multi-CV selector: m must be >= 1");
    detail::require(q > 0.0 && q <= 1.0, "multi-CV selector: q must lie in (0, 1]");
    detail::require(folds >= 2, "multi-CV selector: need at least 2 folds");
  }
};

/// Observed regression data plus the map that turns a perturbed X'y back into
/// a response: y' = y + X (X'X)^{-1} (D' - X'y).
struct MultiCvContext {
  Eigen::MatrixXd X;
  Eigen::VectorXd y_obs;
  Eigen::VectorXd xty_obs;
  Eigen::MatrixXd lift;  // X (X'X)^{-1}

  static MultiCvContext from_observed(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw DomainError("MultiCvContext: X and y differ in rows");
    const Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
      throw DomainError("MultiCvContext: X'X is singular");
    MultiCvContext ctx;
    ctx.X = X;
    ctx.y_obs = y;
    ctx.xty_obs = X.transpose() * y;
    ctx.lift = ldlt.solve(X.transpose()).transpose();
    return ctx;
  }

  Eigen::VectorXd response_for(const Eigen::VectorXd& data) const {
    return y_obs + lift * (data - xty_obs);
  }

  int dim() const { return static_cast<int>(X.cols()); }
};

/// One CV run: the penalty is cross-validated on a 50% with-replacement
/// subsample, then the Lasso is fit on the full data passed in at that
/// penalty, rescaled by n / (n/2) to the full-sample Gram.
///
/// The penalty grid (100 geometric values on [lambda_max / 100, lambda_max],
/// lambda_max = max |X'y| on the full data passed in) is shared by every run
/// on the same data. Returns the support of the full-data fit.
inline std::vector<int> multi_cv_single_run(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            int folds, const SeededStream& stream) {
  if (X.rows() != y.size()) throw DomainError("multi_cv_single_run: X and y differ in rows");
  const double lambda_max = (X.transpose() * y).cwiseAbs().maxCoeff();
  if (!(lambda_max > 0.0)) return {};
  const auto grid = default_lambda_grid(lambda_max);

  const Eigen::Index n = X.rows();
  const Eigen::Index half = n / 2;
  auto engine = stream.child(0).engine();
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::MatrixXd X_sub(half, X.cols());
  Eigen::VectorXd y_sub(half);
  for (Eigen::Index i = 0; i < half; ++i) {
    const Eigen::Index row = pick(engine);
    X_sub.row(i) = X.row(row);
    y_sub[i] = y[row];
  }

  const double chosen = cv_lambda(X_sub, y_sub, folds, grid, stream.child(1));
  const double scale = static_cast<double>(n) / static_cast<double>(half);
  std::vector<double> prefix;
  for (double l : grid) {
    prefix.push_back(scale * l);
    if (l == chosen) break;
  }
  const Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * y;
  const LassoPath path = detail::lasso_path_unchecked(gram, xty, prefix);
  return path.supports.back();
}

/// Keeps variables appearing in at least q*m of m independent single runs.
inline SelectionOutcome multi_cv_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const MultiCvParams& params, const SeededStream& stream) {
  params.validate();
  SelectionOutcome out;
  std::vector<int> counts(static_cast<std::size_t>(X.cols()), 0);
  for (int i = 0; i < params.m; ++i) {
    auto run = multi_cv_single_run(X, y, params.folds, stream.child(static_cast<std::uint64_t>(i)));
    for (int j : run) ++counts[static_cast<std::size_t>(j)];
    out.per_run_sets.push_back(std::move(run));
  }
  const long needed = min_successes(params.q * params.m);
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] >= needed) out.selected.push_back(static_cast<int>(j));
  return out;
}

// ---------------------------------------------------------------------------
// Black-box dispatch

/// A selection procedure with its parameters and frozen problem context.
class SelectorSpec {
 public:
  static SelectorSpec simple_threshold(const SimpleThresholdParams& params) {
    params.validate();
    return SelectorSpec(SelectorKind::simple_threshold, params);
  }
  static SelectorSpec stability(const StabilityParams& params, StabilityContext ctx) {
    params.validate();
    return SelectorSpec(SelectorKind::stability, StabilitySetup{params, std::move(ctx)});
  }
  static SelectorSpec multi_cv(const MultiCvParams& params, MultiCvContext ctx) {
    params.validate();
    return SelectorSpec(SelectorKind::multi_cv, MultiCvSetup{params, std::move(ctx)});
  }

  SelectorKind kind() const { return kind_; }

  int dim() const {
    switch (kind_) {
      case SelectorKind::simple_threshold: return 1;
      case SelectorKind::stability: return std::get<StabilitySetup>(setup_).ctx.dim();
      case SelectorKind::multi_cv: return std::get<MultiCvSetup>(setup_).ctx.dim();
    }
    return 0;
  }

  /// Number m of aggregated runs and threshold fraction q.
  int trials() const {
    return std::visit([](const auto& s) { return params_of(s).m; }, setup_);
  }
  double threshold_fraction() const {
    return std::visit([](const auto& s) { return params_of(s).q; }, setup_);
  }

  const SimpleThresholdParams& simple_params() const {
    return std::get<SimpleThresholdParams>(setup_);
  }
  const StabilityParams& stability_params() const { return std::get<StabilitySetup>(setup_).params; }
  const StabilityContext& stability_context() const { return std::get<StabilitySetup>(setup_).ctx; }
  const MultiCvParams& multi_cv_params() const { return std::get<MultiCvSetup>(setup_).params; }
  const MultiCvContext& multi_cv_context() const { return std::get<MultiCvSetup>(setup_).ctx; }

 private:
  struct StabilitySetup {
    StabilityParams params;
    StabilityContext ctx;
  };
  struct MultiCvSetup {
    MultiCvParams params;
    MultiCvContext ctx;
  };
  using Setup = std::variant<SimpleThresholdParams, StabilitySetup, MultiCvSetup>;

  static const SimpleThresholdParams& params_of(const SimpleThresholdParams& s) { return s; }
  static const StabilityParams& params_of(const StabilitySetup& s) { return s.params; }
  static const MultiCvParams& params_of(const MultiCvSetup& s) { return s.params; }

  SelectorSpec(SelectorKind kind, Setup setup) : kind_(kind), setup_(std::move(setup)) {}

  SelectorKind kind_;
  Setup setup_;
};

namespace detail {

inline void require_dim(const SelectorSpec& spec, const Eigen::VectorXd& data) {
  if (data.size() != spec.dim())
    throw DomainError("select: data vector has dimension " + std::to_string(data.size()) +
                      ", selector expects " + std::to_string(spec.dim()));
  if (!data.allFinite()) throw DomainError("select: data vector must be finite");
}

inline SelectionOutcome passed_outcome(bool passed) {
  SelectionOutcome out;
  if (passed) out.selected.push_back(0);
  return out;
}

}  // namespace detail

/// Runs the black box on a (possibly perturbed) data vector. Pure in
/// (spec, data, stream).
inline SelectionOutcome select(const SelectorSpec& spec, const Eigen::VectorXd& data,
                               const SeededStream& stream) {
  detail::require_dim(spec, data);
  switch (spec.kind()) {
    case SelectorKind::simple_threshold:
      return detail::passed_outcome(simple_threshold_select(data[0], spec.simple_params(), stream));
    case SelectorKind::stability:
      return stability_select(data, spec.stability_params(), spec.stability_context(), stream);
    case SelectorKind::multi_cv: {
      const auto& ctx = spec.multi_cv_context();
      return multi_cv_select(ctx.X, ctx.response_for(data), spec.multi_cv_params(), stream);
    }
  }
  throw DomainError("select: unknown selector kind");
}

/// Runs one Bernoulli component of an aggregated selector, i.e. a single
/// randomized check (threshold rule) or a single CV run (multi-CV).
/// Stability selection aggregates through an existence over penalties and
/// has no binomial component.
inline SelectionOutcome select_component(const SelectorSpec& spec, const Eigen::VectorXd& data,
                                         const SeededStream& stream) {
  detail::require_dim(spec, data);
  switch (spec.kind()) {
    case SelectorKind::simple_threshold:
      return detail::passed_outcome(
          simple_threshold_component(data[0], spec.simple_params(), stream));
    case SelectorKind::multi_cv: {
      const auto& ctx = spec.multi_cv_context();
      SelectionOutcome out;
      out.selected = multi_cv_single_run(ctx.X, ctx.response_for(data),
                                         spec.multi_cv_params().folds, stream);
      return out;
    }
    case SelectorKind::stability:
      break;
  }
  throw DomainError("select_component: stability selection has no binomial component");
}

}  // namespace bbsi
