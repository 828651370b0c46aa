#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"
#include "bbsi/glm.hpp"
#include "bbsi/parallel.hpp"
#include "bbsi/selectors.hpp"
#include "bbsi/stats.hpp"
#include "bbsi/stream.hpp"

namespace bbsi {

// ---------------------------------------------------------------------------
// Target decomposition  D = N + d * T

enum class TargetKind { full, partial, general };

/// Splits a data vector into a nuisance part independent of a scalar test
/// statistic and a direction along which the statistic enters.
struct TargetDecomposition {
  Eigen::VectorXd n_obs;
  Eigen::VectorXd direction;
  double target_var = 1.0;
  double stat_obs = 0.0;
  TargetKind kind = TargetKind::full;

  double target_sd() const { return std::sqrt(target_var); }

  /// Data vector with the statistic moved to x and the nuisance held fixed.
  Eigen::VectorXd data_at(double x) const { return n_obs + direction * x; }
};

namespace detail {

inline Eigen::LDLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DomainError(std::string(what) + ": not square");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const auto& d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(d.minCoeff() > 0.0) ||
      d.minCoeff() <= 1e-13 * d.maxCoeff())
    throw DomainError(std::string(what) + ": matrix is singular");
  return ldlt;
}

}  // namespace detail

/// Target beta_j of the full model: statistic (G^{-1} D)_j with variance
/// sigma^2 (G^{-1})_jj and direction e_j sigma^2 / var.
inline TargetDecomposition decompose_full(const Eigen::VectorXd& data, int j,
                                          const Eigen::MatrixXd& gram, double sigma2) {
  if (data.size() != gram.rows()) throw DomainError("decompose_full: dimension mismatch");
  if (j < 0 || j >= data.size()) throw DomainError("decompose_full: index out of range");
  if (!(sigma2 > 0.0)) throw DomainError("decompose_full: sigma2 must be positive");
  const auto ldlt = detail::spd_factor(gram, "decompose_full");
  const Eigen::VectorXd ej = Eigen::VectorXd::Unit(data.size(), j);
  const Eigen::VectorXd gram_inv_ej = ldlt.solve(ej);

  TargetDecomposition out;
  out.kind = TargetKind::full;
  out.stat_obs = gram_inv_ej.dot(data);
  out.target_var = sigma2 * gram_inv_ej[j];
  out.direction = ej * (sigma2 / out.target_var);
  out.n_obs = data - out.direction * out.stat_obs;
  return out;
}

/// Partial target: coordinate `pos` of the projection parameter of the
/// submodel `active`. Everything is computed from G = X'X, since
/// X_E'X_E = G_EE and X'(X_E^+)' e = G_{:,E} G_EE^{-1} e.
inline TargetDecomposition decompose_partial(const Eigen::VectorXd& data,
                                             const std::vector<int>& active, int pos,
                                             const Eigen::MatrixXd& gram, double sigma2) {
  const auto p = data.size();
  if (gram.rows() != p || gram.cols() != p) throw DomainError("decompose_partial: dimension mismatch");
  if (active.empty()) throw DomainError("decompose_partial: empty active set");
  if (pos < 0 || pos >= static_cast<int>(active.size()))
    throw DomainError("decompose_partial: position out of range");
  if (!(sigma2 > 0.0)) throw DomainError("decompose_partial: sigma2 must be positive");
  const auto k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd g_ee(k, k), g_all_e(p, k);
  Eigen::VectorXd d_e(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const int ja = active[static_cast<std::size_t>(a)];
    if (ja < 0 || ja >= p) throw DomainError("decompose_partial: index out of range");
    d_e[a] = data[ja];
    g_all_e.col(a) = gram.col(ja);
    for (Eigen::Index b = 0; b < k; ++b) g_ee(a, b) = gram(ja, active[static_cast<std::size_t>(b)]);
  }
  const auto ldlt = detail::spd_factor(g_ee, "decompose_partial (X_E not full rank)");
  const Eigen::VectorXd row = ldlt.solve(Eigen::VectorXd::Unit(k, pos));  // G_EE^{-1} e

  TargetDecomposition out;
  out.kind = TargetKind::partial;
  out.stat_obs = row.dot(d_e);
  out.target_var = sigma2 * row[pos];
  out.direction = (sigma2 / out.target_var) * (g_all_e * row);
  out.n_obs = data - out.direction * out.stat_obs;
  return out;
}

/// Decomposition for a vector statistic T jointly normal with D:
/// D = N + Sigma_DT Sigma_T^{-1} T.
struct GeneralDecomposition {
  Eigen::VectorXd n_obs;
  Eigen::MatrixXd direction;
  Eigen::VectorXd stat_obs;
  Eigen::MatrixXd cov_target;

  /// Scalar view; valid when T is one-dimensional.
  TargetDecomposition scalar() const {
    if (stat_obs.size() != 1) throw DomainError("GeneralDecomposition: statistic is not scalar");
    TargetDecomposition out;
    out.kind = TargetKind::general;
    out.n_obs = n_obs;
    out.direction = direction.col(0);
    out.stat_obs = stat_obs[0];
    out.target_var = cov_target(0, 0);
    return out;
  }
};

inline GeneralDecomposition decompose_general(const Eigen::VectorXd& data,
                                              const Eigen::VectorXd& stat_obs,
                                              const Eigen::MatrixXd& cov_dt,
                                              const Eigen::MatrixXd& cov_t) {
  if (cov_dt.rows() != data.size() || cov_dt.cols() != stat_obs.size() ||
      cov_t.rows() != stat_obs.size())
    throw DomainError("decompose_general: dimension mismatch");
  const auto ldlt = detail::spd_factor(cov_t, "decompose_general (cov_T)");
  GeneralDecomposition out;
  out.direction = ldlt.solve(cov_dt.transpose()).transpose();
  out.stat_obs = stat_obs;
  out.cov_target = cov_t;
  out.n_obs = data - out.direction * stat_obs;
  return out;
}

// ---------------------------------------------------------------------------
// Learning data

/// Perturbation points: Z_b ~ N(stat, (c_b sd)^2) with c_b uniform on
/// {0.5, 1, 1.5, 2}.
inline std::vector<double> sample_covariates(double stat_obs, double target_sd, int count,
                                             const SeededStream& stream) {
  if (!(target_sd > 0.0) || !std::isfinite(target_sd))
    throw DomainError("sample_covariates: sd must be positive");
  if (count < 1) throw DomainError("sample_covariates: need at least one point");
  static constexpr std::array<double, 4> kScales{0.5, 1.0, 1.5, 2.0};
  auto engine = stream.engine();
  std::uniform_int_distribution<int> which(0, 3);
  std::normal_distribution<double> normal;
  std::vector<double> zs(static_cast<std::size_t>(count));
  for (auto& z : zs) {
    const double scale = kScales[static_cast<std::size_t>(which(engine))];
    z = stat_obs + scale * target_sd * normal(engine);
  }
  return zs;
}

enum class LabelMode { direct, binomial_component };

inline std::string_view to_string(LabelMode mode) {
  return mode == LabelMode::direct ? "direct" : "binomial-component";
}

inline LabelMode label_mode_from_string(std::string_view name) {
  if (name == "direct") return LabelMode::direct;
  if (name == "binomial-component" || name == "binomial") return LabelMode::binomial_component;
  throw DomainError("unknown label mode '" + std::string(name) + "'");
}

/// What a rerun must reproduce to count as a success.
struct LabelTarget {
  enum class Kind { contains, equals };
  Kind kind = Kind::contains;
  int index = 0;
  std::vector<int> set;

  static LabelTarget contains(int j) { return {Kind::contains, j, {}}; }
  static LabelTarget equals(std::vector<int> s) {
    std::sort(s.begin(), s.end());
    return {Kind::equals, 0, std::move(s)};
  }

  bool matches(const SelectionOutcome& outcome) const {
    return kind == Kind::contains ? outcome.contains(index) : outcome.selected == set;
  }
};

struct LearningSample {
  std::vector<double> zs;
  std::vector<int> ws;
  LabelMode mode = LabelMode::direct;
  int m_agg = 1;
  double q_threshold = 0.5;
  int dropped = 0;
};

/// Labels W_b from rerunning the selector at N + d Z_b on substream b.
///
/// Points whose rerun raises a library error are dropped; more than 1% of
/// drops is a hard error.
inline LearningSample generate_labels(const SelectorSpec& spec, const TargetDecomposition& decomp,
                                      std::span<const double> zs, const LabelTarget& target,
                                      LabelMode mode, const SeededStream& stream,
                                      unsigned threads = 1) {
  if (decomp.n_obs.size() != spec.dim() || decomp.direction.size() != spec.dim())
    throw DomainError("generate_labels: decomposition dimension does not match the selector");
  constexpr int kFailed = -1;
  std::vector<int> raw(zs.size(), 0);
  std::vector<std::string> failures(zs.size());

  parallel_for(zs.size(), threads, [&](std::size_t b) {
    try {
      const Eigen::VectorXd data = decomp.data_at(zs[b]);
      const SeededStream sub = stream.child(b);
      const SelectionOutcome outcome =
          mode == LabelMode::direct ? select(spec, data, sub) : select_component(spec, data, sub);
      raw[b] = target.matches(outcome) ? 1 : 0;
    } catch (const Error& e) {
      raw[b] = kFailed;
      failures[b] = e.what();
    }
  });

  LearningSample sample;
  sample.mode = mode;
  sample.m_agg = mode == LabelMode::direct ? 1 : spec.trials();
  sample.q_threshold = spec.threshold_fraction();
  std::string first_failure;
  for (std::size_t b = 0; b < zs.size(); ++b) {
    if (raw[b] == kFailed) {
      if (first_failure.empty()) first_failure = failures[b];
      ++sample.dropped;
      continue;
    }
    sample.zs.push_back(zs[b]);
    sample.ws.push_back(raw[b]);
  }
  if (static_cast<double>(sample.dropped) > 0.01 * static_cast<double>(zs.size()))
    throw Error("generate_labels: " + std::to_string(sample.dropped) + " of " +
                std::to_string(zs.size()) + " reruns failed (first: " + first_failure + ")");
  return sample;
}

// ---------------------------------------------------------------------------
// Learned selection probability

/// Estimate s(x) of the selection probability given data.
///
/// In direct mode s(x) is the GLM prediction; in binomial-component mode the
/// GLM models one component's success probability p(x) and
/// s(x) = P{Binomial(m, p(x)) >= q m}. When labels are constant the model is
/// replaced by a constant clamped to [1e-6, 1 - 1e-6].
class LearnedSelectionProb {
 public:
  static LearnedSelectionProb fitted(BinaryGlmModel model, LabelMode mode, int m_agg, double q) {
    LearnedSelectionProb s(mode, m_agg, q);
    s.model_ = std::move(model);
    return s;
  }

  static LearnedSelectionProb constant(double value, Link link, LabelMode mode, int m_agg,
                                       double q) {
    LearnedSelectionProb s(mode, m_agg, q);
    s.constant_ = std::clamp(value, 1e-6, 1.0 - 1e-6);
    s.link_ = link;
    return s;
  }

  /// Learned per-label success probability (p(x) in binomial mode).
  double component(double x) const {
    return model_ ? predict_prob(*model_, x) : constant_;
  }

  double operator()(double x) const {
    const double p = component(x);
    if (mode_ == LabelMode::direct) return p;
    return binom_sf(m_agg_, p, q_threshold_ * m_agg_);
  }

  bool is_fallback() const { return !model_.has_value(); }
  const std::optional<BinaryGlmModel>& model() const { return model_; }
  double fallback_constant() const { return constant_; }
  Link link() const { return model_ ? model_->link : link_; }
  LabelMode mode() const { return mode_; }
  int m_agg() const { return m_agg_; }
  double q_threshold() const { return q_threshold_; }

 private:
  LearnedSelectionProb(LabelMode mode, int m_agg, double q)
      : mode_(mode), m_agg_(m_agg), q_threshold_(q) {
    if (mode == LabelMode::binomial_component) {
      detail::require(m_agg >= 1, "LearnedSelectionProb: m_agg must be >= 1");
      detail::require(q > 0.0 && q <= 1.0, "LearnedSelectionProb: q must lie in (0, 1]");
    }
  }

  std::optional<BinaryGlmModel> model_;
  double constant_ = 1.0;
  Link link_ = Link::probit;
  LabelMode mode_;
  int m_agg_;
  double q_threshold_;
};

inline LearnedSelectionProb estimate_selection_prob(const LearningSample& sample, Link link,
                                                    int df = 10) {
  if (sample.zs.size() != sample.ws.size())
    throw DomainError("estimate_selection_prob: zs and ws differ in length");
  if (sample.zs.empty()) throw DegenerateInputError("estimate_selection_prob: empty sample");
  try {
    auto model = fit_binary_glm(sample.zs, sample.ws, link, df);
    return LearnedSelectionProb::fitted(std::move(model), sample.mode, sample.m_agg,
                                        sample.q_threshold);
  } catch (const DegenerateLabelsError&) {
    double mean = 0.0;
    for (int w : sample.ws) mean += w;
    mean /= static_cast<double>(sample.ws.size());
    return LearnedSelectionProb::constant(mean, link, sample.mode, sample.m_agg,
                                          sample.q_threshold);
  }
}

// ---------------------------------------------------------------------------
// Conditional density on a grid

/// Discrete exponential-family approximation of the density proportional to
/// phi(x; mu, var) s(x).
///
/// The range [center - 12 sd, center + 12 sd] is cut into G equal cells with
/// centers `grid`. Each cell carries the mass of exp(-(t - center)^2 / 2 var)
/// s(t) over the cell (log_weights) located at the mass centroid (support).
/// For a mean mu the cell probabilities are
///   exp(eta (support_g - center) + log w_g - Lambda(mu)),  eta = (mu - center) / var.
struct ConditionalDensityGrid {
  std::vector<double> grid;
  std::vector<double> support;
  std::vector<double> log_weights;
  double center = 0.0;
  double target_var = 1.0;
  double spacing = 0.0;

  double sd() const { return std::sqrt(target_var); }
  double lower_edge() const { return grid.front() - 0.5 * spacing; }
  double upper_edge() const { return grid.back() + 0.5 * spacing; }

  double natural_parameter(double mu) const { return (mu - center) / target_var; }

  double log_partition(double mu) const {
    const double eta = natural_parameter(mu);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (std::isfinite(log_weights[g])) top = std::max(top, log_weights[g] + eta * (support[g] - center));
    double sum = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (std::isfinite(log_weights[g]))
        sum += std::exp(log_weights[g] + eta * (support[g] - center) - top);
    return top + std::log(sum);
  }

  /// Normalized cell probabilities at mean mu.
  std::vector<double> masses(double mu) const {
    const double eta = natural_parameter(mu);
    const double lambda = log_partition(mu);
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (std::isfinite(log_weights[g]))
        out[g] = std::exp(log_weights[g] + eta * (support[g] - center) - lambda);
    return out;
  }

  /// Conditional CDF F_mu(x); the mass of the cell containing x is split
  /// linearly across that cell.
  double cdf(double mu, double x) const {
    if (!(x >= lower_edge() && x <= upper_edge()))
      throw RangeError("ConditionalDensityGrid: x lies outside the grid");
    const double eta = natural_parameter(mu);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g)
      top = std::max(top, log_weights[g] + eta * (support[g] - center));
    const double pos = (x - lower_edge()) / spacing;
    const auto full = std::min(static_cast<std::size_t>(pos), grid.size());
    double below = 0.0, total = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double w = std::exp(log_weights[g] + eta * (support[g] - center) - top);
      if (g < full) below += w;
      else if (g == full) below += w * (pos - static_cast<double>(full));
      total += w;
    }
    return std::clamp(below / total, 0.0, 1.0);
  }
};

namespace detail {

struct CellIntegral {
  double mass = 0.0;
  double moment = 0.0;  // integral of (t - ref) f(t)
};

/// Adaptive Simpson for the mass and first moment of f over [a, b].
template <class F>
CellIntegral adaptive_cell(const F& f, double a, double b, double fa, double fm, double fb,
                           double ref, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double h = b - a;
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  auto simpson = [](double w, double x0, double x1, double x2, double f0, double f1, double f2,
                    double r) {
    return CellIntegral{w / 6.0 * (f0 + 4.0 * f1 + f2),
                        w / 6.0 * ((x0 - r) * f0 + 4.0 * (x1 - r) * f1 + (x2 - r) * f2)};
  };
  const auto whole = simpson(h, a, m, b, fa, fm, fb, ref);
  const auto left = simpson(0.5 * h, a, lm, m, fa, flm, fm, ref);
  const auto right = simpson(0.5 * h, m, rm, b, fm, frm, fb, ref);
  const double err = std::abs(left.mass + right.mass - whole.mass);
  if (depth <= 0 || err <= 15.0 * tol)
    return {left.mass + right.mass, left.moment + right.moment};
  const auto l = adaptive_cell(f, a, m, fa, flm, fm, ref, 0.5 * tol, depth - 1);
  const auto r = adaptive_cell(f, m, b, fm, frm, fb, ref, 0.5 * tol, depth - 1);
  return {l.mass + r.mass, l.moment + r.moment};
}

inline bool smooth_enough(double s0, double s1, double s2) {
  const double lo = std::min({s0, s1, s2});
  const double hi = std::max({s0, s1, s2});
  if (hi == 0.0) return true;
  return lo > 0.0 && hi / lo <= 1.6;
}

}  // namespace detail

inline constexpr int kDefaultGridSize = 2401;
inline constexpr double kGridHalfWidthSd = 12.0;

/// Builds the grid for selection probability `s` around `stat_obs`.
inline ConditionalDensityGrid build_density_grid(const std::function<double(double)>& s,
                                                 double stat_obs, double target_var,
                                                 int grid_size = kDefaultGridSize,
                                                 double half_width_sd = kGridHalfWidthSd) {
  if (!(target_var > 0.0) || !std::isfinite(target_var))
    throw DomainError("build_density_grid: target variance must be positive");
  if (!std::isfinite(stat_obs)) throw DomainError("build_density_grid: statistic must be finite");
  if (grid_size < 2) throw DomainError("build_density_grid: need at least 2 grid points");

  ConditionalDensityGrid out;
  out.center = stat_obs;
  out.target_var = target_var;
  const double sd = std::sqrt(target_var);
  const double lo = stat_obs - half_width_sd * sd;
  out.spacing = 2.0 * half_width_sd * sd / (grid_size - 1);
  const double h = out.spacing;
  const auto G = static_cast<std::size_t>(grid_size);

  auto s_checked = [&](double t) {
    const double v = s(t);
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DomainError("build_density_grid: selection probability must be finite and >= 0");
    return v;
  };
  auto kernel = [&](double t) {
    const double u = t - stat_obs;
    return std::exp(-0.5 * u * u / target_var);
  };

  // s at cell edges and centers: point k sits at lo - h/2 + k h/2.
  std::vector<double> s_val(2 * G + 1);
  const double first_edge = lo - 0.5 * h;
  for (std::size_t k = 0; k < s_val.size(); ++k) s_val[k] = s_checked(first_edge + 0.5 * h * static_cast<double>(k));

  out.grid.resize(G);
  out.support.resize(G);
  out.log_weights.resize(G);
  std::vector<detail::CellIntegral> cells(G);
  std::vector<char> rough(G, 0);
  double largest = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    const double x = lo + h * static_cast<double>(g);
    out.grid[g] = x;
    const double s0 = s_val[2 * g], s1 = s_val[2 * g + 1], s2 = s_val[2 * g + 2];
    const double f0 = kernel(x - 0.5 * h) * s0, f1 = kernel(x) * s1, f2 = kernel(x + 0.5 * h) * s2;
    cells[g].mass = h / 6.0 * (f0 + 4.0 * f1 + f2);
    cells[g].moment = h * h / 12.0 * (f2 - f0);
    rough[g] = !detail::smooth_enough(s0, s1, s2);
    largest = std::max(largest, kernel(x) * std::max({s0, s1, s2}) * h);
  }

  // Cells where s jumps or varies fast get adaptive quadrature, to an
  // accuracy relative to the largest cell mass.
  auto f = [&](double t) { return kernel(t) * s_checked(t); };
  for (std::size_t g = 0; g < G; ++g) {
    if (!rough[g]) continue;
    const double x = out.grid[g];
    const double a = x - 0.5 * h, b = x + 0.5 * h;
    cells[g] = detail::adaptive_cell(f, a, b, kernel(a) * s_val[2 * g], kernel(x) * s_val[2 * g + 1],
                                     kernel(b) * s_val[2 * g + 2], x, 1e-9 * largest, 24);
  }

  bool any_mass = false;
  for (std::size_t g = 0; g < G; ++g) {
    const double x = out.grid[g];
    const double a = x - 0.5 * h, b = x + 0.5 * h;
    const auto& cell = cells[g];
    if (cell.mass > 0.0 && std::isfinite(cell.mass)) {
      out.log_weights[g] = std::log(cell.mass);
      out.support[g] = std::clamp(x + cell.moment / cell.mass, a, b);
      any_mass = true;
    } else {
      out.log_weights[g] = -std::numeric_limits<double>::infinity();
      out.support[g] = x;
    }
  }
  if (!any_mass)
    throw DegenerateInputError("build_density_grid: selection probability vanishes on the grid");
  return out;
}

// ---------------------------------------------------------------------------
// Tests and intervals

enum class Alternative { two_sided, greater, less };

inline std::string_view to_string(Alternative a) {
  switch (a) {
    case Alternative::two_sided: return "two-sided";
    case Alternative::greater: return "greater";
    case Alternative::less: return "less";
  }
  return "?";
}

/// Pivot U = F_{mu0}(x_obs) turned into a p-value for H0: mu = mu0.
inline double selective_pvalue(const ConditionalDensityGrid& grid, double mu0, double x_obs,
                               Alternative alternative = Alternative::two_sided) {
  const double u = grid.cdf(mu0, x_obs);
  switch (alternative) {
    case Alternative::two_sided: return std::min(1.0, 2.0 * std::min(u, 1.0 - u));
    case Alternative::greater: return 1.0 - u;
    case Alternative::less: return u;
  }
  return u;
}

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_clamped = false;
  bool hi_clamped = false;

  double length() const { return hi - lo; }
  bool covers(double value) const { return lo <= value && value <= hi; }
};

namespace detail {

/// mu with F_mu(x_obs) = level, by bisection on a range that is widened once.
inline double invert_pivot(const ConditionalDensityGrid& grid, double x_obs, double level,
                           bool& clamped) {
  const double sd = grid.sd();
  auto pivot = [&](double mu) { return grid.cdf(mu, x_obs); };
  for (double half_range : {8.0, 16.0}) {
    double a = x_obs - half_range * sd, b = x_obs + half_range * sd;
    double fa = pivot(a), fb = pivot(b);
    if (fa < fb) throw ConvergenceError("selective_ci: pivot is not decreasing in mu");
    if (fa < level) {
      if (half_range < 16.0) continue;
      clamped = true;
      return a;
    }
    if (fb > level) {
      if (half_range < 16.0) continue;
      clamped = true;
      return b;
    }
    while (b - a > 1e-6 * sd) {
      const double mid = 0.5 * (a + b);
      const double fm = pivot(mid);
      if (fm > fa + 1e-12 || fm < fb - 1e-12)
        throw ConvergenceError("selective_ci: pivot is not monotone in mu");
      if (fm >= level) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
        fb = fm;
      }
    }
    return 0.5 * (a + b);
  }
  clamped = true;
  return x_obs;
}

}  // namespace detail

/// Equal-tailed interval {mu : alpha/2 <= F_mu(x_obs) <= 1 - alpha/2}.
/// Endpoints that cannot be bracketed within x_obs +- 16 sd are clamped and
/// flagged.
inline ConfidenceInterval selective_ci(const ConditionalDensityGrid& grid, double x_obs,
                                       double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("selective_ci: alpha must lie in (0, 1)");
  ConfidenceInterval ci;
  ci.lo = detail::invert_pivot(grid, x_obs, 1.0 - 0.5 * alpha, ci.lo_clamped);
  ci.hi = detail::invert_pivot(grid, x_obs, 0.5 * alpha, ci.hi_clamped);
  return ci;
}

struct NaiveResult {
  double pvalue;
  double pivot;  // Phi((x - mu0) / sd)
  ConfidenceInterval ci;
};

/// Classical z-test and z-interval that ignore selection.
inline NaiveResult naive_inference(double x_obs, double target_var, double mu0, double alpha) {
  if (!(target_var > 0.0)) throw DomainError("naive_inference: variance must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("naive_inference: alpha must lie in (0, 1)");
  const double sd = std::sqrt(target_var);
  const double z = (x_obs - mu0) / sd;
  const double half = norm_quantile(1.0 - 0.5 * alpha) * sd;
  return {std::min(1.0, 2.0 * norm_sf(std::abs(z))), norm_cdf(z),
          ConfidenceInterval{x_obs - half, x_obs + half}};
}

}  // namespace bbsi
