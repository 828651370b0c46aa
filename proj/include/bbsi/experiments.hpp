#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bbsi/config.hpp"
#include "bbsi/errors.hpp"
#include "bbsi/inference.hpp"
#include "bbsi/parallel.hpp"
#include "bbsi/selectors.hpp"
#include "bbsi/stats.hpp"
#include "bbsi/stream.hpp"

namespace bbsi {

// ---------------------------------------------------------------------------
// Synthetic regression data

struct SyntheticData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd beta;
};

/// Rows of X are i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j|; beta has
/// `sparsity` entries equal to +-amplitude at random positions;
/// y = X beta + N(0, sigma^2 I).
inline SyntheticData generate_synthetic(int n, int p, double rho, int sparsity, double amplitude,
                                        double sigma, const SeededStream& stream) {
  detail::require(n >= 1 && p >= 1, "generate_synthetic: n and p must be positive");
  detail::require(rho >= 0.0 && rho < 1.0, "generate_synthetic: rho must lie in [0, 1)");
  detail::require(sparsity >= 0 && sparsity <= p, "generate_synthetic: need 0 <= sparsity <= p");
  detail::require(sigma >= 0.0 && std::isfinite(sigma), "generate_synthetic: sigma must be >= 0");

  SyntheticData out;
  std::normal_distribution<double> normal;
  out.X.resize(n, p);
  {
    auto engine = stream.child(0).engine();
    const double innovation = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
      double prev = normal(engine);
      out.X(i, 0) = prev;
      for (int j = 1; j < p; ++j) {
        prev = rho * prev + innovation * normal(engine);
        out.X(i, j) = prev;
      }
    }
  }

  out.beta = Eigen::VectorXd::Zero(p);
  {
    auto engine = stream.child(1).engine();
    std::vector<int> positions(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) positions[static_cast<std::size_t>(j)] = j;
    std::shuffle(positions.begin(), positions.end(), engine);
    std::bernoulli_distribution sign(0.5);
    for (int k = 0; k < sparsity; ++k)
      out.beta[positions[static_cast<std::size_t>(k)]] = sign(engine) ? amplitude : -amplitude;
  }

  out.y = out.X * out.beta;
  auto engine = stream.child(2).engine();
  for (int i = 0; i < n; ++i) out.y[i] += sigma * normal(engine);
  return out;
}

// ---------------------------------------------------------------------------
// Results

struct PivotRecord {
  int sim_id = 0;
  int target_j = 0;
  std::string method;
  double pivot = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool covered = false;
  bool clamped = false;
};

struct CurvePoint {
  double x;
  std::string method;
  double s_value;
};

struct MethodSummary {
  std::string method;
  double alpha = 0.0;
  double coverage_pct = 0.0;
  double mean_ci_len = 0.0;
  int n = 0;
  double ks = 0.0;
  int clamped = 0;
};

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
inline double ks_uniform(std::vector<double> u) {
  if (u.empty()) return 0.0;
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - ui, ui - static_cast<double>(i) / n});
  }
  return d;
}

struct ResultTable {
  ExperimentKind experiment = ExperimentKind::simple;
  double alpha = 0.05;
  std::vector<std::string> methods;  // reporting order
  std::vector<PivotRecord> pivots;
  std::vector<CurvePoint> curves;
  long attempted = 0;       // datasets drawn (rejection sampling) or replications run
  int replications = 0;     // datasets or replications that produced targets
  int skipped = 0;          // replications with an empty selection
  int failed_targets = 0;   // targets dropped after a numerical failure

  std::vector<MethodSummary> summarize() const {
    std::vector<MethodSummary> out;
    for (const auto& method : methods) {
      MethodSummary s;
      s.method = method;
      s.alpha = alpha;
      std::vector<double> u;
      double covered = 0.0, length = 0.0;
      for (const auto& r : pivots) {
        if (r.method != method) continue;
        u.push_back(r.pivot);
        covered += r.covered ? 1.0 : 0.0;
        length += r.ci_hi - r.ci_lo;
        s.clamped += r.clamped ? 1 : 0;
      }
      s.n = static_cast<int>(u.size());
      if (s.n > 0) {
        s.coverage_pct = 100.0 * covered / s.n;
        s.mean_ci_len = length / s.n;
        s.ks = ks_uniform(u);
      }
      out.push_back(s);
    }
    return out;
  }

  MethodSummary summary_for(const std::string& method) const {
    for (const auto& s : summarize())
      if (s.method == method) return s;
    throw DomainError("ResultTable: no method '" + method + "'");
  }
};

namespace detail {

inline std::string method_name(Link link, LabelMode mode) {
  std::string name(to_string(link));
  if (mode == LabelMode::binomial_component) name += "-binom";
  return name;
}

inline PivotRecord selective_record(const std::string& method, const std::function<double(double)>& s,
                                    const TargetDecomposition& decomp, double truth, double alpha) {
  const auto grid = build_density_grid(s, decomp.stat_obs, decomp.target_var);
  const auto ci = selective_ci(grid, decomp.stat_obs, alpha);
  PivotRecord r;
  r.method = method;
  r.pivot = grid.cdf(truth, decomp.stat_obs);
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  r.covered = ci.covers(truth);
  r.clamped = ci.lo_clamped || ci.hi_clamped;
  return r;
}

inline PivotRecord naive_record(const TargetDecomposition& decomp, double truth, double alpha) {
  const auto naive = naive_inference(decomp.stat_obs, decomp.target_var, truth, alpha);
  PivotRecord r;
  r.method = "naive";
  r.pivot = naive.pivot;
  r.ci_lo = naive.ci.lo;
  r.ci_hi = naive.ci.hi;
  r.covered = naive.ci.covers(truth);
  return r;
}

inline void append_curve(std::vector<CurvePoint>& out, const std::string& method,
                         const std::function<double(double)>& s, double lo, double hi, int points = 201) {
  for (int k = 0; k < points; ++k) {
    const double x = lo + (hi - lo) * k / (points - 1);
    out.push_back({x, method, s(x)});
  }
}

/// Everything produced for one replication, merged by index afterwards.
struct ReplicationOutput {
  std::vector<PivotRecord> records;
  std::vector<CurvePoint> curve;
  bool skipped = false;
  int failed_targets = 0;
};

inline void merge(ResultTable& table, std::vector<ReplicationOutput>& reps) {
  bool have_curve = false;
  for (auto& rep : reps) {
    if (rep.skipped) {
      ++table.skipped;
      continue;
    }
    ++table.replications;
    table.failed_targets += rep.failed_targets;
    table.pivots.insert(table.pivots.end(), rep.records.begin(), rep.records.end());
    if (!have_curve && !rep.curve.empty()) {
      table.curves = rep.curve;
      have_curve = true;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Simple example

inline SimpleThresholdParams simple_params(const ExperimentConfig& c) {
  SimpleThresholdParams params;
  params.m = c.m;
  params.q = c.q;
  params.tau = c.tau;
  params.sigma = c.sigma;
  params.n = c.n;
  params.n_s = c.n_s;
  return params;
}

/// Exact large-sample selection probability of the threshold rule.
inline double simple_truth(const SimpleThresholdParams& params, double x) {
  return binom_sf(params.m, params.success_probability(x), params.q * params.m);
}

/// Large-deviation approximation of simple_truth.
inline double simple_ld(const SimpleThresholdParams& params, double x) {
  const double p = std::clamp(params.success_probability(x), DBL_MIN, 1.0 - DBL_EPSILON);
  return ld_binom_sf(params.m, p, params.q);
}

/// Draws sample means Ybar ~ N(mu, sigma^2 / n) and keeps those that pass
/// the threshold rule, until `count` are kept. Attempt a uses
/// stream.child(a). Fails when the acceptance rate would be below 1e-4.
inline std::vector<double> sample_selected_means(const ExperimentConfig& c, int count,
                                                 const SeededStream& stream, long* attempted = nullptr) {
  const auto params = simple_params(c);
  params.validate();
  const double sd = c.sigma / std::sqrt(static_cast<double>(c.n));
  const long max_attempts = static_cast<long>(std::ceil(count / 1e-4));
  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(count));
  long a = 0;
  std::normal_distribution<double> normal;
  while (static_cast<int>(kept.size()) < count) {
    if (a >= max_attempts)
      throw Error("simple experiment: selection accepted " + std::to_string(kept.size()) + " of " +
                  std::to_string(a) + " datasets, below the 1e-4 acceptance floor");
    const SeededStream attempt = stream.child(static_cast<std::uint64_t>(a));
    auto engine = attempt.child(0).engine();
    const double ybar = c.mu + sd * normal(engine);
    if (simple_threshold_select(ybar, params, attempt.child(1))) kept.push_back(ybar);
    ++a;
  }
  if (attempted) *attempted = a;
  return kept;
}

inline ResultTable run_simple_experiment(const ExperimentConfig& c) {
  c.validate();
  if (c.experiment != ExperimentKind::simple) throw ConfigError("run_simple_experiment: wrong experiment");
  const auto params = simple_params(c);
  const auto spec = SelectorSpec::simple_threshold(params);
  const SeededStream root(c.seed);
  const double sd = c.sigma / std::sqrt(static_cast<double>(c.n));

  ResultTable table;
  table.experiment = c.experiment;
  table.alpha = c.alpha;
  table.methods = {"naive", "truth", "LD"};
  for (Link link : c.links) table.methods.push_back(detail::method_name(link, LabelMode::direct));
  for (Link link : c.links) table.methods.push_back(detail::method_name(link, LabelMode::binomial_component));

  const auto means = sample_selected_means(c, c.nsims, root.child(0), &table.attempted);

  const std::function<double(double)> truth = [&](double x) { return simple_truth(params, x); };
  const std::function<double(double)> ld = [&](double x) { return simple_ld(params, x); };

  std::vector<detail::ReplicationOutput> reps(means.size());
  parallel_for(means.size(), c.threads, [&](std::size_t i) {
    auto& rep = reps[i];
    const SeededStream ds = root.child(1).child(i);
    TargetDecomposition decomp;
    decomp.n_obs = Eigen::VectorXd::Zero(1);
    decomp.direction = Eigen::VectorXd::Ones(1);
    decomp.target_var = sd * sd;
    decomp.stat_obs = means[i];

    const auto zs = sample_covariates(decomp.stat_obs, sd, c.B, ds.child(0));
    const auto direct = generate_labels(spec, decomp, zs, LabelTarget::contains(0), LabelMode::direct, ds.child(1));
    const auto binom = generate_labels(spec, decomp, zs, LabelTarget::contains(0),
                                       LabelMode::binomial_component, ds.child(2));

    std::vector<std::pair<std::string, std::function<double(double)>>> methods{{"truth", truth}, {"LD", ld}};
    for (const auto* sample : {&direct, &binom})
      for (Link link : c.links) {
        auto s_hat = estimate_selection_prob(*sample, link, c.df);
        methods.emplace_back(detail::method_name(link, sample->mode),
                             [s_hat = std::move(s_hat)](double x) { return s_hat(x); });
      }

    auto naive = detail::naive_record(decomp, c.mu, c.alpha);
    naive.sim_id = static_cast<int>(i);
    rep.records.push_back(naive);
    for (const auto& [name, s] : methods) {
      auto r = detail::selective_record(name, s, decomp, c.mu, c.alpha);
      r.sim_id = static_cast<int>(i);
      rep.records.push_back(r);
    }
    if (i == 0)
      for (const auto& [name, s] : methods) detail::append_curve(rep.curve, name, s, c.mu - 4.0 * sd, c.mu + 6.0 * sd);
  });
  detail::merge(table, reps);
  return table;
}

// ---------------------------------------------------------------------------
// Regression experiments

namespace detail {

/// Full-target inference for every selected variable of one replication.
/// `label_modes` lists the learning variants to run.
inline ReplicationOutput regression_replication(const ExperimentConfig& c, const SelectorSpec& spec,
                                                const SyntheticData& data, const Eigen::MatrixXd& gram,
                                                const Eigen::VectorXd& xty, const std::vector<int>& selected,
                                                const std::vector<LabelMode>& label_modes,
                                                const SeededStream& stream, int sim_id) {
  ReplicationOutput rep;
  if (selected.empty()) {
    rep.skipped = true;
    return rep;
  }
  const double sigma2 = c.sigma * c.sigma;
  for (int j : selected) {
    try {
      const SeededStream ts = stream.child(static_cast<std::uint64_t>(j));
      const auto decomp = decompose_full(xty, j, gram, sigma2);
      const double truth = data.beta[j];
      const auto zs = sample_covariates(decomp.stat_obs, decomp.target_sd(), c.B, ts.child(0));

      std::vector<PivotRecord> records;
      std::vector<std::pair<std::string, LearnedSelectionProb>> fits;
      records.push_back(naive_record(decomp, truth, c.alpha));
      for (std::size_t k = 0; k < label_modes.size(); ++k) {
        const auto sample = generate_labels(spec, decomp, zs, LabelTarget::contains(j), label_modes[k],
                                            ts.child(1 + k));
        for (Link link : c.links) {
          auto s_hat = estimate_selection_prob(sample, link, c.df);
          const std::string name = method_name(link, label_modes[k]);
          records.push_back(selective_record(name, [&](double x) { return s_hat(x); }, decomp, truth, c.alpha));
          fits.emplace_back(name, std::move(s_hat));
        }
      }
      for (auto& r : records) {
        r.sim_id = sim_id;
        r.target_j = j;
      }
      rep.records.insert(rep.records.end(), records.begin(), records.end());
      if (rep.curve.empty()) {
        const double sd = decomp.target_sd();
        for (const auto& [name, s_hat] : fits)
          append_curve(rep.curve, name, [&](double x) { return s_hat(x); }, decomp.stat_obs - 4.0 * sd,
                       decomp.stat_obs + 4.0 * sd);
      }
    } catch (const ConvergenceError&) {
      ++rep.failed_targets;
    } catch (const DegenerateInputError&) {
      ++rep.failed_targets;
    } catch (const RangeError&) {
      ++rep.failed_targets;
    }
  }
  return rep;
}

inline ResultTable regression_table(const ExperimentConfig& c, const std::vector<LabelMode>& modes) {
  ResultTable table;
  table.experiment = c.experiment;
  table.alpha = c.alpha;
  table.methods = {"naive"};
  for (LabelMode mode : modes)
    for (Link link : c.links) table.methods.push_back(method_name(link, mode));
  table.attempted = c.nsims;
  return table;
}

}  // namespace detail

/// Stability selection on AR(rho) designs; every selected variable gets the
/// full-target pipeline with each link.
inline ResultTable run_stability_experiment(const ExperimentConfig& c) {
  c.validate();
  if (c.experiment != ExperimentKind::stability)
    throw ConfigError("run_stability_experiment: wrong experiment");
  const std::vector<LabelMode> modes{LabelMode::direct};
  auto table = detail::regression_table(c, modes);
  const SeededStream root(c.seed);

  std::vector<detail::ReplicationOutput> reps(static_cast<std::size_t>(c.nsims));
  parallel_for(reps.size(), c.threads, [&](std::size_t r) {
    const SeededStream rs = root.child(r);
    const auto data = generate_synthetic(c.n, c.p, c.rho, c.sparsity, c.amplitude, c.sigma, rs.child(0));
    const Eigen::MatrixXd gram = data.X.transpose() * data.X;
    const Eigen::VectorXd xty = data.X.transpose() * data.y;
    auto ctx = StabilityContext::from_observed(gram, xty, c.sigma * c.sigma);
    for (double& l : ctx.lambda_grid) l *= c.lambda_scale;
    const auto spec = SelectorSpec::stability(StabilityParams{c.m, c.q}, std::move(ctx));
    const auto selected = select(spec, xty, rs.child(1)).selected;
    reps[r] = detail::regression_replication(c, spec, data, gram, xty, selected, modes, rs.child(2),
                                             static_cast<int>(r));
  });
  detail::merge(table, reps);
  return table;
}

/// Multiple cross-validation; selected variables are analysed with
/// binomial-component learning and, for comparison, direct learning.
inline ResultTable run_multicv_experiment(const ExperimentConfig& c) {
  c.validate();
  if (c.experiment != ExperimentKind::multicv)
    throw ConfigError("run_multicv_experiment: wrong experiment");
  const std::vector<LabelMode> modes{LabelMode::binomial_component, LabelMode::direct};
  auto table = detail::regression_table(c, modes);
  const SeededStream root(c.seed);

  std::vector<detail::ReplicationOutput> reps(static_cast<std::size_t>(c.nsims));
  parallel_for(reps.size(), c.threads, [&](std::size_t r) {
    const SeededStream rs = root.child(r);
    const auto data = generate_synthetic(c.n, c.p, c.rho, c.sparsity, c.amplitude, c.sigma, rs.child(0));
    const Eigen::MatrixXd gram = data.X.transpose() * data.X;
    const Eigen::VectorXd xty = data.X.transpose() * data.y;
    const auto spec = SelectorSpec::multi_cv(MultiCvParams{c.m, c.q, c.folds},
                                             MultiCvContext::from_observed(data.X, data.y));
    const auto selected = select(spec, xty, rs.child(1)).selected;
    reps[r] = detail::regression_replication(c, spec, data, gram, xty, selected, modes, rs.child(2),
                                             static_cast<int>(r));
  });
  detail::merge(table, reps);
  return table;
}

inline ResultTable run_experiment(const ExperimentConfig& c) {
  switch (c.experiment) {
    case ExperimentKind::simple: return run_simple_experiment(c);
    case ExperimentKind::stability: return run_stability_experiment(c);
    case ExperimentKind::multicv: return run_multicv_experiment(c);
  }
  throw ConfigError("unknown experiment");
}

// ---------------------------------------------------------------------------
// Output files

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  std::vector<std::string> links;
  for (Link l : c.links) links.emplace_back(to_string(l));
  return {{"experiment", std::string(to_string(c.experiment))},
          {"n", c.n}, {"p", c.p}, {"rho", c.rho}, {"sigma", c.sigma}, {"sparsity", c.sparsity},
          {"amplitude", c.amplitude}, {"mu", c.mu}, {"m", c.m}, {"q", c.q}, {"tau", c.tau},
          {"n_s", c.n_s}, {"folds", c.folds}, {"lambda_scale", c.lambda_scale}, {"B", c.B}, {"links", links}, {"df", c.df},
          {"nsims", c.nsims}, {"alpha", c.alpha}, {"seed", c.seed}};
}

/// Writes coverage.csv, pivots.csv, sx_curves.csv, ks.csv and summary.json
/// into `dir`. The thread count is not recorded.
inline void write_results(const ResultTable& table, const ExperimentConfig& config,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(std::string("cannot write ") + (dir / name).string());
    return out;
  };
  const auto summary = table.summarize();
  {
    auto out = open("coverage.csv");
    out << "method,alpha,coverage_pct,mean_ci_len,n\n";
    for (const auto& s : summary)
      out << s.method << ',' << format_number(s.alpha) << ',' << format_number(s.coverage_pct) << ','
          << format_number(s.mean_ci_len) << ',' << s.n << '\n';
  }
  {
    auto out = open("pivots.csv");
    out << "sim_id,target_j,method,pivot\n";
    for (const auto& r : table.pivots)
      out << r.sim_id << ',' << r.target_j << ',' << r.method << ',' << format_number(r.pivot) << '\n';
  }
  {
    auto out = open("sx_curves.csv");
    out << "x,method,s_value\n";
    for (const auto& pt : table.curves)
      out << format_number(pt.x) << ',' << pt.method << ',' << format_number(pt.s_value) << '\n';
  }
  {
    auto out = open("ks.csv");
    out << "method,ks,n\n";
    for (const auto& s : summary) out << s.method << ',' << format_number(s.ks) << ',' << s.n << '\n';
  }
  {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& s : summary)
      methods.push_back({{"method", s.method}, {"alpha", s.alpha}, {"coverage_pct", s.coverage_pct},
                         {"mean_ci_len", s.mean_ci_len}, {"n", s.n}, {"ks", s.ks},
                         {"clamped_intervals", s.clamped}});
    const nlohmann::json j{{"config", to_json(config)},
                           {"attempted", table.attempted},
                           {"replications", table.replications},
                           {"skipped_empty_selection", table.skipped},
                           {"failed_targets", table.failed_targets},
                           {"methods", methods}};
    auto out = open("summary.json");
    out << j.dump(2) << '\n';
  }
}

}  // namespace bbsi
