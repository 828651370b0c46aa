#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "bbsi/config.hpp"
#include "bbsi/errors.hpp"
#include "bbsi/experiments.hpp"
#include "bbsi/inference.hpp"
#include "bbsi/io.hpp"
#include "bbsi/selectors.hpp"

namespace bbsi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------------------
// One-shot inference

/// Settings of the `infer` subcommand, read from its config file.
struct InferConfig {
  SelectorKind selector = SelectorKind::simple_threshold;

  // simple threshold rule
  double ybar = 0.0;
  int n = 100;
  int n_s = 50;
  double tau = 1.3;

  // regression selectors
  std::string x_file;
  std::string y_file;
  std::optional<double> sigma;
  std::vector<int> targets;  // empty: the variables selected at the observed data
  int folds = 5;
  double lambda_scale = 1.0;

  int m = 20;
  double q = 0.5;
  int B = 2000;
  std::vector<Link> links{Link::probit, Link::logit};
  int df = 10;
  double alpha = 0.05;
  double mu0 = 0.0;
  LabelMode mode = LabelMode::direct;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

inline InferConfig read_infer_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  InferConfig c;
  bool have_ybar = false;
  const auto base_dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& f) {
    const std::filesystem::path p(f);
    return (p.is_absolute() ? p : base_dir / p).string();
  };
  for (const auto& [key, values] : read_config_items(in)) {
    if (values.empty()) throw ConfigError("config: key '" + key + "' has no value");
    const std::string& v = values.front();
    auto num_i = [&] { return detail::parse_number<int>(key, v); };
    auto num_d = [&] { return detail::parse_number<double>(key, v); };
    try {
      if (key == "selector") c.selector = selector_kind_from_string(v);
      else if (key == "ybar") c.ybar = num_d(), have_ybar = true;
      else if (key == "n") c.n = num_i();
      else if (key == "n_s") c.n_s = num_i();
      else if (key == "tau") c.tau = num_d();
      else if (key == "x_file") c.x_file = resolve(v);
      else if (key == "y_file") c.y_file = resolve(v);
      else if (key == "sigma") c.sigma = num_d();
      else if (key == "K" || key == "folds") c.folds = num_i();
      else if (key == "lambda_scale") c.lambda_scale = num_d();
      else if (key == "m") c.m = num_i();
      else if (key == "q") c.q = num_d();
      else if (key == "B") c.B = num_i();
      else if (key == "df") c.df = num_i();
      else if (key == "alpha") c.alpha = num_d();
      else if (key == "mu0") c.mu0 = num_d();
      else if (key == "mode") c.mode = label_mode_from_string(v);
      else if (key == "seed") c.seed = detail::parse_number<std::uint64_t>(key, v);
      else if (key == "threads") c.threads = detail::parse_number<unsigned>(key, v);
      else if (key == "links") {
        c.links.clear();
        for (const auto& name : values) c.links.push_back(link_from_string(name));
      } else if (key == "targets") {
        c.targets.clear();
        if (!(values.size() == 1 && v == "selected"))
          for (const auto& t : values) c.targets.push_back(detail::parse_number<int>(key, t));
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const DomainError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  need(c.B >= c.df + 1 && c.df >= 1, "need 1 <= df < B");
  need(c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0, 1)");
  need(!c.links.empty(), "at least one link is required");
  need(c.m >= 1 && c.q > 0.0 && c.q <= 1.0, "need m >= 1 and q in (0, 1]");
  if (c.selector == SelectorKind::simple_threshold) {
    need(have_ybar, "the simple selector needs 'ybar'");
    need(c.q < 1.0, "q must lie in (0, 1) for the simple selector");
    need(c.n_s >= 1 && c.n_s <= c.n, "need 1 <= n_s <= n");
  } else {
    need(!c.x_file.empty() && !c.y_file.empty(), "regression selectors need 'x_file' and 'y_file'");
  }
  need(c.lambda_scale > 0.0 && std::isfinite(c.lambda_scale), "lambda_scale must be positive");
  if (c.sigma) need(*c.sigma > 0.0 && std::isfinite(*c.sigma), "sigma must be positive");
  return c;
}

/// Numbers separated by commas or whitespace, one matrix row per line.
/// Blank lines and lines starting with '#' are skipped.
inline Eigen::MatrixXd read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t' || ch == '\r') ch = ' ';
    std::istringstream fields(line);
    std::string token;
    std::vector<double> row;
    while (fields >> token) {
      if (row.empty() && token.front() == '#') break;
      row.push_back(detail::parse_number<double>(path, token));
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("data file '" + path + "': ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("data file '" + path + "' is empty");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
  return out;
}

struct InferenceRow {
  int target_j = 0;
  std::string method;
  double estimate = 0.0;
  double sd = 0.0;
  double pvalue = 0.0;
  ConfidenceInterval ci;
};

/// Runs the selector-specific pipeline and writes inference.csv plus one
/// fit_<j>_<method>.json per learned selection probability into `out_dir`.
inline std::vector<InferenceRow> run_inference(const InferConfig& c, const std::filesystem::path& out_dir,
                                               std::ostream& log) {
  const SeededStream root(c.seed);
  std::optional<SelectorSpec> spec;
  Eigen::VectorXd data;
  Eigen::MatrixXd gram;
  double sigma2 = 1.0;
  std::vector<int> targets = c.targets;

  if (c.selector == SelectorKind::simple_threshold) {
    SimpleThresholdParams params{c.m, c.q, c.tau, c.sigma.value_or(1.0), c.n, c.n_s};
    spec = SelectorSpec::simple_threshold(params);
    data = Eigen::VectorXd::Constant(1, c.ybar);
    const double sd = params.sigma / std::sqrt(static_cast<double>(c.n));
    sigma2 = sd * sd;
    gram = Eigen::MatrixXd::Identity(1, 1);
    if (targets.empty()) targets = {0};
    if (targets != std::vector<int>{0}) throw ConfigError("the simple selector has the single target 0");
  } else {
    const Eigen::MatrixXd X = read_matrix(c.x_file);
    const Eigen::MatrixXd Y = read_matrix(c.y_file);
    if (Y.cols() != 1 && Y.rows() != 1) throw ConfigError("y_file must hold a single column");
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(Y.data(), Y.size());
    if (y.size() != X.rows()) throw ConfigError("x_file and y_file differ in rows");
    if (X.rows() <= X.cols()) throw ConfigError("need more observations than variables");
    gram = X.transpose() * X;
    data = X.transpose() * y;
    if (c.sigma) {
      sigma2 = *c.sigma * *c.sigma;
    } else {
      const Eigen::VectorXd beta = gram.ldlt().solve(data);
      sigma2 = (y - X * beta).squaredNorm() / static_cast<double>(X.rows() - X.cols());
      log << "sigma estimated from least-squares residuals: " << std::sqrt(sigma2) << '\n';
    }
    if (c.selector == SelectorKind::stability) {
      auto ctx = StabilityContext::from_observed(gram, data, sigma2);
      for (double& l : ctx.lambda_grid) l *= c.lambda_scale;
      spec = SelectorSpec::stability(StabilityParams{c.m, c.q}, std::move(ctx));
    } else
      spec = SelectorSpec::multi_cv(MultiCvParams{c.m, c.q, c.folds}, MultiCvContext::from_observed(X, y));
    if (targets.empty()) {
      targets = select(*spec, data, root.child(0)).selected;
      log << "selected " << targets.size() << " variable(s) at the observed data\n";
    }
    for (int j : targets)
      if (j < 0 || j >= data.size()) throw ConfigError("target index " + std::to_string(j) + " out of range");
  }

  std::filesystem::create_directories(out_dir);
  std::vector<InferenceRow> rows;
  for (int j : targets) {
    const SeededStream ts = root.child(1).child(static_cast<std::uint64_t>(j));
    const auto decomp = c.selector == SelectorKind::simple_threshold
                            ? [&] {
                                TargetDecomposition d;
                                d.n_obs = Eigen::VectorXd::Zero(1);
                                d.direction = Eigen::VectorXd::Ones(1);
                                d.target_var = sigma2;
                                d.stat_obs = c.ybar;
                                return d;
                              }()
                            : decompose_full(data, j, gram, sigma2);
    const auto naive = naive_inference(decomp.stat_obs, decomp.target_var, c.mu0, c.alpha);
    rows.push_back({j, "naive", decomp.stat_obs, decomp.target_sd(), naive.pvalue, naive.ci});

    const auto zs = sample_covariates(decomp.stat_obs, decomp.target_sd(), c.B, ts.child(0));
    const auto sample = generate_labels(*spec, decomp, zs, LabelTarget::contains(j), c.mode, ts.child(1), c.threads);
    for (Link link : c.links) {
      const auto s_hat = estimate_selection_prob(sample, link, c.df);
      const auto grid = build_density_grid([&](double x) { return s_hat(x); }, decomp.stat_obs, decomp.target_var);
      const std::string method = detail::method_name(link, c.mode);
      rows.push_back({j, method, decomp.stat_obs, decomp.target_sd(),
                      selective_pvalue(grid, c.mu0, decomp.stat_obs), selective_ci(grid, decomp.stat_obs, c.alpha)});
      std::ofstream fit(out_dir / ("fit_" + std::to_string(j) + "_" + method + ".json"), std::ios::binary);
      fit << to_json(s_hat).dump(2) << '\n';
    }
  }

  std::ofstream out(out_dir / "inference.csv", std::ios::binary);
  if (!out) throw Error("cannot write " + (out_dir / "inference.csv").string());
  out << "target_j,method,estimate,sd,mu0,pvalue,ci_lo,ci_hi,ci_clamped\n";
  for (const auto& r : rows)
    out << r.target_j << ',' << r.method << ',' << format_number(r.estimate) << ',' << format_number(r.sd) << ','
        << format_number(c.mu0) << ',' << format_number(r.pvalue) << ',' << format_number(r.ci.lo) << ','
        << format_number(r.ci.hi) << ',' << ((r.ci.lo_clamped || r.ci.hi_clamped) ? 1 : 0) << '\n';
  return rows;
}

// ---------------------------------------------------------------------------
// Entry point

inline void print_summary(const ResultTable& table, std::ostream& os) {
  os << "attempted " << table.attempted << ", replications " << table.replications << ", skipped (empty selection) "
     << table.skipped << ", failed targets " << table.failed_targets << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %8s %10s %8s %6s\n", "method", "cover%", "mean_len", "ks", "n");
  os << line;
  for (const auto& s : table.summarize()) {
    std::snprintf(line, sizeof line, "%-14s %8.2f %10.4f %8.4f %6d\n", s.method.c_str(), s.coverage_pct,
                  s.mean_ci_len, s.ks, s.n);
    os << line;
  }
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Selective inference after black-box selection"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "results";
    std::optional<unsigned> threads;
    std::string scale = "desk";
  };
  Common common;
  auto add_common = [&](CLI::App* sub, bool with_scale) {
    sub->add_option("--config", common.config, "Config file (key = value lines)");
    sub->add_option("--seed", common.seed, "Master seed");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    if (with_scale)
      sub->add_option("--scale", common.scale, "Preset size")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
  };
  auto* simple = app.add_subcommand("simple", "Simple threshold example");
  auto* stability = app.add_subcommand("stability", "Stability selection experiment");
  auto* multicv = app.add_subcommand("multicv", "Multiple cross-validation experiment");
  auto* infer = app.add_subcommand("infer", "Inference for one observed dataset");
  for (auto* sub : {simple, stability, multicv}) add_common(sub, true);
  add_common(infer, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (infer->parsed()) {
      if (common.config.empty()) throw ConfigError("infer requires --config");
      auto c = read_infer_config(common.config);
      if (common.seed) c.seed = *common.seed;
      if (common.threads) c.threads = *common.threads;
      const auto rows = run_inference(c, common.out, out);
      for (const auto& r : rows)
        out << "target " << r.target_j << ' ' << r.method << ": estimate " << r.estimate << ", p-value " << r.pvalue
            << ", CI [" << r.ci.lo << ", " << r.ci.hi << "]\n";
      out << "wrote " << (std::filesystem::path(common.out) / "inference.csv").string() << '\n';
      return kExitOk;
    }

    const ExperimentKind kind = simple->parsed()      ? ExperimentKind::simple
                                : stability->parsed() ? ExperimentKind::stability
                                                      : ExperimentKind::multicv;
    auto c = preset(kind, scale_from_string(common.scale));
    if (!common.config.empty()) c = apply_config_file(c, common.config);
    if (c.experiment != kind)
      throw ConfigError("config names experiment '" + std::string(to_string(c.experiment)) + "' but the subcommand is '" +
                        std::string(to_string(kind)) + "'");
    if (common.seed) c.seed = *common.seed;
    if (common.threads) c.threads = *common.threads;
    c.validate();
    const auto table = run_experiment(c);
    write_results(table, c, common.out);
    print_summary(table, out);
    out << "wrote results to " << common.out << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace bbsi
