#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "bbsi/errors.hpp"
#include "bbsi/glm.hpp"

namespace bbsi {

enum class ExperimentKind { simple, stability, multicv };
enum class Scale { desk, paper };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simple: return "simple";
    case ExperimentKind::stability: return "stability";
    case ExperimentKind::multicv: return "multicv";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(std::string_view name) {
  if (name == "simple") return ExperimentKind::simple;
  if (name == "stability") return ExperimentKind::stability;
  if (name == "multicv" || name == "multi-cv") return ExperimentKind::multicv;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

inline Scale scale_from_string(std::string_view name) {
  if (name == "desk") return Scale::desk;
  if (name == "paper") return Scale::paper;
  throw ConfigError("unknown scale '" + std::string(name) + "' (expected desk or paper)");
}

/// Everything one simulation study needs. `mu` and the design parameters are
/// ground truth known only to the harness.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::simple;

  // design
  int n = 100;
  int p = 1;
  double rho = 0.0;
  double sigma = 1.0;
  int sparsity = 0;
  double amplitude = 0.0;
  double mu = 0.0;

  // selector
  int m = 20;
  double q = 0.5;
  double tau = 1.3;
  int n_s = 50;
  int folds = 5;
  double lambda_scale = 1.0;  // stability: multiplies the penalty grid of the half-sample problems

  // learning
  int B = 2000;
  std::vector<Link> links{Link::probit, Link::logit};
  int df = 10;

  int nsims = 300;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

inline ExperimentConfig preset(ExperimentKind kind, Scale scale) {
  ExperimentConfig c;
  c.experiment = kind;
  const bool paper = scale == Scale::paper;
  switch (kind) {
    case ExperimentKind::simple:
      c.n = 100, c.n_s = 50, c.m = 20, c.q = 0.5, c.sigma = 1.0, c.mu = 0.0, c.tau = 1.3;
      c.alpha = 0.05;
      c.B = paper ? 10000 : 2000;
      c.nsims = paper ? 1000 : 300;
      break;
    case ExperimentKind::stability:
      c.rho = 0.1, c.sigma = 2.0, c.amplitude = 3.0, c.m = 5, c.q = 0.6, c.alpha = 0.10;
      c.n = paper ? 200 : 100;
      c.p = paper ? 100 : 20;
      c.sparsity = paper ? 20 : 5;
      c.B = paper ? 1000 : 500;
      c.nsims = paper ? 50 : 30;
      break;
    case ExperimentKind::multicv:
      c.rho = 0.0, c.sigma = 2.0, c.amplitude = 2.0, c.m = 3, c.q = 2.0 / 3.0, c.folds = 5;
      c.alpha = 0.10, c.B = 100;
      c.n = paper ? 200 : 100;
      c.p = paper ? 50 : 20;
      c.sparsity = paper ? 10 : 5;
      c.nsims = paper ? 100 : 40;
      break;
  }
  return c;
}

inline void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  need(n >= 1 && p >= 1 && m >= 1 && B >= 1 && nsims >= 1 && df >= 1, "counts must be positive");
  need(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1)");
  need(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
  need(sparsity >= 0 && sparsity <= p, "sparsity must lie in [0, p]");
  need(std::isfinite(amplitude) && std::isfinite(mu), "amplitude and mu must be finite");
  need(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  need(!links.empty(), "at least one link is required");
  need(B >= df + 1, "B must exceed df");
  need(threads >= 1, "threads must be positive");
  need(lambda_scale > 0.0 && std::isfinite(lambda_scale), "lambda_scale must be positive");
  if (experiment == ExperimentKind::simple) {
    need(q > 0.0 && q < 1.0, "q must lie in (0, 1)");
    need(n_s >= 1 && n_s <= n, "n_s must lie in [1, n]");
    need(!std::isnan(tau), "tau must be a number");
  } else {
    need(q > 0.0 && q <= 1.0, "q must lie in (0, 1]");
    need(n > p, "n must exceed p so that X'X is invertible");
  }
  if (experiment == ExperimentKind::multicv) need(folds >= 2 && n / 2 >= 2 * folds, "folds too many for n");
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config: bad value '" + text + "' for key '" + key + "'");
  return value;
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw ConfigError("config: bad value '" + text + "' for key '" + key + "'");
  return v;
}

}  // namespace detail

/// Key/value items of an INI-style text. Section headers are accepted and
/// ignored, so keys are flat; comments take whole lines (# or ;).
inline std::vector<std::pair<std::string, std::vector<std::string>>> read_config_items(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    out.emplace_back(item.name, item.inputs);
  }
  return out;
}

/// Applies `key = value` lines on top of `base`. Unknown keys are errors.
inline ExperimentConfig apply_config_text(ExperimentConfig base, std::istream& in) {
  for (const auto& [key, values] : read_config_items(in)) {
    if (values.empty()) throw ConfigError("config: key '" + key + "' has no value");
    const std::string& v = values.front();
    auto num_i = [&] { return detail::parse_number<int>(key, v); };
    auto num_d = [&] { return detail::parse_number<double>(key, v); };
    if (key == "experiment") base.experiment = experiment_kind_from_string(v);
    else if (key == "n") base.n = num_i();
    else if (key == "p") base.p = num_i();
    else if (key == "rho") base.rho = num_d();
    else if (key == "sigma") base.sigma = num_d();
    else if (key == "s" || key == "sparsity") base.sparsity = num_i();
    else if (key == "b" || key == "amplitude") base.amplitude = num_d();
    else if (key == "mu") base.mu = num_d();
    else if (key == "m") base.m = num_i();
    else if (key == "q") base.q = num_d();
    else if (key == "tau") base.tau = num_d();
    else if (key == "n_s") base.n_s = num_i();
    else if (key == "K" || key == "folds") base.folds = num_i();
    else if (key == "lambda_scale") base.lambda_scale = num_d();
    else if (key == "B") base.B = num_i();
    else if (key == "df") base.df = num_i();
    else if (key == "nsims") base.nsims = num_i();
    else if (key == "alpha") base.alpha = num_d();
    else if (key == "seed") base.seed = detail::parse_number<std::uint64_t>(key, v);
    else if (key == "threads") base.threads = detail::parse_number<unsigned>(key, v);
    else if (key == "links") {
      base.links.clear();
      for (const auto& name : values) {
        try {
          base.links.push_back(link_from_string(name));
        } catch (const DomainError& e) {
          throw ConfigError(std::string("config: ") + e.what());
        }
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return base;
}

inline ExperimentConfig apply_config_file(ExperimentConfig base, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return apply_config_text(std::move(base), in);
}

}  // namespace bbsi
