#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"
#include "bbsi/spline.hpp"
#include "bbsi/stats.hpp"

namespace bbsi {

enum class Link { probit, logit };

inline std::string_view to_string(Link link) { return link == Link::probit ? "probit" : "logit"; }

inline Link link_from_string(std::string_view name) {
  if (name == "probit") return Link::probit;
  if (name == "logit") return Link::logit;
  throw DomainError("unknown link '" + std::string(name) + "'");
}

/// Thrown when the binary labels are all 0 or all 1.
class DegenerateLabelsError : public DegenerateInputError {
 public:
  using DegenerateInputError::DegenerateInputError;
};

/// Binary GLM on a natural-spline feature map: P{W=1 | Z=x} = g^{-1}(c0 + c' ns(x)).
struct BinaryGlmModel {
  Link link = Link::probit;
  SplineSpec spec;
  Eigen::VectorXd coefficients;  // intercept first, then df spline terms
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;  // penalized log-likelihood per accepted iterate
};

inline constexpr double kGlmRidge = 1e-6;
inline constexpr double kProbClamp = 1e-12;

namespace detail {

/// Per-observation log-likelihood, score d/d(eta) and Fisher weight.
struct BernoulliTerms {
  double loglik;
  double score;
  double weight;
};

inline BernoulliTerms bernoulli_terms(Link link, double eta, int w) {
  if (link == Link::logit) {
    // softplus(eta) = log(1 + e^eta), stable on both sides
    const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    const double mu = 1.0 / (1.0 + std::exp(-eta));
    return {w * eta - softplus, w - mu, mu * (1.0 - mu)};
  }
  const double log_phi = norm_logpdf(eta);
  const double log_cdf = log_norm_cdf(eta);
  const double log_sf = log_norm_sf(eta);
  const double weight = std::exp(2.0 * log_phi - log_cdf - log_sf);
  if (w == 1) return {log_cdf, std::exp(log_phi - log_cdf), weight};
  return {log_sf, -std::exp(log_phi - log_sf), weight};
}

inline double inverse_link(Link link, double eta) {
  const double p = link == Link::probit ? norm_cdf(eta) : 1.0 / (1.0 + std::exp(-eta));
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

}  // namespace detail

inline double linear_predictor(const BinaryGlmModel& model, double x) {
  const Eigen::VectorXd row = eval_basis(model.spec, x);
  return model.coefficients[0] + model.coefficients.tail(row.size()).dot(row);
}

/// Fitted success probability, clamped to [1e-12, 1 - 1e-12].
inline double predict_prob(const BinaryGlmModel& model, double x) {
  if (!std::isfinite(x)) throw DomainError("predict_prob: x must be finite");
  return detail::inverse_link(model.link, linear_predictor(model, x));
}

/// Ridge-stabilized maximum likelihood by IRLS with step halving.
///
/// Maximizes sum_b log p(w_b | z_b) - 1e-6 * |gamma_spline|^2 starting from
/// gamma = 0. Stops when the gradient norm falls below 1e-8 * B, or after 100
/// iterations with converged = false.
inline BinaryGlmModel fit_binary_glm(std::span<const double> zs, std::span<const int> ws,
                                     Link link, int df = 10) {
  if (zs.size() != ws.size()) throw DomainError("fit_binary_glm: zs and ws differ in length");
  if (zs.size() < static_cast<std::size_t>(df) + 1)
    throw DomainError("fit_binary_glm: need at least df + 1 observations");
  std::size_t ones = 0;
  for (int w : ws) {
    if (w != 0 && w != 1) throw DomainError("fit_binary_glm: labels must be 0 or 1");
    ones += static_cast<std::size_t>(w);
  }
  if (ones == 0 || ones == ws.size())
    throw DegenerateLabelsError("fit_binary_glm: labels are all " +
                                std::string(ones == 0 ? "0" : "1"));

  BinaryGlmModel model;
  model.link = link;
  model.spec = fit_spline_spec(zs, df);

  const auto n = static_cast<Eigen::Index>(zs.size());
  const Eigen::Index k = df + 1;
  Eigen::MatrixXd design(n, k);
  design.col(0).setOnes();
  design.rightCols(df) = basis_matrix(model.spec, zs);

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k, 2.0 * kGlmRidge);
  penalty[0] = 0.0;

  auto objective = [&](const Eigen::VectorXd& gamma) {
    const Eigen::VectorXd eta = design * gamma;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      total += detail::bernoulli_terms(link, eta[i], ws[static_cast<std::size_t>(i)]).loglik;
    return total - kGlmRidge * gamma.tail(df).squaredNorm();
  };

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(k);
  double current = objective(gamma);
  model.objective_trace.push_back(current);
  const double grad_tol = 1e-8 * static_cast<double>(n);

  Eigen::VectorXd score(n), weight(n);
  for (int iter = 1; iter <= 100; ++iter) {
    const Eigen::VectorXd eta = design * gamma;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t = detail::bernoulli_terms(link, eta[i], ws[static_cast<std::size_t>(i)]);
      score[i] = t.score;
      weight[i] = t.weight;
    }
    const Eigen::VectorXd grad = design.transpose() * score - penalty.cwiseProduct(gamma);
    model.iterations = iter - 1;
    if (grad.norm() <= grad_tol) {
      model.converged = true;
      break;
    }

    Eigen::MatrixXd info = design.transpose() * weight.asDiagonal() * design;
    info.diagonal() += penalty;
    info(0, 0) += 1e-12 * static_cast<double>(n);
    const Eigen::VectorXd step = info.ldlt().solve(grad);

    double t = 1.0;
    Eigen::VectorXd candidate = gamma + step;
    double value = objective(candidate);
    while (!(value >= current) && t > 1e-10) {
      t *= 0.5;
      candidate = gamma + t * step;
      value = objective(candidate);
    }
    model.iterations = iter;
    if (!(value >= current)) break;  // no ascent direction left at working precision
    const bool stalled = value - current <= 1e-15 * std::abs(current);
    gamma = candidate;
    current = value;
    model.objective_trace.push_back(current);
    if (stalled && (step * t).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + gamma.cwiseAbs().maxCoeff()))
      break;
  }
  model.coefficients = gamma;
  if (!model.coefficients.allFinite())
    throw ConvergenceError("fit_binary_glm: non-finite coefficients");
  return model;
}

}  // namespace bbsi
