#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"
#include "bbsi/stream.hpp"

namespace bbsi {

/// Lasso in sufficient-statistic form:
///   minimize 0.5 b'Gb - b'c + lambda |b|_1
/// with G = X'X and c = X'y. This is the least-squares Lasso up to a constant.
struct GramProblem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd xty;

  GramProblem(Eigen::MatrixXd g, Eigen::VectorXd c) : gram(std::move(g)), xty(std::move(c)) {
    validate();
  }

  int p() const { return static_cast<int>(xty.size()); }

  void validate() const {
    if (gram.rows() != gram.cols() || gram.rows() != xty.size())
      throw DomainError("GramProblem: dimension mismatch");
    if (!gram.allFinite() || !xty.allFinite()) throw DomainError("GramProblem: non-finite entries");
    const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw DomainError("GramProblem: gram must be symmetric");
    if (!(gram.diagonal().array() > 0.0).all())
      throw DomainError("GramProblem: gram diagonal must be strictly positive");
  }
};

struct LassoPath {
  std::vector<double> lambdas;
  Eigen::MatrixXd betas;  // column i solves the problem at lambdas[i]
  std::vector<std::vector<int>> supports;
};

struct LambdaRange {
  double lambda_min;
  double lambda_max;
};

inline constexpr double kLassoKktTol = 1e-9;
inline constexpr long kLassoMaxSweeps = 100000;

inline double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

inline std::vector<int> support_of(const Eigen::Ref<const Eigen::VectorXd>& beta) {
  std::vector<int> s;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0) s.push_back(static_cast<int>(j));
  return s;
}

/// Largest KKT violation at beta, divided by lambda.
inline double kkt_violation(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                            const Eigen::Ref<const Eigen::VectorXd>& xty,
                            const Eigen::Ref<const Eigen::VectorXd>& beta, double lambda) {
  const Eigen::VectorXd r = xty - gram * beta;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    const double v = beta[j] == 0.0 ? std::max(0.0, std::abs(r[j]) - lambda)
                                    : std::abs(r[j] - std::copysign(lambda, beta[j]));
    worst = std::max(worst, v);
  }
  return worst / lambda;
}

inline double lasso_objective(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                              const Eigen::Ref<const Eigen::VectorXd>& xty,
                              const Eigen::Ref<const Eigen::VectorXd>& beta, double lambda) {
  return 0.5 * beta.dot(gram * beta) - beta.dot(xty) + lambda * beta.lpNorm<1>();
}

namespace detail {

/// Cyclic coordinate descent in place. Unchecked inputs; callers validate.
///
/// Terminates once a full sweep moves no coordinate by more than
/// 1e-10 (1 + |b|_inf) and the KKT residual is below 1e-9 lambda.
inline void lasso_cd_inplace(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                             const Eigen::Ref<const Eigen::VectorXd>& xty, double lambda,
                             Eigen::Ref<Eigen::VectorXd> beta) {
  const Eigen::Index p = xty.size();
  Eigen::VectorXd r = xty - gram * beta;
  std::vector<Eigen::Index> active;
  auto update = [&](Eigen::Index j) {
    const double g_jj = gram(j, j);
    const double old = beta[j];
    const double updated = soft_threshold(r[j] + g_jj * old, lambda) / g_jj;
    if (updated == old) return 0.0;
    const double delta = updated - old;
    r.noalias() -= delta * gram.col(j);
    beta[j] = updated;
    return std::abs(delta);
  };
  auto converged = [&](double max_change) {
    return max_change < 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff());
  };

  long sweeps = 0;
  while (sweeps < kLassoMaxSweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) max_change = std::max(max_change, update(j));
    ++sweeps;
    if (converged(max_change)) {
      r = xty - gram * beta;  // drop accumulated update error before checking
      if (kkt_violation(gram, xty, beta, lambda) <= kLassoKktTol) return;
    }
    // Cycle over the nonzero coordinates until they settle, then recheck all.
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j)
      if (beta[j] != 0.0) active.push_back(j);
    while (sweeps < kLassoMaxSweeps) {
      double change = 0.0;
      for (Eigen::Index j : active) change = std::max(change, update(j));
      ++sweeps;
      if (converged(change)) break;
    }
  }
  throw ConvergenceError("lasso_cd: no convergence after 1e5 sweeps");
}

/// Warm-started path solve; lambdas must already be validated.
inline LassoPath lasso_path_unchecked(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                      const Eigen::Ref<const Eigen::VectorXd>& xty,
                                      const std::vector<double>& lambdas) {
  LassoPath path;
  path.lambdas = lambdas;
  path.betas.resize(xty.size(), static_cast<Eigen::Index>(lambdas.size()));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(xty.size());
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    lasso_cd_inplace(gram, xty, lambdas[i], beta);
    path.betas.col(static_cast<Eigen::Index>(i)) = beta;
    path.supports.push_back(support_of(beta));
  }
  return path;
}

inline void require_decreasing(const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw DomainError("lasso_path: empty lambda sequence");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i]))
      throw DomainError("lasso_path: lambdas must be positive and finite");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1]))
      throw DomainError("lasso_path: lambdas must be strictly decreasing");
  }
}

}  // namespace detail

inline Eigen::VectorXd lasso_cd(const GramProblem& problem, double lambda,
                                const Eigen::VectorXd& warm_start) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw DomainError("lasso_cd: lambda must be positive and finite");
  if (warm_start.size() != problem.p()) throw DomainError("lasso_cd: warm start has wrong size");
  Eigen::VectorXd beta = warm_start;
  detail::lasso_cd_inplace(problem.gram, problem.xty, lambda, beta);
  return beta;
}

inline Eigen::VectorXd lasso_cd(const GramProblem& problem, double lambda) {
  return lasso_cd(problem, lambda, Eigen::VectorXd::Zero(problem.p()));
}

inline LassoPath lasso_path(const GramProblem& problem, const std::vector<double>& lambdas) {
  detail::require_decreasing(lambdas);
  return detail::lasso_path_unchecked(problem.gram, problem.xty, lambdas);
}

/// `count` geometrically spaced values from hi down to lo (both included).
inline std::vector<double> geometric_grid(double hi, double lo, int count) {
  if (!(hi > 0.0 && lo > 0.0 && lo <= hi) || count < 1)
    throw DomainError("geometric_grid: need 0 < lo <= hi and count >= 1");
  if (count == 1 || lo == hi) return {hi};
  std::vector<double> grid(static_cast<std::size_t>(count));
  const double ratio = std::log(lo / hi) / (count - 1);
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = hi * std::exp(ratio * i);
  grid.back() = lo;
  return grid;
}

/// Default penalty grid: 100 points on [lambda_max / 100, lambda_max].
inline std::vector<double> default_lambda_grid(double lambda_max) {
  return geometric_grid(lambda_max, lambda_max / 100.0, 100);
}

inline int stability_support_cap(int p) {
  return static_cast<int>(std::floor(std::sqrt(0.8 * p) + 1e-9));
}

/// Penalty range for stability selection.
///
/// lambda_max = max |xty_j| (empty support). lambda_min descends the default
/// grid and stops at the last value whose support has at most
/// floor(sqrt(0.8 p)) variables.
inline LambdaRange lambda_range(const GramProblem& problem) {
  const double lambda_max = problem.xty.cwiseAbs().maxCoeff();
  if (!(lambda_max > 0.0))
    throw DegenerateInputError("lambda_range: X'y is zero, no penalty range exists");
  const int cap = stability_support_cap(problem.p());
  const auto grid = default_lambda_grid(lambda_max);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(problem.p());
  double lambda_min = lambda_max;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    detail::lasso_cd_inplace(problem.gram, problem.xty, grid[i], beta);
    if (static_cast<int>(support_of(beta).size()) > cap) break;
    lambda_min = grid[i];
  }
  return {lambda_min, lambda_max};
}

/// K-fold cross-validated penalty.
///
/// Folds come from a seeded permutation cut into K contiguous near-equal
/// blocks. Each fold is predicted from the Lasso fitted to the Gram statistics
/// of the remaining rows; the penalty with the smallest mean fold MSE wins,
/// with ties resolved toward the larger penalty.
inline double cv_lambda(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y, int folds,
                        const std::vector<double>& lambdas, const SeededStream& stream) {
  const auto n = X.rows();
  if (y.size() != n) throw DomainError("cv_lambda: X and y differ in rows");
  if (folds < 2) throw DomainError("cv_lambda: need at least 2 folds");
  if (n < 2 * folds) throw DomainError("cv_lambda: need n >= 2K");
  detail::require_decreasing(lambdas);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto engine = stream.engine();
  std::shuffle(order.begin(), order.end(), engine);

  const Eigen::MatrixXd gram_all = X.transpose() * X;
  const Eigen::VectorXd xty_all = X.transpose() * y;
  std::vector<double> mean_error(lambdas.size(), 0.0);

  Eigen::Index start = 0;
  for (int k = 0; k < folds; ++k) {
    const Eigen::Index size = n / folds + (k < n % folds ? 1 : 0);
    if (size < 1) throw DomainError("cv_lambda: empty fold");
    Eigen::MatrixXd X_fold(size, X.cols());
    Eigen::VectorXd y_fold(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      X_fold.row(i) = X.row(order[static_cast<std::size_t>(start + i)]);
      y_fold[i] = y[order[static_cast<std::size_t>(start + i)]];
    }
    start += size;

    const GramProblem train(gram_all - X_fold.transpose() * X_fold,
                            xty_all - X_fold.transpose() * y_fold);
    const LassoPath path = detail::lasso_path_unchecked(train.gram, train.xty, lambdas);
    const Eigen::MatrixXd residuals =
        (X_fold * path.betas).colwise() - y_fold;  // size x L
    for (std::size_t l = 0; l < lambdas.size(); ++l)
      mean_error[l] += residuals.col(static_cast<Eigen::Index>(l)).squaredNorm() /
                       static_cast<double>(size) / folds;
  }

  std::size_t best = 0;
  for (std::size_t l = 1; l < lambdas.size(); ++l)
    if (mean_error[l] < mean_error[best]) best = l;
  return lambdas[best];
}

}  // namespace bbsi
