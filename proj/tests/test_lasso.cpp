#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bbsi/lasso.hpp"
#include "bbsi/stream.hpp"
#include "oracles.hpp"

using namespace bbsi;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& engine) {
  std::normal_distribution<double> dist;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(engine);
  return m;
}

GramProblem random_problem(int n, int p, std::uint64_t seed) {
  auto engine = SeededStream(seed).engine();
  const Eigen::MatrixXd X = gaussian_matrix(n, p, engine);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < std::min(p, 3); ++j) beta[j] = 2.0 - j;
  const Eigen::VectorXd y = X * beta + gaussian_matrix(n, 1, engine).col(0);
  return GramProblem(X.transpose() * X, X.transpose() * y);
}

}  // namespace

TEST_CASE("identity Gram gives soft thresholding exactly", "[lasso]") {
  const Eigen::VectorXd c = (Eigen::VectorXd(6) << 3.0, -2.5, 0.4, -0.1, 1.0, 0.0).finished();
  const GramProblem problem(Eigen::MatrixXd::Identity(6, 6), c);
  for (double lambda : {0.05, 0.5, 1.0, 2.7}) {
    const Eigen::VectorXd beta = lasso_cd(problem, lambda);
    for (int j = 0; j < 6; ++j) CHECK(beta[j] == soft_threshold(c[j], lambda));
  }
}

TEST_CASE("coordinate descent satisfies KKT on random problems", "[lasso]") {
  for (int trial = 0; trial < 120; ++trial) {
    const int p = 2 + trial % 15;
    const int n = trial % 3 == 0 ? p / 2 + 1 : 3 * p;  // includes rank-deficient Grams
    const auto problem = random_problem(n, p, 1000 + trial);
    const double lambda_max = problem.xty.cwiseAbs().maxCoeff();
    for (double frac : {0.9, 0.3, 0.05}) {
      const double lambda = frac * lambda_max;
      const Eigen::VectorXd beta = lasso_cd(problem, lambda);
      REQUIRE(kkt_violation(problem.gram, problem.xty, beta, lambda) <= 1e-8);
    }
  }
}

TEST_CASE("coordinate descent matches proximal gradient", "[lasso]") {
  const auto problem = random_problem(40, 10, 77);
  const double lambda = 0.2 * problem.xty.cwiseAbs().maxCoeff();
  const Eigen::VectorXd cd = lasso_cd(problem, lambda);
  const Eigen::VectorXd ista = oracle::lasso_proximal_gradient(problem.gram, problem.xty, lambda, 200000);
  CHECK((cd - ista).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(lasso_objective(problem.gram, problem.xty, cd, lambda) <=
        lasso_objective(problem.gram, problem.xty, ista, lambda) + 1e-9);
}

TEST_CASE("lasso path is warm-started and consistent", "[lasso]") {
  const auto problem = random_problem(60, 12, 5);
  const auto grid = default_lambda_grid(problem.xty.cwiseAbs().maxCoeff());
  REQUIRE(grid.size() == 100);
  CHECK(grid.front() == problem.xty.cwiseAbs().maxCoeff());
  CHECK(grid.back() == Catch::Approx(grid.front() / 100.0));
  const auto path = lasso_path(problem, grid);
  CHECK(path.supports.front().empty());
  for (std::size_t i = 0; i < grid.size(); i += 9) {
    const Eigen::VectorXd beta = path.betas.col(static_cast<Eigen::Index>(i));
    CHECK(kkt_violation(problem.gram, problem.xty, beta, grid[i]) <= 1e-8);
    CHECK(path.supports[i] == support_of(beta));
  }
  CHECK_THROWS_AS(lasso_path(problem, {1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(lasso_path(problem, {1.0, -1.0}), DomainError);
}

TEST_CASE("input validation", "[lasso]") {
  CHECK_THROWS_AS(GramProblem(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(2)),
                  DomainError);
  Eigen::MatrixXd zero_diag = Eigen::MatrixXd::Identity(2, 2);
  zero_diag(1, 1) = 0.0;
  CHECK_THROWS_AS(GramProblem(zero_diag, Eigen::VectorXd::Zero(2)), DomainError);
  const GramProblem ok(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(2));
  CHECK_THROWS_AS(lasso_cd(ok, 0.0), DomainError);
  CHECK_THROWS_AS(lasso_cd(ok, 1.0, Eigen::VectorXd::Zero(3)), DomainError);
}

TEST_CASE("lambda_range", "[lasso]") {
  SECTION("identity Gram: support grows one variable per threshold") {
    // c = (10, 9, ..., 1): support size at lambda is #{c_j > lambda}.
    const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(10, 10.0, 1.0);
    const auto range = lambda_range(GramProblem(Eigen::MatrixXd::Identity(10, 10), c));
    CHECK(range.lambda_max == 10.0);
    // cap = floor(sqrt(8)) = 2, so lambda_min is the smallest grid value >= 8.
    const auto grid = default_lambda_grid(10.0);
    double expected = grid.front();
    for (double l : grid)
      if (l >= 8.0) expected = l;
    CHECK(range.lambda_min == expected);
  }
  SECTION("cap") {
    CHECK(stability_support_cap(20) == 4);
    CHECK(stability_support_cap(100) == 8);
    CHECK(stability_support_cap(5) == 2);
  }
  SECTION("zero response is degenerate") {
    CHECK_THROWS_AS(lambda_range(GramProblem(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3))),
                    DegenerateInputError);
  }
}

TEST_CASE("cv_lambda", "[lasso]") {
  auto engine = SeededStream(99).engine();
  const Eigen::MatrixXd X = gaussian_matrix(100, 8, engine);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(8);
  beta[0] = 3.0;
  beta[1] = -2.0;

  SECTION("deterministic for a fixed stream") {
    const Eigen::VectorXd y = X * beta + gaussian_matrix(100, 1, engine).col(0);
    const auto grid = default_lambda_grid((X.transpose() * y).cwiseAbs().maxCoeff());
    CHECK(cv_lambda(X, y, 5, grid, SeededStream(1)) == cv_lambda(X, y, 5, grid, SeededStream(1)));
  }

  SECTION("strong signal selects a small penalty") {
    const Eigen::VectorXd y = X * beta + 0.1 * gaussian_matrix(100, 1, engine).col(0);
    const auto grid = default_lambda_grid((X.transpose() * y).cwiseAbs().maxCoeff());
    const double chosen = cv_lambda(X, y, 5, grid, SeededStream(2));
    CHECK(chosen < 0.1 * grid.front());
    const auto fit = lasso_cd(GramProblem(X.transpose() * X, X.transpose() * y), chosen);
    CHECK(fit[0] > 2.5);
    CHECK(fit[1] < -1.5);
  }

  SECTION("ties go to the larger penalty") {
    // Every penalty above max|X'y| of each training set predicts zero, so all
    // errors tie and the first (largest) value is returned.
    const Eigen::VectorXd y = gaussian_matrix(100, 1, engine).col(0);
    const double big = 1e6 * (X.transpose() * y).cwiseAbs().maxCoeff();
    const std::vector<double> grid{3.0 * big, 2.0 * big, big};
    CHECK(cv_lambda(X, y, 5, grid, SeededStream(3)) == 3.0 * big);
  }

  SECTION("validation") {
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(100);
    CHECK_THROWS_AS(cv_lambda(X, y, 1, {1.0}, SeededStream(0)), DomainError);
    CHECK_THROWS_AS(cv_lambda(X.topRows(6), y.head(6), 5, {1.0}, SeededStream(0)), DomainError);
  }
}
