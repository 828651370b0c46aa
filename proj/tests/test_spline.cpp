#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bbsi/spline.hpp"
#include "bbsi/stream.hpp"

using namespace bbsi;

namespace {

std::vector<double> normal_draws(int n, std::uint64_t seed) {
  auto engine = SeededStream(seed).engine();
  std::normal_distribution<double> dist;
  std::vector<double> xs(n);
  for (auto& x : xs) x = dist(engine);
  return xs;
}

}  // namespace

TEST_CASE("knots sit at equally spaced quantiles", "[spline]") {
  std::vector<double> xs;
  for (int i = 0; i <= 100; ++i) xs.push_back(i);
  const auto spec = fit_spline_spec(xs, 5);
  CHECK(spec.df == 5);
  CHECK(spec.lower == 0.0);
  CHECK(spec.upper == 100.0);
  REQUIRE(spec.interior_knots.size() == 4);
  CHECK(spec.interior_knots[0] == Catch::Approx(20.0));
  CHECK(spec.interior_knots[1] == Catch::Approx(40.0));
  CHECK(spec.interior_knots[2] == Catch::Approx(60.0));
  CHECK(spec.interior_knots[3] == Catch::Approx(80.0));
  CHECK(spec.knots().size() == 6);
}

TEST_CASE("basis is linear beyond the boundary knots", "[spline]") {
  const auto xs = normal_draws(500, 1);
  const auto spec = fit_spline_spec(xs, 10);
  for (double base : {spec.lower - 5.0, spec.upper + 1.0}) {
    const double dir = base < spec.lower ? -1.0 : 1.0;
    const Eigen::VectorXd b0 = eval_basis(spec, base);
    const Eigen::VectorXd b1 = eval_basis(spec, base + dir);
    const Eigen::VectorXd b2 = eval_basis(spec, base + 2 * dir);
    CHECK((b2 - 2 * b1 + b0).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("basis is continuous with continuous first two derivatives", "[spline]") {
  const auto xs = normal_draws(400, 2);
  const auto spec = fit_spline_spec(xs, 8);
  const double h = 1e-5;
  for (double k : spec.knots()) {
    const Eigen::VectorXd left = eval_basis(spec, k - h);
    const Eigen::VectorXd mid = eval_basis(spec, k);
    const Eigen::VectorXd right = eval_basis(spec, k + h);
    CHECK((left - mid).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((right - mid).cwiseAbs().maxCoeff() < 1e-3);
    const Eigen::VectorXd d_left = (mid - eval_basis(spec, k - 2 * h)) / h;
    const Eigen::VectorXd d_right = (eval_basis(spec, k + 2 * h) - mid) / h;
    CHECK((d_left - d_right).cwiseAbs().maxCoeff() < 1e-2);
  }
}

TEST_CASE("least squares on the basis reproduces linear functions", "[spline]") {
  const auto xs = normal_draws(300, 3);
  const auto spec = fit_spline_spec(xs, 6, true);
  const Eigen::MatrixXd design = basis_matrix(spec, xs);
  Eigen::VectorXd y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) y[static_cast<Eigen::Index>(i)] = 2.0 - 3.0 * xs[i];
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
  CHECK((design * coef - y).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("design has full column rank", "[spline]") {
  const auto xs = normal_draws(1000, 4);
  for (int df : {1, 2, 5, 10}) {
    const auto spec = fit_spline_spec(xs, df);
    Eigen::MatrixXd design(static_cast<Eigen::Index>(xs.size()), df + 1);
    design.col(0).setOnes();
    design.rightCols(df) = basis_matrix(spec, xs);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    CHECK(qr.rank() == df + 1);
  }
}

TEST_CASE("df = 1 is the rescaled identity", "[spline]") {
  const std::vector<double> xs{-2.0, 0.0, 1.0, 2.0};
  const auto spec = fit_spline_spec(xs, 1);
  CHECK(spec.interior_knots.empty());
  CHECK(eval_basis(spec, -2.0)[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(eval_basis(spec, 2.0)[0] == Catch::Approx(1.0));
  CHECK(eval_basis(spec, 6.0)[0] == Catch::Approx(2.0));
}

TEST_CASE("basis is invariant under affine changes of the data", "[spline]") {
  const auto xs = normal_draws(200, 5);
  std::vector<double> shifted(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) shifted[i] = 4.0 * xs[i] - 7.0;
  const auto a = fit_spline_spec(xs, 7);
  const auto b = fit_spline_spec(shifted, 7);
  for (std::size_t i = 0; i < xs.size(); i += 17)
    CHECK((eval_basis(a, xs[i]) - eval_basis(b, shifted[i])).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate inputs are rejected", "[spline]") {
  const std::vector<double> constant(50, 1.5);
  CHECK_THROWS_AS(fit_spline_spec(constant, 3), DegenerateInputError);

  std::vector<double> tied(100, 0.0);
  tied[99] = 1.0;
  tied[98] = 2.0;
  tied[97] = 3.0;
  CHECK_THROWS_AS(fit_spline_spec(tied, 3), DegenerateInputError);

  const std::vector<double> few{0.0, 1.0, 2.0};
  CHECK_THROWS_AS(fit_spline_spec(few, 10), DegenerateInputError);
  CHECK_THROWS_AS(fit_spline_spec(few, 0), DomainError);

  const std::vector<double> bad{0.0, NAN, 2.0};
  CHECK_THROWS_AS(fit_spline_spec(bad, 1), DomainError);
}
