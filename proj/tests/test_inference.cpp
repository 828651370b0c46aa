#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bbsi/inference.hpp"
#include "bbsi/io.hpp"
#include "oracles.hpp"

using namespace bbsi;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_spd(int p, std::uint64_t seed) {
  auto engine = SeededStream(seed).engine();
  std::normal_distribution<double> dist;
  Eigen::MatrixXd X(3 * p, p);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = dist(engine);
  return X.transpose() * X;
}

}  // namespace

TEST_CASE("full-model decomposition", "[inference][decomposition]") {
  SECTION("identity Gram") {
    const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    const auto t = decompose_full(d, 2, Eigen::MatrixXd::Identity(4, 4), 1.0);
    CHECK(t.stat_obs == Approx(3.0));
    CHECK(t.target_var == Approx(1.0));
    CHECK((t.direction - Eigen::VectorXd::Unit(4, 2)).norm() < 1e-15);
    CHECK(t.n_obs[2] == Approx(0.0).margin(1e-15));
  }

  SECTION("reconstruction and independence of N and T") {
    const int p = 5;
    const Eigen::MatrixXd gram = random_spd(p, 1);
    const double sigma2 = 2.0;
    const Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(p, -1.0, 1.0);
    const auto factor = CovarianceFactor::from_covariance(sigma2 * gram);
    const SeededStream root(2);
    const int draws = 20000;
    Eigen::VectorXd sum_nt = Eigen::VectorXd::Zero(p), sum_n = Eigen::VectorXd::Zero(p);
    double sum_t = 0.0, sum_tt = 0.0;
    double target_var = 0.0;
    for (int i = 0; i < draws; ++i) {
      const Eigen::VectorXd d = mvn_sample(gram * beta, factor, root.child(i));
      const auto t = decompose_full(d, 1, gram, sigma2);
      if (i == 0) CHECK((t.data_at(t.stat_obs) - d).cwiseAbs().maxCoeff() < 1e-10);
      target_var = t.target_var;
      sum_nt += t.n_obs * t.stat_obs;
      sum_n += t.n_obs;
      sum_t += t.stat_obs;
      sum_tt += t.stat_obs * t.stat_obs;
    }
    const double mean_t = sum_t / draws;
    CHECK(mean_t == Approx(beta[1]).margin(5.0 * std::sqrt(target_var / draws)));
    CHECK(sum_tt / draws - mean_t * mean_t == Approx(target_var).epsilon(0.05));
    const Eigen::VectorXd cov = sum_nt / draws - (sum_n / draws) * mean_t;
    const Eigen::VectorXd n_sd = (sigma2 * gram.diagonal()).cwiseSqrt();
    for (int j = 0; j < p; ++j) CHECK(std::abs(cov[j]) < 5.0 * n_sd[j] * std::sqrt(target_var / draws));
  }

  SECTION("validation") {
    const Eigen::VectorXd d = Eigen::VectorXd::Ones(2);
    Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(2, 2);
    CHECK_THROWS_AS(decompose_full(d, 0, singular, 1.0), DomainError);
    CHECK_THROWS_AS(decompose_full(d, 5, Eigen::MatrixXd::Identity(2, 2), 1.0), DomainError);
    CHECK_THROWS_AS(decompose_full(d, 0, Eigen::MatrixXd::Identity(2, 2), 0.0), DomainError);
  }
}

TEST_CASE("partial-model decomposition", "[inference][decomposition]") {
  const int p = 6;
  const Eigen::MatrixXd gram = random_spd(p, 3);
  const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(p, -2.0, 3.0);

  SECTION("active set covering all variables gives the full target") {
    const std::vector<int> all{0, 1, 2, 3, 4, 5};
    for (int j = 0; j < p; ++j) {
      const auto a = decompose_partial(d, all, j, gram, 1.5);
      const auto b = decompose_full(d, j, gram, 1.5);
      CHECK(a.stat_obs == Approx(b.stat_obs).epsilon(1e-10));
      CHECK(a.target_var == Approx(b.target_var).epsilon(1e-10));
      CHECK((a.direction - b.direction).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SECTION("submodel target matches the least-squares coefficient") {
    const std::vector<int> active{1, 4};
    const auto t = decompose_partial(d, active, 1, gram, 1.0);
    Eigen::Matrix2d g;
    g << gram(1, 1), gram(1, 4), gram(4, 1), gram(4, 4);
    const Eigen::Vector2d coef = g.ldlt().solve(Eigen::Vector2d(d[1], d[4]));
    CHECK(t.stat_obs == Approx(coef[1]).epsilon(1e-10));
    CHECK(t.target_var == Approx(g.inverse()(1, 1)).epsilon(1e-10));
    CHECK((t.data_at(t.stat_obs) - d).cwiseAbs().maxCoeff() < 1e-10);
  }

  CHECK_THROWS_AS(decompose_partial(d, {}, 0, gram, 1.0), DomainError);
  CHECK_THROWS_AS(decompose_partial(d, {0}, 1, gram, 1.0), DomainError);
}

TEST_CASE("general decomposition", "[inference][decomposition]") {
  const int p = 4;
  const Eigen::MatrixXd gram = random_spd(p, 4);
  const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(p, 0.5, 2.0);
  const double sigma2 = 0.7;

  SECTION("scalar linear statistic reproduces the full target") {
    const Eigen::VectorXd a = gram.ldlt().solve(Eigen::VectorXd::Unit(p, 2));  // T = a'D
    const Eigen::MatrixXd cov_dt = sigma2 * gram * a;
    const Eigen::MatrixXd cov_t = Eigen::MatrixXd::Constant(1, 1, sigma2 * a.dot(gram * a));
    const auto general = decompose_general(d, Eigen::VectorXd::Constant(1, a.dot(d)), cov_dt, cov_t).scalar();
    const auto full = decompose_full(d, 2, gram, sigma2);
    CHECK(general.stat_obs == Approx(full.stat_obs).epsilon(1e-10));
    CHECK(general.target_var == Approx(full.target_var).epsilon(1e-10));
    CHECK((general.direction - full.direction).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("T = D leaves no nuisance") {
    const Eigen::MatrixXd cov = sigma2 * gram;
    const auto g = decompose_general(d, d, cov, cov);
    CHECK(g.n_obs.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((g.direction - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_THROWS_AS(g.scalar(), DomainError);
  }
}

TEST_CASE("covariate sampling", "[inference][learning]") {
  const int count = 200000;
  const auto zs = sample_covariates(1.5, 2.0, count, SeededStream(5));
  double sum = 0.0, sumsq = 0.0;
  for (double z : zs) {
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / count;
  const double var = sumsq / count - mean * mean;
  const double expected_var = 7.5 / 4.0 * 4.0;
  CHECK(mean == Approx(1.5).margin(5.0 * std::sqrt(expected_var / count)));
  CHECK(var == Approx(expected_var).epsilon(0.02));
  CHECK(sample_covariates(0.0, 1.0, 10, SeededStream(7)) == sample_covariates(0.0, 1.0, 10, SeededStream(7)));
  CHECK_THROWS_AS(sample_covariates(0.0, 0.0, 10, SeededStream(7)), DomainError);
}

TEST_CASE("label generation and fitting", "[inference][learning]") {
  SimpleThresholdParams params;
  const auto spec = SelectorSpec::simple_threshold(params);
  TargetDecomposition decomp;
  decomp.n_obs = Eigen::VectorXd::Zero(1);
  decomp.direction = Eigen::VectorXd::Ones(1);
  decomp.target_var = 0.01;
  decomp.stat_obs = 0.15;
  const auto zs = sample_covariates(decomp.stat_obs, decomp.target_sd(), 4000, SeededStream(8));

  SECTION("direct labels are reproducible and thread independent") {
    const auto a = generate_labels(spec, decomp, zs, LabelTarget::contains(0), LabelMode::direct, SeededStream(9), 1);
    const auto b = generate_labels(spec, decomp, zs, LabelTarget::contains(0), LabelMode::direct, SeededStream(9), 3);
    CHECK(a.ws == b.ws);
    CHECK(a.zs == b.zs);
    CHECK(a.m_agg == 1);
    CHECK(a.dropped == 0);
  }

  SECTION("fitted curve tracks the exact selection probability") {
    const auto sample = generate_labels(spec, decomp, zs, LabelTarget::contains(0), LabelMode::direct, SeededStream(10));
    const auto s_hat = estimate_selection_prob(sample, Link::probit);
    CHECK_FALSE(s_hat.is_fallback());
    for (double x = 0.0; x <= 0.3; x += 0.05) {
      const double truth = binom_sf(params.m, params.success_probability(x), params.q * params.m);
      CHECK(std::abs(s_hat(x) - truth) < 0.1);
    }
  }

  SECTION("binomial-component mode composes through the binomial tail") {
    const auto sample = generate_labels(spec, decomp, zs, LabelTarget::contains(0),
                                        LabelMode::binomial_component, SeededStream(11));
    CHECK(sample.m_agg == params.m);
    CHECK(sample.q_threshold == params.q);
    const auto s_hat = estimate_selection_prob(sample, Link::logit);
    for (double x : {0.0, 0.1, 0.2}) {
      CHECK(s_hat(x) == Approx(binom_sf(params.m, s_hat.component(x), params.q * params.m)).margin(1e-15));
      CHECK(std::abs(s_hat.component(x) - params.success_probability(x)) < 0.05);
    }
  }

  SECTION("constant labels fall back to a clamped constant") {
    SimpleThresholdParams always = params;
    always.tau = -INFINITY;
    const auto sample = generate_labels(SelectorSpec::simple_threshold(always), decomp, zs,
                                        LabelTarget::contains(0), LabelMode::direct, SeededStream(12));
    const auto s_hat = estimate_selection_prob(sample, Link::probit);
    CHECK(s_hat.is_fallback());
    CHECK(s_hat(0.0) == 1.0 - 1e-6);
  }

  SECTION("dimension mismatch") {
    TargetDecomposition bad = decomp;
    bad.n_obs = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(generate_labels(spec, bad, zs, LabelTarget::contains(0), LabelMode::direct, SeededStream(0)),
                    DomainError);
  }
}

TEST_CASE("density grid without selection is the normal law", "[inference][grid]") {
  const double center = 0.4, var = 2.0, sd = std::sqrt(var);
  const auto grid = build_density_grid([](double) { return 1.0; }, center, var);
  CHECK(grid.grid.size() == 2401);
  for (double mu : {-1.0, 0.4, 2.0}) {
    const auto mass = grid.masses(mu);
    double total = 0.0;
    for (double m : mass) total += m;
    CHECK(total == Approx(1.0).margin(1e-12));
    for (double x = center - 4 * sd; x <= center + 4 * sd; x += 0.37 * sd)
      CHECK(std::abs(grid.cdf(mu, x) - oracle::phi_cdf((x - mu) / sd)) < 1e-4);
  }
  CHECK_THROWS_AS(grid.cdf(0.0, center + 13 * sd), RangeError);
}

TEST_CASE("density grid with a step selection is the truncated normal", "[inference][grid]") {
  const double center = 1.0, var = 1.0, c = 0.3;
  const auto grid = build_density_grid([c](double x) { return x > c ? 1.0 : 0.0; }, center, var);
  for (double mu : {-1.0, 0.0, 1.0, 2.5}) {
    for (double x = c + 0.01; x < center + 5.0; x += 0.29)
      CHECK(std::abs(grid.cdf(mu, x) - oracle::truncated_normal_cdf(x, mu, 1.0, c)) < 1e-3);
    CHECK(grid.cdf(mu, c - 0.5) == 0.0);
  }
}

TEST_CASE("unselected inference reproduces classical z procedures", "[inference][ci]") {
  const double x_obs = 0.8, var = 0.25, sd = 0.5;
  const auto grid = build_density_grid([](double) { return 1.0; }, x_obs, var);
  const auto naive = naive_inference(x_obs, var, 0.0, 0.05);
  CHECK(selective_pvalue(grid, 0.0, x_obs) == Approx(naive.pvalue).margin(1e-4));
  CHECK(selective_pvalue(grid, 0.0, x_obs, Alternative::greater) == Approx(norm_sf(x_obs / sd)).margin(1e-4));
  const auto ci = selective_ci(grid, x_obs, 0.05);
  CHECK(ci.lo == Approx(naive.ci.lo).margin(1e-3 * sd));
  CHECK(ci.hi == Approx(naive.ci.hi).margin(1e-3 * sd));
  CHECK_FALSE(ci.lo_clamped);
  CHECK_FALSE(ci.hi_clamped);
  CHECK(naive.ci.length() == Approx(2 * 1.959964 * sd).epsilon(1e-6));
  CHECK(naive.pivot == Approx(norm_cdf(x_obs / sd)));
}

TEST_CASE("selective interval matches brute-force inversion", "[inference][ci]") {
  const double c = 0.0, x_obs = 0.9;
  const auto grid = build_density_grid([c](double x) { return x > c ? 1.0 : 0.0; }, x_obs, 1.0);
  const auto ci = selective_ci(grid, x_obs, 0.1);
  auto pivot = [&](double mu) { return oracle::truncated_normal_cdf(x_obs, mu, 1.0, c); };
  const double lo = oracle::brute_force_inversion(pivot, 0.95, x_obs - 8.0, x_obs + 1.0, 1e-4);
  const double hi = oracle::brute_force_inversion(pivot, 0.05, x_obs - 1.0, x_obs + 8.0, 1e-4);
  CHECK(ci.lo == Approx(lo).margin(1e-3));
  CHECK(ci.hi == Approx(hi).margin(1e-3));
  CHECK(ci.covers(x_obs));
}

TEST_CASE("unbracketed endpoints are clamped and flagged", "[inference][ci]") {
  // Selection only far in the right tail: the lower endpoint runs off.
  const auto grid = build_density_grid([](double x) { return x > 0.0 ? 1.0 : 0.0; }, 0.001, 1.0);
  const auto ci = selective_ci(grid, 0.001, 0.05);
  CHECK(ci.lo_clamped);
  CHECK(ci.lo == Approx(0.001 - 16.0));
  CHECK_FALSE(ci.hi_clamped);
}

TEST_CASE("selection probability JSON round trip", "[inference][io]") {
  LearningSample sample;
  const auto zs = sample_covariates(0.0, 1.0, 500, SeededStream(20));
  auto engine = SeededStream(21).engine();
  std::uniform_real_distribution<double> u;
  for (double z : zs) {
    sample.zs.push_back(z);
    sample.ws.push_back(u(engine) < norm_cdf(z) ? 1 : 0);
  }
  sample.mode = LabelMode::binomial_component;
  sample.m_agg = 3;
  sample.q_threshold = 2.0 / 3.0;

  const auto back = learning_sample_from_json(nlohmann::json::parse(to_json(sample).dump()));
  CHECK(back.zs == sample.zs);
  CHECK(back.ws == sample.ws);
  CHECK(back.mode == sample.mode);
  CHECK(back.m_agg == 3);

  const auto s_hat = estimate_selection_prob(sample, Link::logit, 6);
  const auto restored = learned_selection_prob_from_json(nlohmann::json::parse(to_json(s_hat).dump()));
  for (double x = -2.0; x <= 2.0; x += 0.1) CHECK(restored(x) == Approx(s_hat(x)).margin(1e-14));

  const auto constant = LearnedSelectionProb::constant(0.3, Link::probit, LabelMode::direct, 1, 0.5);
  CHECK(learned_selection_prob_from_json(to_json(constant))(1.0) == 0.3);
  CHECK_THROWS_AS(learned_selection_prob_from_json(nlohmann::json::parse("{\"mode\": \"direct\"}")), DomainError);
}
