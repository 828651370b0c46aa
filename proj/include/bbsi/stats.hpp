#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"
#include "bbsi/stream.hpp"

namespace bbsi {

namespace detail {

inline void require_finite(double z, const char* what) {
  if (!std::isfinite(z)) throw DomainError(std::string(what) + ": argument must be finite");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standard normal

inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double norm_logpdf(double z) {
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Upper tail P{Z > z}.
inline double norm_sf(double z) {
  detail::require_finite(z, "norm_sf");
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

inline double norm_cdf(double z) {
  detail::require_finite(z, "norm_cdf");
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// log P{Z > z}, finite for every finite z.
inline double log_norm_sf(double z) {
  detail::require_finite(z, "log_norm_sf");
  if (z < 0.0) return std::log1p(-0.5 * std::erfc(-z / std::numbers::sqrt2));
  if (z < 37.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Mills-ratio expansion; erfc underflows past this point.
  const double inv2 = 1.0 / (z * z);
  return norm_logpdf(z) - std::log(z) +
         std::log1p(-inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2)));
}

inline double log_norm_cdf(double z) { return log_norm_sf(-z); }

/// Inverse of norm_cdf by bisection on the bracketing interval [-39, 39].
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("norm_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  // Solve on the tail that keeps the target representable without cancellation.
  const bool lower = p < 0.5;
  const double target = lower ? p : 1.0 - p;
  double lo = -39.0, hi = 0.0;  // norm_cdf(lo) < target <= norm_cdf(hi)
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (norm_cdf(mid) < target) lo = mid; else hi = mid;
  }
  const double z = 0.5 * (lo + hi);
  return lower ? z : -z;
}

// ---------------------------------------------------------------------------
// Binomial tails

/// Smallest integer count k' with k' >= k, where k within 1e-9 (relative) of an
/// integer counts as that integer. Keeps thresholds such as (2/3)*3 exact.
inline long min_successes(double k) {
  detail::require_finite(k, "min_successes");
  const double nearest = std::round(k);
  if (std::abs(k - nearest) <= 1e-9 * std::max(1.0, std::abs(k))) return static_cast<long>(nearest);
  return static_cast<long>(std::ceil(k));
}

/// P{B >= k} for B ~ Binomial(m, p), by direct summation of the upper terms.
inline double binom_sf(int m, double p, double k) {
  if (m <= 0) throw DomainError("binom_sf: trial count must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binom_sf: p must lie in [0, 1]");
  const long first = min_successes(k);
  if (first <= 0) return 1.0;
  if (first > m) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double log_m_fact = std::lgamma(m + 1.0);
  auto term = [&](long i) {
    const double log_choose = log_m_fact - std::lgamma(i + 1.0) - std::lgamma(m - i + 1.0);
    return std::exp(log_choose + static_cast<double>(i) * log_p +
                    static_cast<double>(m - i) * log_q);
  };
  // Sum whichever tail is lighter so that values near 1 keep full precision.
  const bool upper_is_light = static_cast<double>(first) > static_cast<double>(m) * p;
  double sum = 0.0;
  if (upper_is_light) {
    for (long i = first; i <= m; ++i) sum += term(i);
    return std::clamp(sum, 0.0, 1.0);
  }
  for (long i = 0; i < first; ++i) sum += term(i);
  return std::clamp(1.0 - sum, 0.0, 1.0);
}

/// Bernoulli Kullback-Leibler divergence KL(q || p).
inline double bernoulli_kl(double q, double p) {
  auto term = [](double a, double b) { return a == 0.0 ? 0.0 : a * std::log(a / b); };
  return term(q, p) + term(1.0 - q, 1.0 - p);
}

/// Chernoff large-deviation approximation of P{B >= q m}: exp(-m KL(q||p))
/// on the tail side (q > p) and 1 otherwise.
inline double ld_binom_sf(int m, double p, double q) {
  if (m < 1) throw DomainError("ld_binom_sf: trial count must be positive");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("ld_binom_sf: p must lie in (0, 1)");
  if (!(q > 0.0 && q < 1.0)) throw DomainError("ld_binom_sf: q must lie in (0, 1)");
  if (q <= p) return 1.0;
  return std::exp(-static_cast<double>(m) * bernoulli_kl(q, p));
}

// ---------------------------------------------------------------------------
// Multivariate normal sampling

/// Lower-triangular square root of a covariance matrix.
class CovarianceFactor {
 public:
  CovarianceFactor() = default;

  /// Cholesky factor of a symmetric positive semi-definite matrix. Adds
  /// diagonal jitter up to 1e-10 * trace / dim when the plain factorization
  /// fails; beyond that the matrix is rejected.
  static CovarianceFactor from_covariance(const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols() || cov.rows() == 0)
      throw DomainError("CovarianceFactor: covariance must be square and non-empty");
    if (!cov.allFinite()) throw DomainError("CovarianceFactor: covariance must be finite");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw DomainError("CovarianceFactor: covariance must be symmetric");

    const auto dim = cov.rows();
    if (cov.cwiseAbs().maxCoeff() == 0.0)
      return from_lower(Eigen::MatrixXd::Zero(dim, dim));

    const double max_jitter = 1e-10 * cov.trace() / static_cast<double>(dim);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return from_lower(llt.matrixL());
    for (double jitter = 1e-16 * cov.trace() / static_cast<double>(dim);
         jitter <= max_jitter * (1.0 + 1e-12); jitter *= 10.0) {
      llt.compute(cov + jitter * Eigen::MatrixXd::Identity(dim, dim));
      if (llt.info() == Eigen::Success) return from_lower(llt.matrixL());
    }
    throw DomainError("CovarianceFactor: covariance is not positive semi-definite");
  }

  static CovarianceFactor from_lower(Eigen::MatrixXd lower) {
    if (lower.rows() != lower.cols())
      throw DomainError("CovarianceFactor: factor must be square");
    CovarianceFactor f;
    f.lower_ = std::move(lower);
    f.lower_.triangularView<Eigen::StrictlyUpper>().setZero();
    return f;
  }

  int dim() const { return static_cast<int>(lower_.rows()); }
  const Eigen::MatrixXd& lower() const { return lower_; }
  Eigen::MatrixXd covariance() const { return lower_ * lower_.transpose(); }

 private:
  Eigen::MatrixXd lower_;
};

template <class Engine>
Eigen::VectorXd standard_normal_vector(Eigen::Index dim, Engine& engine) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(dim);
  for (Eigen::Index i = 0; i < dim; ++i) xi[i] = normal(engine);
  return xi;
}

/// mean + L xi with xi drawn from an existing engine.
template <class Engine>
Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const CovarianceFactor& factor,
                           Engine& engine) {
  if (mean.size() != factor.dim()) throw DomainError("mvn_sample: dimension mismatch");
  const Eigen::VectorXd xi = standard_normal_vector(mean.size(), engine);
  return mean + factor.lower().triangularView<Eigen::Lower>() * xi;
}

inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const CovarianceFactor& factor,
                                  const SeededStream& stream) {
  auto engine = stream.engine();
  return mvn_sample(mean, factor, engine);
}

}  // namespace bbsi
