#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bbsi/errors.hpp"

namespace bbsi {

/// Knot layout of a natural cubic spline basis.
///
/// Columns: with include_intercept == false the basis spans the natural
/// cubic splines on the knots modulo constants (df = #interior + 1 columns);
/// with include_intercept == true it also spans constants
/// (df = #interior + 2 columns).
struct SplineSpec {
  std::vector<double> interior_knots;
  double lower = 0.0;
  double upper = 1.0;
  int df = 1;
  bool include_intercept = false;

  /// All knots in increasing order, boundary knots included.
  std::vector<double> knots() const {
    std::vector<double> all;
    all.reserve(interior_knots.size() + 2);
    all.push_back(lower);
    all.insert(all.end(), interior_knots.begin(), interior_knots.end());
    all.push_back(upper);
    return all;
  }

  void validate() const {
    detail::require(df >= 1, "SplineSpec: df must be positive");
    detail::require(std::isfinite(lower) && std::isfinite(upper) && lower < upper,
                    "SplineSpec: boundary knots must be finite and increasing");
    double prev = lower;
    for (double k : interior_knots) {
      detail::require(k > prev, "SplineSpec: interior knots must be strictly increasing");
      prev = k;
    }
    detail::require(prev < upper, "SplineSpec: interior knots must lie inside the boundary");
    const int expected = static_cast<int>(interior_knots.size()) + (include_intercept ? 2 : 1);
    detail::require(expected == df, "SplineSpec: knot count inconsistent with df");
  }
};

/// Linear-interpolation empirical quantile of sorted data.
inline double empirical_quantile(std::span<const double> sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Boundary knots at the data range, interior knots at equally spaced
/// empirical quantiles.
inline SplineSpec fit_spline_spec(std::span<const double> xs, int df,
                                  bool include_intercept = false) {
  if (df < 1) throw DomainError("fit_spline_spec: df must be positive");
  if (include_intercept && df < 2)
    throw DomainError("fit_spline_spec: an intercept basis needs df >= 2");
  std::vector<double> sorted(xs.begin(), xs.end());
  for (double x : sorted)
    if (!std::isfinite(x)) throw DomainError("fit_spline_spec: data must be finite");
  std::sort(sorted.begin(), sorted.end());
  int distinct = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) distinct += sorted[i] != sorted[i - 1];
  if (distinct < std::max(df, 2))
    throw DegenerateInputError("fit_spline_spec: too few distinct covariate values");

  SplineSpec spec;
  spec.df = df;
  spec.include_intercept = include_intercept;
  spec.lower = sorted.front();
  spec.upper = sorted.back();
  const int n_interior = df - (include_intercept ? 2 : 1);
  for (int i = 1; i <= n_interior; ++i)
    spec.interior_knots.push_back(
        empirical_quantile(sorted, static_cast<double>(i) / (n_interior + 1)));
  try {
    spec.validate();
  } catch (const DomainError&) {
    throw DegenerateInputError("fit_spline_spec: quantile knots collapse (heavily tied data)");
  }
  return spec;
}

/// Writes the basis row at x into `out` (length df).
///
/// Truncated-power form with linear tails, evaluated on the coordinate
/// u = (x - lower) / (upper - lower) so that the basis is invariant under
/// affine changes of x.
inline void eval_basis_into(const SplineSpec& spec, double x, Eigen::Ref<Eigen::VectorXd> out) {
  if (!std::isfinite(x)) throw DomainError("eval_basis: x must be finite");
  const double width = spec.upper - spec.lower;
  const double u = (x - spec.lower) / width;
  const auto n_knots = spec.interior_knots.size() + 2;
  const double last = 1.0;
  auto knot = [&](std::size_t k) {
    if (k == 0) return 0.0;
    if (k + 1 == n_knots) return last;
    return (spec.interior_knots[k - 1] - spec.lower) / width;
  };
  auto cube_plus = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  auto d = [&](std::size_t k) {
    return (cube_plus(u - knot(k)) - cube_plus(u - last)) / (last - knot(k));
  };

  Eigen::Index col = 0;
  if (spec.include_intercept) out[col++] = 1.0;
  out[col++] = u;
  if (n_knots >= 3) {
    const double d_ref = d(n_knots - 2);
    for (std::size_t k = 0; k + 2 < n_knots; ++k) out[col++] = d(k) - d_ref;
  }
}

inline Eigen::VectorXd eval_basis(const SplineSpec& spec, double x) {
  Eigen::VectorXd row(spec.df);
  eval_basis_into(spec, x, row);
  return row;
}

inline Eigen::MatrixXd basis_matrix(const SplineSpec& spec, std::span<const double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), spec.df);
  Eigen::VectorXd row(spec.df);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    eval_basis_into(spec, xs[i], row);
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

}  // namespace bbsi
