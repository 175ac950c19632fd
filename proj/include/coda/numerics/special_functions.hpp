#pragma once

namespace coda::numerics {

/// log Gamma(x) for x > 0. Relative accuracy ~1e-13 over [1e-6, 1e6]
/// (absolute near the roots at x = 1 and x = 2).
double log_gamma(double x);

/// Digamma function psi(x) = d/dx log Gamma(x), x > 0.
double digamma(double x);

/// Trigamma function psi'(x), x > 0.
double trigamma(double x);

/// Regularized incomplete beta function I_x(a, b), x in [0, 1], a, b > 0.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of the F distribution with df1, df2 > 0 degrees of freedom, x >= 0.
double f_cdf(double x, double df1, double df2);

/// Standard normal CDF.
double normal_cdf(double z);

} // namespace coda::numerics
