#pragma once

#include "coda/composition.hpp"
#include "coda/logratio/regression.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coda {

/// Log density of the Dirichlet distribution at v (interior of the simplex).
double dirichlet_log_pdf(const Eigen::VectorXd& v, const Eigen::VectorXd& alpha);

struct MarginalMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/// Per-part Beta-marginal mean and variance of a Dirichlet(alpha).
MarginalMoments dirichlet_marginal_moments(const Eigen::VectorXd& alpha);

/// count x D strictly positive rows summing to 1, via normalized Gamma
/// variates. Byte-identical output for a fixed seed.
Eigen::MatrixXd sample_dirichlet(const Eigen::VectorXd& alpha, Eigen::Index count,
                                 std::uint64_t seed);

/// Dirichlet regression with log link: alpha_id = exp(beta_d . x_i).
struct DirichletFit {
    Eigen::MatrixXd beta;            // D x p
    Eigen::MatrixXd alpha_hat;       // n x D
    double log_likelihood = 0.0;
    Eigen::MatrixXd standard_errors; // D x p, from inverse observed information
    Eigen::MatrixXd wald_p;          // D x p, two-sided normal
    bool converged = false;
    int iterations = 0;
};

/// Maximum likelihood fit. Starts from moment-matched intercepts unless
/// `init` is given. A failed optimization yields converged=false with the
/// last iterate rather than an exception.
DirichletFit fit_dirichlet_regression(const CompositionMatrix& m, const DesignMatrix& x,
                                      const std::optional<Eigen::MatrixXd>& init = std::nullopt);

/// Model log-likelihood at arbitrary coefficients (beta is D x p).
double dirichlet_regression_loglik(const CompositionMatrix& m, const DesignMatrix& x,
                                   const Eigen::MatrixXd& beta);

/// Analytic gradient of the log-likelihood: d/dbeta_dk = sum_i alpha_id x_ik s_id.
Eigen::MatrixXd dirichlet_regression_gradient(const CompositionMatrix& m,
                                              const DesignMatrix& x,
                                              const Eigen::MatrixXd& beta);

/// (v_id - fitted mean) / fitted marginal standard deviation.
Eigen::MatrixXd standardized_residuals(const DirichletFit& fit, const CompositionMatrix& m);

/// Per-observation sum of squared standardized residuals.
Eigen::VectorXd composite_residuals(const Eigen::MatrixXd& standardized);

/// s_id = digamma(alpha_i+) - digamma(alpha_id) + log v_id, the per-cell
/// score of the log-likelihood with respect to alpha.
Eigen::MatrixXd score_residuals(const DirichletFit& fit, const CompositionMatrix& m);

/// rho_id = s_id / (trigamma(alpha_id) - trigamma(alpha_i+)); the denominator
/// is positive because trigamma decreases.
Eigen::MatrixXd local_influence(const DirichletFit& fit, const CompositionMatrix& m);

/// One n x D matrix per design column k: delta_id = alpha_id^2 x_ik^2 eta_id
/// with eta_id = trigamma(alpha_i+) - trigamma(alpha_id) + s_id^2.
std::vector<Eigen::MatrixXd> overdispersion_statistics(const DirichletFit& fit,
                                                       const CompositionMatrix& m,
                                                       const DesignMatrix& x);

struct FlaggedObservation {
    Eigen::Index sample = 0;
    std::string sample_id;
    std::string reason;
};

struct DiagnosticsReport {
    Eigen::MatrixXd standardized_residuals;      // n x D
    Eigen::VectorXd composite_residuals;         // n
    Eigen::MatrixXd score_residuals;             // n x D
    Eigen::MatrixXd local_influence;             // n x D
    std::vector<Eigen::MatrixXd> overdispersion; // p matrices, each n x D
    std::vector<FlaggedObservation> flagged;
};

/// Full diagnostic suite: flags the largest overdispersion statistic per
/// (part, non-intercept covariate) and composite residuals above
/// mean + 3 standard deviations.
DiagnosticsReport diagnostics(const DirichletFit& fit, const CompositionMatrix& m,
                              const DesignMatrix& x);

} // namespace coda
