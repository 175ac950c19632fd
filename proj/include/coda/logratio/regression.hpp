#pragma once

#include "coda/composition.hpp"
#include "coda/logratio/basis.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coda {

/// Columns of the design belonging to one covariate (a categorical covariate
/// contributes one column per non-reference level). Used for hypothesis tests.
struct CovariateGroup {
    std::string name;
    std::vector<Eigen::Index> columns;
};

/// n x p design with an all-ones first column. `encodings` records how
/// categorical levels were mapped to dummy values (covariate -> level -> value).
struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> covariate_names;
    std::vector<CovariateGroup> groups;
    std::map<std::string, std::map<std::string, double>> encodings;
};

/// Build and validate a design matrix. Groups default to one per non-intercept
/// column. Throws collinearity_error naming dependent columns when the matrix
/// is rank deficient.
DesignMatrix make_design(Eigen::MatrixXd values, std::vector<std::string> covariate_names,
                         std::vector<CovariateGroup> groups = {},
                         std::map<std::string, std::map<std::string, double>> encodings = {});

/// Re-check the invariants of an existing design (intercept column, n > p,
/// full column rank).
void validate_design(const DesignMatrix& x);

struct ManovaRow {
    std::string covariate;
    double pillai = 0.0;
    double approx_f = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 1.0;
};

/// Case-resampling bootstrap summary. All matrices are on the log scale;
/// exponentiate bounds for multiplicative effects.
struct BootstrapSummary {
    Eigen::MatrixXd coef_lo, coef_hi, coef_p; // m x p, 95% percentile bounds
    Eigen::MatrixXd phi_lo, phi_hi, phi_p;    // p x D
    int replicates = 0;
    int discarded = 0;
    bool discard_warning = false; // more than 5% of resamples were unusable
};

struct LogRatioRegressionFit {
    LogRatioBasis basis;
    DesignMatrix design;
    Eigen::MatrixXd coefficients;   // m x p, coordinate by covariate
    Eigen::MatrixXd multiplicative; // exp(coefficients)
    Eigen::MatrixXd log_contrast;   // p x D, zero-sum rows
    Eigen::MatrixXd fitted;         // n x m
    Eigen::MatrixXd residuals;      // n x m
    std::optional<BootstrapSummary> bootstrap;
    std::vector<ManovaRow> manova;
};

/// Per-coordinate ordinary least squares of the basis coordinates on x.
LogRatioRegressionFit fit_logratio_regression(const CompositionMatrix& m,
                                              const LogRatioBasis& basis,
                                              const DesignMatrix& x);

/// Map per-coordinate coefficients to part-level log-contrast coefficients:
/// for each covariate the minimum-norm zero-sum solution of
/// q_matrix * phi = coefficients, which is identical whichever complete basis
/// produced the fit.
Eigen::MatrixXd to_log_contrast(const LogRatioRegressionFit& fit);

/// Case-resampling percentile bootstrap (rows of m and x resampled jointly).
/// Deterministic for a fixed seed at any thread count; threads = 0 picks the
/// hardware concurrency.
BootstrapSummary bootstrap_coefficients(const CompositionMatrix& m, const LogRatioBasis& basis,
                                        const DesignMatrix& x, int replicates,
                                        std::uint64_t seed, int threads = 1);

/// Pillai trace per covariate group with type-II hypothesis matrices and the
/// standard F approximation. CLR input is projected to a full-rank basis
/// first.
std::vector<ManovaRow> manova_pillai(const CompositionMatrix& m, const LogRatioBasis& basis,
                                     const DesignMatrix& x);

} // namespace coda
