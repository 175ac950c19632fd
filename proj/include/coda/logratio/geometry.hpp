#pragma once

#include "coda/composition.hpp"
#include "coda/logratio/basis.hpp"

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace coda {

/// Weighted log-ratio analysis: SVD of the doubly weighted, double-centered
/// log matrix (row masses 1/n, column masses = part weights).
struct LraResult {
    Eigen::MatrixXd row_scores;         // n x r principal coordinates
    Eigen::MatrixXd column_loadings;    // D x r contribution coordinates
    Eigen::VectorXd variance_explained; // r proportions, non-increasing
    double total_variance = 0.0;
};

struct AlrRankEntry {
    std::string part;
    double weight;
    double correlation;
};

struct DiscriminantAxis {
    Eigen::VectorXd axis;   // D entries, weighted sum zero
    Eigen::VectorXd scores; // n projections
    LraResult residual_lra; // geometry left after removing the axis
};

struct GroupStats {
    std::string label;
    Eigen::Index count = 0;
    double mean = 0.0;
    double lo50 = 0.0, hi50 = 0.0;
    double lo95 = 0.0, hi95 = 0.0;
};

struct GroupMeanSummary {
    std::array<GroupStats, 2> groups;
    double t_statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
};

/// Total weighted log-ratio variance: sum_d w_d Var(CLR_d) with weighted
/// centering and 1/n variances. Equals the weighted average of all pairwise
/// log-ratio variances.
double total_logratio_variance(const CompositionMatrix& m);

/// Similarity in [0, 1] between the basis-coordinate configuration and the
/// weighted log-ratio geometry, fitting rotation plus isotropic scaling after
/// centering both configurations.
double procrustes_correlation(const CompositionMatrix& m, const LogRatioBasis& basis);

/// Try each part as the ALR denominator; rows sorted by correlation, best
/// first.
std::vector<AlrRankEntry> rank_alr_denominators(const CompositionMatrix& m);

/// Rank-r weighted log-ratio analysis. r must be in [1, min(n-1, D-1)].
LraResult weighted_lra(const CompositionMatrix& m, Eigen::Index rank);

/// Axis through the weighted CLR group-mean difference, normalized in the
/// weighted metric; scores are weighted projections onto it; residual_lra
/// decomposes what is left.
DiscriminantAxis discriminant_axis(const CompositionMatrix& m,
                                   const std::vector<std::string>& groups);

/// Per row, log of (sum of numerator parts / sum of denominator parts).
Eigen::VectorXd summated_logratio(const CompositionMatrix& m,
                                  const std::vector<std::string>& numerator,
                                  const std::vector<std::string>& denominator);

/// Group means with percentile-bootstrap 50% and 95% intervals of the mean,
/// plus a two-sided Welch t-test. Exactly two groups, each with >= 2 values.
GroupMeanSummary group_mean_summary(const Eigen::VectorXd& values,
                                    const std::vector<std::string>& groups, std::uint64_t seed,
                                    int replicates = 10000);

} // namespace coda
