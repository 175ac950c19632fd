#pragma once

#include "coda/composition.hpp"

#include <Eigen/Core>
#include <string>
#include <vector>

namespace coda {

enum class BasisKind { kAlr, kClr, kIlr };

/// A log-ratio coordinate system: coordinates = log(v) * q_matrix^T.
/// Every row of q_matrix sums to zero, so coordinates are scale invariant.
struct LogRatioBasis {
    BasisKind kind;
    Eigen::MatrixXd q_matrix; // m x D, m = D-1 except CLR where m = D
    std::vector<std::string> part_names;
    std::vector<std::string> coordinate_names;
    Eigen::Index denominator_index = -1; // ALR only
};

/// One split of a sequential binary partition: parts in `numerator` are
/// contrasted against parts in `denominator`.
struct ContrastNode {
    std::vector<std::string> numerator;
    std::vector<std::string> denominator;
};

/// Coordinate j is log(v_j / v_denominator) over parts in order, skipping
/// the denominator.
LogRatioBasis alr_basis(const std::vector<std::string>& parts, const std::string& denominator);

/// Coordinate d is log(v_d / g(v)), g the row geometric mean. D coordinates,
/// summing to zero.
LogRatioBasis clr_basis(const std::vector<std::string>& parts);

/// Pivot coordinates in the given order (default: parts order). Coordinate j
/// is sqrt((D-j)/(D-j+1)) * log(v_j / g(v_{j+1}..v_D)). Rows orthonormal.
LogRatioBasis ilr_basis(const std::vector<std::string>& parts);
LogRatioBasis ilr_basis(const std::vector<std::string>& parts,
                        const std::vector<std::string>& pivot_order);

/// Balance coordinates from a sequential binary partition (D-1 nodes). The
/// resulting rows must come out orthonormal or the tree is rejected.
LogRatioBasis ilr_basis(const std::vector<std::string>& parts,
                        const std::vector<ContrastNode>& tree);

/// log(values) * q_matrix^T, one coordinate row per sample.
Eigen::MatrixXd transform(const CompositionMatrix& m, const LogRatioBasis& basis);

/// Map coordinates back to closed compositions. CLR rows must sum to zero
/// within 1e-8. Sample ids default to "1".."n".
CompositionMatrix inverse_transform(const Eigen::MatrixXd& coords, const LogRatioBasis& basis,
                                    std::vector<std::string> sample_ids = {});

} // namespace coda
