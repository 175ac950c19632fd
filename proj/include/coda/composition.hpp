#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace coda {

/// How part weights are derived when a composition matrix is built or
/// transformed (imputation, subcomposition).
enum class WeightsMode {
    kAverage,  ///< column means of the closed matrix (default)
    kUniform,  ///< 1/D for every part
    kExplicit, ///< caller-supplied, renormalized to sum 1
};

/// n x D matrix of compositions: non-negative rows summing to 1, with part
/// names, sample ids and per-part weights. Immutable after construction;
/// operations return new values.
class CompositionMatrix {
public:
    CompositionMatrix(Eigen::MatrixXd values, std::vector<std::string> part_names,
                      std::vector<std::string> sample_ids,
                      WeightsMode mode = WeightsMode::kAverage,
                      Eigen::VectorXd explicit_weights = Eigen::VectorXd());

    const Eigen::MatrixXd& values() const { return values_; }
    const std::vector<std::string>& part_names() const { return part_names_; }
    const std::vector<std::string>& sample_ids() const { return sample_ids_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    WeightsMode weights_mode() const { return mode_; }

    Eigen::Index n_samples() const { return values_.rows(); }
    Eigen::Index n_parts() const { return values_.cols(); }

    /// Column index of a part; throws lookup_error for unknown names.
    Eigen::Index part_index(const std::string& name) const;

    bool strictly_positive() const;

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> part_names_;
    std::vector<std::string> sample_ids_;
    Eigen::VectorXd weights_;
    WeightsMode mode_;
};

/// Divide each row by its sum. Rows must be non-negative with positive sum.
CompositionMatrix close(const Eigen::MatrixXd& raw, std::vector<std::string> part_names,
                        std::vector<std::string> sample_ids,
                        WeightsMode mode = WeightsMode::kAverage,
                        Eigen::VectorXd explicit_weights = Eigen::VectorXd());

/// Geometric mean of a strictly positive vector, computed in log space.
double geometric_mean(const Eigen::VectorXd& v);

/// Replace zero entries using the k nearest complete neighbours.
///
/// Distance between two rows is the Euclidean distance of the CLR
/// coordinates over the parts positive in both. For each zero cell the k
/// nearest donor rows positive in that part contribute their value for it,
/// rescaled by the recipient/donor ratio of geometric means over the parts
/// shared with the recipient; the imputed value is the median. Non-zero
/// parts are then shrunk multiplicatively so the row still sums to 1,
/// which leaves their mutual ratios untouched.
CompositionMatrix replace_zeros_knn(const CompositionMatrix& m, int k = 5);

/// Restrict to a subset of parts (>= 2), re-closing each row. Weights are
/// the parent weights renormalized over the subset.
CompositionMatrix subcomposition(const CompositionMatrix& m,
                                 const std::vector<std::string>& parts);

} // namespace coda
