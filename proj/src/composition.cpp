#include "coda/composition.hpp"

#include "coda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace coda {

namespace {

Eigen::VectorXd resolve_weights(const Eigen::MatrixXd& values, WeightsMode mode,
                                const Eigen::VectorXd& explicit_weights) {
    const auto d = values.cols();
    switch (mode) {
    case WeightsMode::kAverage:
        return values.colwise().mean();
    case WeightsMode::kUniform:
        return Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
    case WeightsMode::kExplicit: {
        if (explicit_weights.size() != d)
            throw parameter_error("explicit weights have size " +
                                  std::to_string(explicit_weights.size()) + ", expected " +
                                  std::to_string(d));
        if (!explicit_weights.allFinite() || (explicit_weights.array() <= 0.0).any())
            throw parameter_error("explicit weights must be strictly positive");
        return explicit_weights / explicit_weights.sum();
    }
    }
    throw parameter_error("unknown weights mode");
}

} // namespace

CompositionMatrix::CompositionMatrix(Eigen::MatrixXd values, std::vector<std::string> part_names,
                                     std::vector<std::string> sample_ids, WeightsMode mode,
                                     Eigen::VectorXd explicit_weights)
    : values_(std::move(values)), part_names_(std::move(part_names)),
      sample_ids_(std::move(sample_ids)), mode_(mode) {
    const auto n = values_.rows();
    const auto d = values_.cols();
    if (d < 2)
        throw parameter_error("a composition needs at least 2 parts, got " + std::to_string(d));
    if (n < 1)
        throw parameter_error("composition matrix has no rows");
    if (static_cast<Eigen::Index>(part_names_.size()) != d)
        throw parameter_error("part_names size " + std::to_string(part_names_.size()) +
                              " does not match " + std::to_string(d) + " columns");
    if (static_cast<Eigen::Index>(sample_ids_.size()) != n)
        throw parameter_error("sample_ids size " + std::to_string(sample_ids_.size()) +
                              " does not match " + std::to_string(n) + " rows");
    std::unordered_set<std::string> seen;
    for (const auto& p : part_names_)
        if (!seen.insert(p).second)
            throw parameter_error("duplicate part name '" + p + "'");
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double v = values_(i, j);
            if (!std::isfinite(v) || v < 0.0)
                throw domain_error("sample '" + sample_ids_[static_cast<size_t>(i)] +
                                   "', part '" + part_names_[static_cast<size_t>(j)] +
                                   "': entries must be finite and non-negative");
        }
        if (std::abs(values_.row(i).sum() - 1.0) > 1e-12)
            throw domain_error("sample '" + sample_ids_[static_cast<size_t>(i)] +
                               "' does not sum to 1; close the data first");
    }
    weights_ = resolve_weights(values_, mode_, explicit_weights);
}

Eigen::Index CompositionMatrix::part_index(const std::string& name) const {
    for (size_t j = 0; j < part_names_.size(); ++j)
        if (part_names_[j] == name)
            return static_cast<Eigen::Index>(j);
    throw lookup_error("unknown part '" + name + "'");
}

bool CompositionMatrix::strictly_positive() const {
    return (values_.array() > 0.0).all();
}

CompositionMatrix close(const Eigen::MatrixXd& raw, std::vector<std::string> part_names,
                        std::vector<std::string> sample_ids, WeightsMode mode,
                        Eigen::VectorXd explicit_weights) {
    if (raw.cols() < 2)
        throw parameter_error("a composition needs at least 2 parts, got " +
                              std::to_string(raw.cols()));
    Eigen::MatrixXd closed = raw;
    for (Eigen::Index i = 0; i < closed.rows(); ++i) {
        for (Eigen::Index j = 0; j < closed.cols(); ++j) {
            const double v = closed(i, j);
            if (!std::isfinite(v) || v < 0.0) {
                const std::string id = i < static_cast<Eigen::Index>(sample_ids.size())
                                           ? sample_ids[static_cast<size_t>(i)]
                                           : std::to_string(i);
                throw domain_error("sample '" + id +
                                   "': entries must be finite and non-negative");
            }
        }
        const double total = closed.row(i).sum();
        if (!(total > 0.0)) {
            const std::string id = i < static_cast<Eigen::Index>(sample_ids.size())
                                       ? sample_ids[static_cast<size_t>(i)]
                                       : std::to_string(i);
            throw degenerate_data_error("sample '" + id + "' has zero total; cannot close");
        }
        closed.row(i) /= total;
    }
    return CompositionMatrix(std::move(closed), std::move(part_names), std::move(sample_ids),
                             mode, std::move(explicit_weights));
}

double geometric_mean(const Eigen::VectorXd& v) {
    if (v.size() == 0)
        throw parameter_error("geometric mean of an empty vector");
    if (!(v.array() > 0.0).all())
        throw domain_error("geometric mean requires strictly positive entries");
    return std::exp(v.array().log().mean());
}

namespace {

// log geometric mean of row i over the column subset
double log_gmean_subset(const Eigen::MatrixXd& x, Eigen::Index i,
                        const std::vector<Eigen::Index>& cols) {
    double s = 0.0;
    for (const auto j : cols)
        s += std::log(x(i, j));
    return s / static_cast<double>(cols.size());
}

// Euclidean distance of CLR coordinates over parts positive in both rows.
// Closure constants cancel inside CLR so raw values are fine here.
double shared_clr_distance(const Eigen::MatrixXd& x, Eigen::Index a, Eigen::Index b) {
    std::vector<Eigen::Index> shared;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (x(a, j) > 0.0 && x(b, j) > 0.0)
            shared.push_back(j);
    if (shared.size() < 2)
        return std::numeric_limits<double>::infinity();
    const double ga = log_gmean_subset(x, a, shared);
    const double gb = log_gmean_subset(x, b, shared);
    double q = 0.0;
    for (const auto j : shared) {
        const double diff = (std::log(x(a, j)) - ga) - (std::log(x(b, j)) - gb);
        q += diff * diff;
    }
    return std::sqrt(q);
}

double median_inplace(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    if (v.size() % 2 == 1)
        return v[m];
    return 0.5 * (v[m - 1] + v[m]);
}

} // namespace

CompositionMatrix replace_zeros_knn(const CompositionMatrix& m, int k) {
    if (k < 1)
        throw parameter_error("k must be at least 1, got " + std::to_string(k));
    const Eigen::MatrixXd& x = m.values();
    const auto n = x.rows();
    const auto d = x.cols();

    bool any_zero = false;
    for (Eigen::Index j = 0; j < d && !any_zero; ++j)
        any_zero = (x.col(j).array() == 0.0).any();
    if (!any_zero)
        return m;

    // every zero-bearing part needs at least k strictly positive rows to donate
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto donors = (x.col(j).array() > 0.0).count();
        if (donors == n)
            continue;
        if (donors == 0)
            throw degenerate_data_error("part '" + m.part_names()[static_cast<size_t>(j)] +
                                        "' is zero in every sample; it cannot be imputed");
        if (donors < k)
            throw parameter_error("part '" + m.part_names()[static_cast<size_t>(j)] + "' has only " +
                                  std::to_string(donors) + " positive samples, fewer than k=" +
                                  std::to_string(k));
    }

    Eigen::MatrixXd out = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Eigen::Index> zero_cols;
        for (Eigen::Index j = 0; j < d; ++j)
            if (x(i, j) == 0.0)
                zero_cols.push_back(j);
        if (zero_cols.empty())
            continue;

        // distances to all other rows, ties broken by row index for determinism
        std::vector<std::pair<double, Eigen::Index>> dist;
        dist.reserve(static_cast<size_t>(n) - 1);
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i)
                dist.emplace_back(shared_clr_distance(x, i, j), j);
        std::sort(dist.begin(), dist.end());

        double imputed_total = 0.0;
        for (const auto t : zero_cols) {
            std::vector<double> candidates;
            candidates.reserve(static_cast<size_t>(k));
            for (const auto& [dij, j] : dist) {
                if (x(j, t) <= 0.0)
                    continue;
                if (!std::isfinite(dij))
                    throw degenerate_data_error(
                        "sample '" + m.sample_ids()[static_cast<size_t>(i)] +
                        "' shares too few positive parts with its donors");
                std::vector<Eigen::Index> shared;
                for (Eigen::Index c = 0; c < d; ++c)
                    if (x(i, c) > 0.0 && x(j, c) > 0.0)
                        shared.push_back(c);
                const double scale =
                    std::exp(log_gmean_subset(x, i, shared) - log_gmean_subset(x, j, shared));
                candidates.push_back(x(j, t) * scale);
                if (candidates.size() == static_cast<size_t>(k))
                    break;
            }
            const double z = median_inplace(candidates);
            out(i, t) = z;
            imputed_total += z;
        }
        if (imputed_total >= 1.0)
            throw degenerate_data_error("sample '" + m.sample_ids()[static_cast<size_t>(i)] +
                                        "': imputed mass is not smaller than the row total");
        // shrink the originally positive parts; their ratios are preserved
        for (Eigen::Index j = 0; j < d; ++j)
            if (x(i, j) > 0.0)
                out(i, j) = x(i, j) * (1.0 - imputed_total);
    }
    return close(out, m.part_names(), m.sample_ids(), m.weights_mode(),
                 m.weights_mode() == WeightsMode::kExplicit ? m.weights() : Eigen::VectorXd());
}

CompositionMatrix subcomposition(const CompositionMatrix& m,
                                 const std::vector<std::string>& parts) {
    if (parts.size() < 2)
        throw parameter_error("a subcomposition needs at least 2 parts");
    std::vector<Eigen::Index> idx;
    idx.reserve(parts.size());
    std::unordered_set<std::string> seen;
    for (const auto& p : parts) {
        if (!seen.insert(p).second)
            throw parameter_error("part '" + p + "' requested twice");
        idx.push_back(m.part_index(p));
    }
    Eigen::MatrixXd sub(m.n_samples(), static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j)
        sub.col(static_cast<Eigen::Index>(j)) = m.values().col(idx[j]);
    Eigen::VectorXd w(static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j)
        w(static_cast<Eigen::Index>(j)) = m.weights()(idx[j]);
    return close(sub, parts, m.sample_ids(), WeightsMode::kExplicit, w);
}

} // namespace coda
