#include "coda/logratio/geometry.hpp"

#include "coda/errors.hpp"
#include "coda/numerics/quantile.hpp"
#include "coda/numerics/rng.hpp"
#include "coda/numerics/special_functions.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace coda {

namespace {

// log values centered per row with the part weights; columns then carry the
// weighted CLR coordinates
Eigen::MatrixXd weighted_clr(const CompositionMatrix& m) {
    if (!m.strictly_positive())
        throw domain_error("log-ratio geometry needs strictly positive entries; "
                           "run zero replacement first");
    Eigen::MatrixXd logv = m.values().array().log();
    const Eigen::VectorXd row_center = logv * m.weights();
    logv.colwise() -= row_center;
    return logv;
}

struct LraCore {
    Eigen::MatrixXd row_scores;
    Eigen::MatrixXd column_loadings;
    Eigen::VectorXd variance_explained;
    double total_variance;
};

// SVD machinery shared by weighted_lra and the discriminant residual. Z is
// any n x D matrix living in the log scale; double centering happens here.
LraCore lra_core(Eigen::MatrixXd z, const Eigen::VectorXd& weights, Eigen::Index rank) {
    const auto n = z.rows();
    const auto d = z.cols();
    const Eigen::VectorXd row_center = z * weights;
    z.colwise() -= row_center;
    z.rowwise() -= z.colwise().mean();

    Eigen::MatrixXd s = z * weights.cwiseSqrt().asDiagonal();
    s /= std::sqrt(static_cast<double>(n));
    Eigen::BDCSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sigma = svd.singularValues();
    const double total = sigma.squaredNorm();

    Eigen::MatrixXd u = svd.matrixU().leftCols(rank);
    Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
    // pin a sign per component so results do not depend on SVD internals
    for (Eigen::Index k = 0; k < rank; ++k) {
        Eigen::Index arg = 0;
        v.col(k).cwiseAbs().maxCoeff(&arg);
        if (v(arg, k) < 0.0) {
            v.col(k) = -v.col(k);
            u.col(k) = -u.col(k);
        }
    }

    LraCore out;
    out.row_scores = std::sqrt(static_cast<double>(n)) * u * sigma.head(rank).asDiagonal();
    out.column_loadings = v;
    out.variance_explained = Eigen::VectorXd::Zero(rank);
    if (total > 0.0)
        out.variance_explained = sigma.head(rank).array().square() / total;
    out.total_variance = total;
    (void)d;
    return out;
}

LraResult to_result(LraCore&& core) {
    LraResult r;
    r.row_scores = std::move(core.row_scores);
    r.column_loadings = std::move(core.column_loadings);
    r.variance_explained = std::move(core.variance_explained);
    r.total_variance = core.total_variance;
    return r;
}

} // namespace

double total_logratio_variance(const CompositionMatrix& m) {
    if (m.n_samples() < 2)
        throw degenerate_data_error("variance needs at least 2 samples");
    const Eigen::MatrixXd w = weighted_clr(m);
    const Eigen::RowVectorXd means = w.colwise().mean();
    double total = 0.0;
    for (Eigen::Index d = 0; d < w.cols(); ++d) {
        // population (1/n) variance, matching the singular value decomposition
        const double var = (w.col(d).array() - means(d)).square().mean();
        total += m.weights()(d) * var;
    }
    return total;
}

double procrustes_correlation(const CompositionMatrix& m, const LogRatioBasis& basis) {
    Eigen::MatrixXd x = transform(m, basis);
    x.rowwise() -= x.colwise().mean().eval();
    Eigen::MatrixXd y = weighted_clr(m) * m.weights().cwiseSqrt().asDiagonal();
    y.rowwise() -= y.colwise().mean().eval();
    const double nx = x.norm();
    const double ny = y.norm();
    if (!(nx > 1e-12) || !(ny > 1e-12))
        throw degenerate_data_error("zero-variance configuration; similarity is undefined");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x.transpose() * y);
    const double corr = svd.singularValues().sum() / (nx * ny);
    return std::clamp(corr, 0.0, 1.0);
}

std::vector<AlrRankEntry> rank_alr_denominators(const CompositionMatrix& m) {
    std::vector<AlrRankEntry> table;
    table.reserve(static_cast<size_t>(m.n_parts()));
    for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
        const auto& part = m.part_names()[static_cast<size_t>(d)];
        table.push_back({part, m.weights()(d),
                         procrustes_correlation(m, alr_basis(m.part_names(), part))});
    }
    std::sort(table.begin(), table.end(), [](const AlrRankEntry& a, const AlrRankEntry& b) {
        if (a.correlation != b.correlation)
            return a.correlation > b.correlation;
        if (a.weight != b.weight)
            return a.weight > b.weight;
        return a.part < b.part;
    });
    return table;
}

LraResult weighted_lra(const CompositionMatrix& m, Eigen::Index rank) {
    const auto max_rank = std::min(m.n_samples() - 1, m.n_parts() - 1);
    if (rank < 1 || rank > max_rank)
        throw parameter_error("rank must be between 1 and " + std::to_string(max_rank) +
                              ", got " + std::to_string(rank));
    if (!(m.weights().array() > 0.0).all())
        throw parameter_error("log-ratio analysis needs strictly positive part weights");
    if (!m.strictly_positive())
        throw domain_error("log-ratio geometry needs strictly positive entries; "
                           "run zero replacement first");
    return to_result(lra_core(m.values().array().log(), m.weights(), rank));
}

DiscriminantAxis discriminant_axis(const CompositionMatrix& m,
                                   const std::vector<std::string>& groups) {
    const auto n = m.n_samples();
    if (static_cast<Eigen::Index>(groups.size()) != n)
        throw parameter_error("group labels must match the number of samples");
    std::set<std::string> labels(groups.begin(), groups.end());
    if (labels.size() != 2)
        throw parameter_error("discriminant axis needs exactly two groups, got " +
                              std::to_string(labels.size()));
    if (!(m.weights().array() > 0.0).all())
        throw parameter_error("log-ratio analysis needs strictly positive part weights");
    const std::string first = *labels.begin();

    const Eigen::MatrixXd w = weighted_clr(m);
    Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(m.n_parts());
    Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(m.n_parts());
    Eigen::Index na = 0, nb = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (groups[static_cast<size_t>(i)] == first) {
            mean_a += w.row(i);
            ++na;
        } else {
            mean_b += w.row(i);
            ++nb;
        }
    }
    mean_a /= static_cast<double>(na);
    mean_b /= static_cast<double>(nb);

    Eigen::VectorXd diff = mean_a - mean_b;
    const double norm_w = std::sqrt(diff.array().square().matrix().dot(m.weights()));
    if (!(norm_w > 1e-12))
        throw degenerate_data_error("group means coincide; the axis is undefined");

    DiscriminantAxis out;
    out.axis = diff / norm_w;
    out.scores = w * m.weights().asDiagonal() * out.axis;
    const Eigen::MatrixXd residual = w - out.scores * out.axis.transpose();
    out.residual_lra =
        to_result(lra_core(residual, m.weights(), std::min(n - 1, m.n_parts() - 1)));
    return out;
}

Eigen::VectorXd summated_logratio(const CompositionMatrix& m,
                                  const std::vector<std::string>& numerator,
                                  const std::vector<std::string>& denominator) {
    if (numerator.empty() || denominator.empty())
        throw parameter_error("numerator and denominator part sets must be non-empty");
    std::set<std::string> num_set(numerator.begin(), numerator.end());
    for (const auto& p : denominator)
        if (num_set.count(p))
            throw parameter_error("part '" + p + "' appears on both sides of the ratio");
    std::vector<Eigen::Index> num_idx, den_idx;
    for (const auto& p : numerator)
        num_idx.push_back(m.part_index(p));
    for (const auto& p : denominator)
        den_idx.push_back(m.part_index(p));

    Eigen::VectorXd out(m.n_samples());
    for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
        double sn = 0.0, sd = 0.0;
        for (const auto j : num_idx)
            sn += m.values()(i, j);
        for (const auto j : den_idx)
            sd += m.values()(i, j);
        if (!(sn > 0.0) || !(sd > 0.0))
            throw domain_error("sample '" + m.sample_ids()[static_cast<size_t>(i)] +
                               "': a summed part group is zero");
        out(i) = std::log(sn / sd);
    }
    return out;
}

namespace {

GroupStats bootstrap_group(const std::string& label, const std::vector<double>& x, numerics::Rng& rng,
                           int replicates) {
    GroupStats g;
    g.label = label;
    g.count = static_cast<Eigen::Index>(x.size());
    double mean = 0.0;
    for (const double v : x)
        mean += v;
    mean /= static_cast<double>(x.size());
    g.mean = mean;

    std::vector<double> means(static_cast<size_t>(replicates));
    for (int b = 0; b < replicates; ++b) {
        numerics::Rng sub = rng.substream("group_mean/" + label, static_cast<std::uint64_t>(b));
        double s = 0.0;
        for (size_t i = 0; i < x.size(); ++i)
            s += x[sub.uniform_index(x.size())];
        means[static_cast<size_t>(b)] = s / static_cast<double>(x.size());
    }
    std::sort(means.begin(), means.end());
    g.lo50 = quantile_sorted(means, 0.25);
    g.hi50 = quantile_sorted(means, 0.75);
    g.lo95 = quantile_sorted(means, 0.025);
    g.hi95 = quantile_sorted(means, 0.975);
    return g;
}

} // namespace

GroupMeanSummary group_mean_summary(const Eigen::VectorXd& values,
                                    const std::vector<std::string>& groups, std::uint64_t seed,
                                    int replicates) {
    if (static_cast<Eigen::Index>(groups.size()) != values.size())
        throw parameter_error("group labels must match the number of values");
    if (replicates < 2)
        throw parameter_error("at least 2 bootstrap replicates are required");
    std::map<std::string, std::vector<double>> by_group;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        by_group[groups[static_cast<size_t>(i)]].push_back(values(i));
    if (by_group.size() != 2)
        throw parameter_error("group summary needs exactly two groups, got " +
                              std::to_string(by_group.size()));
    for (const auto& [label, x] : by_group)
        if (x.size() < 2)
            throw parameter_error("group '" + label + "' has fewer than 2 observations");

    numerics::Rng rng(seed);
    GroupMeanSummary out;
    int slot = 0;
    for (const auto& [label, x] : by_group)
        out.groups[static_cast<size_t>(slot++)] = bootstrap_group(label, x, rng, replicates);

    // Welch two-sample t-test, sample (1/(n-1)) variances
    double var[2];
    for (int gi = 0; gi < 2; ++gi) {
        const auto& x = by_group[out.groups[static_cast<size_t>(gi)].label];
        const double mean = out.groups[static_cast<size_t>(gi)].mean;
        double ss = 0.0;
        for (const double v : x)
            ss += (v - mean) * (v - mean);
        var[gi] = ss / static_cast<double>(x.size() - 1);
    }
    const auto n1 = static_cast<double>(out.groups[0].count);
    const auto n2 = static_cast<double>(out.groups[1].count);
    const double se2 = var[0] / n1 + var[1] / n2;
    if (!(se2 > 0.0))
        throw degenerate_data_error("both groups are constant; the test is undefined");
    out.t_statistic = (out.groups[0].mean - out.groups[1].mean) / std::sqrt(se2);
    out.dof = se2 * se2 /
              ((var[0] / n1) * (var[0] / n1) / (n1 - 1.0) +
               (var[1] / n2) * (var[1] / n2) / (n2 - 1.0));
    out.p_value = 1.0 - numerics::f_cdf(out.t_statistic * out.t_statistic, 1.0, out.dof);
    return out;
}

} // namespace coda
