#include "coda/logratio/regression.hpp"

#include "coda/errors.hpp"
#include "coda/numerics/quantile.hpp"
#include "coda/numerics/rng.hpp"
#include "coda/numerics/special_functions.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_set>

namespace coda {

namespace {

std::vector<std::string> dependent_columns(const Eigen::MatrixXd& values,
                                           const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(values);
    const auto rank = qr.rank();
    std::vector<std::string> dep;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < values.cols(); ++j)
        dep.push_back(names[static_cast<size_t>(perm(j))]);
    std::sort(dep.begin(), dep.end());
    return dep;
}

} // namespace

DesignMatrix make_design(Eigen::MatrixXd values, std::vector<std::string> covariate_names,
                         std::vector<CovariateGroup> groups,
                         std::map<std::string, std::map<std::string, double>> encodings) {
    DesignMatrix x;
    x.values = std::move(values);
    x.covariate_names = std::move(covariate_names);
    if (groups.empty()) {
        for (Eigen::Index j = 1; j < x.values.cols(); ++j)
            groups.push_back({x.covariate_names.size() > static_cast<size_t>(j)
                                  ? x.covariate_names[static_cast<size_t>(j)]
                                  : std::to_string(j),
                              {j}});
    }
    x.groups = std::move(groups);
    x.encodings = std::move(encodings);
    validate_design(x);
    return x;
}

void validate_design(const DesignMatrix& x) {
    const auto n = x.values.rows();
    const auto p = x.values.cols();
    if (p < 1)
        throw parameter_error("design matrix has no columns");
    if (static_cast<Eigen::Index>(x.covariate_names.size()) != p)
        throw parameter_error("design needs one name per column");
    if (!x.values.allFinite())
        throw domain_error("design matrix entries must be finite");
    if (!(x.values.col(0).array() == 1.0).all())
        throw parameter_error("first design column must be the all-ones intercept");
    if (n <= p)
        throw parameter_error("need more samples than design columns (n=" + std::to_string(n) +
                              ", p=" + std::to_string(p) + ")");
    std::unordered_set<std::string> seen;
    for (const auto& name : x.covariate_names)
        if (!seen.insert(name).second)
            throw parameter_error("duplicate covariate name '" + name + "'");
    for (const auto& g : x.groups)
        for (const auto c : g.columns)
            if (c < 1 || c >= p)
                throw parameter_error("covariate group '" + g.name +
                                      "' references an invalid column");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.values);
    if (qr.rank() < p) {
        auto dep = dependent_columns(x.values, x.covariate_names);
        std::string msg = "design matrix is rank deficient; dependent columns:";
        for (const auto& name : dep)
            msg += " '" + name + "'";
        throw collinearity_error(msg, std::move(dep));
    }
}

namespace {

// minimum-norm zero-sum solve of q_matrix * phi = beta per covariate;
// identical for every complete basis over the same parts
Eigen::MatrixXd log_contrast_from(const LogRatioBasis& basis, const Eigen::MatrixXd& coefficients) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(basis.q_matrix);
    return cod.solve(coefficients).transpose(); // p x D
}

} // namespace

LogRatioRegressionFit fit_logratio_regression(const CompositionMatrix& m,
                                              const LogRatioBasis& basis,
                                              const DesignMatrix& x) {
    validate_design(x);
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    const Eigen::MatrixXd y = transform(m, basis);

    LogRatioRegressionFit fit;
    fit.basis = basis;
    fit.design = x;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(x.values);
    const Eigen::MatrixXd c = qr.solve(y); // p x m
    fit.coefficients = c.transpose();      // m x p
    fit.multiplicative = fit.coefficients.array().exp();
    fit.fitted = x.values * c;
    fit.residuals = y - fit.fitted;
    fit.log_contrast = log_contrast_from(basis, fit.coefficients);
    return fit;
}

Eigen::MatrixXd to_log_contrast(const LogRatioRegressionFit& fit) {
    if (fit.coefficients.rows() != fit.basis.q_matrix.rows())
        throw inconsistency_error("coefficient rows do not match the basis coordinates");
    return log_contrast_from(fit.basis, fit.coefficients);
}

namespace {

struct Replicate {
    Eigen::MatrixXd coef; // m x p
    Eigen::MatrixXd phi;  // p x D
    bool kept = false;
};

// smallest grid level at which the percentile interval excludes zero
double interval_inversion_p(const std::vector<double>& sorted) {
    const auto b = sorted.size();
    const auto excluded = [&](double alpha) {
        return quantile_sorted(sorted, alpha / 2.0) > 0.0 ||
               quantile_sorted(sorted, 1.0 - alpha / 2.0) < 0.0;
    };
    size_t lo = 0, hi = b;
    while (lo < hi) {
        const size_t mid = lo + (hi - lo) / 2;
        if (excluded(static_cast<double>(mid) / static_cast<double>(b)))
            hi = mid;
        else
            lo = mid + 1;
    }
    return static_cast<double>(lo) / static_cast<double>(b);
}

} // namespace

BootstrapSummary bootstrap_coefficients(const CompositionMatrix& m, const LogRatioBasis& basis,
                                        const DesignMatrix& x, int replicates,
                                        std::uint64_t seed, int threads) {
    if (replicates < 100)
        throw parameter_error("bootstrap needs at least 100 replicates, got " +
                              std::to_string(replicates));
    validate_design(x);
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    const Eigen::MatrixXd y = transform(m, basis);
    const auto n = m.n_samples();
    const auto p = x.values.cols();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(basis.q_matrix);

    const numerics::Rng base(seed);
    std::vector<Replicate> reps(static_cast<size_t>(replicates));
    int nthreads = threads == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : threads;
    nthreads = std::clamp(nthreads, 1, replicates);

    const auto worker = [&](int lo, int hi) {
        Eigen::MatrixXd xb(n, p), yb(n, y.cols());
        for (int b = lo; b < hi; ++b) {
            numerics::Rng sub = base.substream("bootstrap/case", static_cast<std::uint64_t>(b));
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto pick = static_cast<Eigen::Index>(sub.uniform_index(
                    static_cast<std::uint64_t>(n)));
                xb.row(i) = x.values.row(pick);
                yb.row(i) = y.row(pick);
            }
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xb);
            if (qr.rank() < p)
                continue; // unusable resample, counted below
            auto& rep = reps[static_cast<size_t>(b)];
            const Eigen::MatrixXd c = qr.solve(yb);
            rep.coef = c.transpose();
            rep.phi = cod.solve(rep.coef).transpose();
            rep.kept = true;
        }
    };

    if (nthreads == 1) {
        worker(0, replicates);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (replicates + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const int lo = t * chunk;
            const int hi = std::min(replicates, lo + chunk);
            if (lo < hi)
                pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool)
            th.join();
    }

    BootstrapSummary out;
    out.replicates = replicates;
    for (const auto& rep : reps)
        if (!rep.kept)
            ++out.discarded;
    out.discard_warning = out.discarded * 20 > replicates;
    const int kept = replicates - out.discarded;
    if (kept < 2)
        throw degenerate_data_error("nearly every bootstrap resample was rank deficient");

    const auto mcoords = y.cols();
    const auto d = static_cast<Eigen::Index>(basis.part_names.size());
    out.coef_lo.resize(mcoords, p);
    out.coef_hi.resize(mcoords, p);
    out.coef_p.resize(mcoords, p);
    out.phi_lo.resize(p, d);
    out.phi_hi.resize(p, d);
    out.phi_p.resize(p, d);

    std::vector<double> cell;
    cell.reserve(static_cast<size_t>(kept));
    const auto summarize = [&](auto getter, Eigen::Index rows, Eigen::Index cols,
                               Eigen::MatrixXd& lo, Eigen::MatrixXd& hi, Eigen::MatrixXd& pv) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                cell.clear();
                for (const auto& rep : reps)
                    if (rep.kept)
                        cell.push_back(getter(rep)(r, c));
                std::sort(cell.begin(), cell.end());
                lo(r, c) = quantile_sorted(cell, 0.025);
                hi(r, c) = quantile_sorted(cell, 0.975);
                pv(r, c) = interval_inversion_p(cell);
            }
        }
    };
    summarize([](const Replicate& r) -> const Eigen::MatrixXd& { return r.coef; }, mcoords, p,
              out.coef_lo, out.coef_hi, out.coef_p);
    summarize([](const Replicate& r) -> const Eigen::MatrixXd& { return r.phi; }, p, d,
              out.phi_lo, out.phi_hi, out.phi_p);
    return out;
}

std::vector<ManovaRow> manova_pillai(const CompositionMatrix& m, const LogRatioBasis& basis,
                                     const DesignMatrix& x) {
    validate_design(x);
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    // CLR coordinates have a singular covariance; test in an orthonormal
    // full-rank basis instead (the trace is invariant to that choice)
    const Eigen::MatrixXd y = basis.kind == BasisKind::kClr
                                  ? transform(m, ilr_basis(basis.part_names))
                                  : transform(m, basis);
    const auto n = x.values.rows();
    const auto p = x.values.cols();
    const auto mc = y.cols();
    if (n <= p + mc)
        throw parameter_error("too few samples for the hypothesis test (need n > p + " +
                              std::to_string(mc) + ")");

    const auto residual_crossprod = [&y](const Eigen::MatrixXd& design) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
        const Eigen::MatrixXd r = y - design * qr.solve(y);
        return Eigen::MatrixXd(r.transpose() * r);
    };
    const Eigen::MatrixXd e = residual_crossprod(x.values);

    std::vector<ManovaRow> rows;
    for (const auto& g : x.groups) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index j = 0; j < p; ++j)
            if (std::find(g.columns.begin(), g.columns.end(), j) == g.columns.end())
                keep.push_back(j);
        Eigen::MatrixXd reduced(n, static_cast<Eigen::Index>(keep.size()));
        for (size_t j = 0; j < keep.size(); ++j)
            reduced.col(static_cast<Eigen::Index>(j)) = x.values.col(keep[j]);

        Eigen::MatrixXd h = residual_crossprod(reduced) - e;
        h = 0.5 * (h + h.transpose()).eval();
        const Eigen::MatrixXd he = h + e;
        Eigen::LLT<Eigen::MatrixXd> llt(he);
        if (llt.info() != Eigen::Success)
            throw degenerate_data_error("residual cross-product is singular; "
                                        "covariate '" + g.name + "' cannot be tested");

        const double q = static_cast<double>(g.columns.size());
        const double md = static_cast<double>(mc);
        const double s = std::min(q, md);
        double v = llt.solve(h).trace();
        v = std::clamp(v, 0.0, s);
        const double big_m = (std::abs(q - md) - 1.0) / 2.0;
        const double big_n = (static_cast<double>(n - p) - md - 1.0) / 2.0;
        const double df1 = s * (2.0 * big_m + s + 1.0);
        const double df2 = s * (2.0 * big_n + s + 1.0);

        ManovaRow row;
        row.covariate = g.name;
        row.pillai = v;
        row.df1 = df1;
        row.df2 = df2;
        if (s - v <= 1e-14) {
            row.approx_f = std::numeric_limits<double>::infinity();
            row.p_value = 0.0;
        } else {
            row.approx_f = (2.0 * big_n + s + 1.0) / (2.0 * big_m + s + 1.0) * v / (s - v);
            row.p_value = 1.0 - numerics::f_cdf(row.approx_f, df1, df2);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace coda
