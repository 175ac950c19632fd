#include "coda/dirichlet.hpp"

#include "coda/errors.hpp"
#include "coda/numerics/optimize.hpp"
#include "coda/numerics/rng.hpp"
#include "coda/numerics/special_functions.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

namespace coda {

using numerics::digamma;
using numerics::log_gamma;
using numerics::normal_cdf;
using numerics::trigamma;

double dirichlet_log_pdf(const Eigen::VectorXd& v, const Eigen::VectorXd& alpha) {
    if (v.size() != alpha.size())
        throw inconsistency_error("v and alpha must have the same size");
    if (v.size() < 2)
        throw parameter_error("need at least 2 parts");
    if (!(alpha.array() > 0.0).all())
        throw domain_error("alpha entries must be strictly positive");
    if (!(v.array() > 0.0).all())
        throw domain_error("density is defined on the simplex interior only; "
                           "replace zeros upstream");
    if (std::abs(v.sum() - 1.0) > 1e-8)
        throw domain_error("v must sum to 1");
    double out = log_gamma(alpha.sum());
    for (Eigen::Index d = 0; d < alpha.size(); ++d)
        out += -log_gamma(alpha(d)) + (alpha(d) - 1.0) * std::log(v(d));
    return out;
}

MarginalMoments dirichlet_marginal_moments(const Eigen::VectorXd& alpha) {
    if (alpha.size() < 2 || !(alpha.array() > 0.0).all())
        throw domain_error("alpha must have >= 2 strictly positive entries");
    const double total = alpha.sum();
    MarginalMoments mom;
    mom.mean = alpha / total;
    mom.variance = (alpha.array() * (total - alpha.array()) /
                    (total * total * (total + 1.0)))
                       .matrix();
    return mom;
}

Eigen::MatrixXd sample_dirichlet(const Eigen::VectorXd& alpha, Eigen::Index count,
                                 std::uint64_t seed) {
    if (alpha.size() < 2 || !(alpha.array() > 0.0).all())
        throw domain_error("alpha must have >= 2 strictly positive entries");
    if (count < 1)
        throw parameter_error("count must be at least 1");
    numerics::Rng rng(seed);
    Eigen::MatrixXd out(count, alpha.size());
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index d = 0; d < alpha.size(); ++d)
            out(i, d) = std::max(rng.gamma(alpha(d)), std::numeric_limits<double>::min());
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

namespace {

Eigen::MatrixXd unflatten(const Eigen::VectorXd& theta, Eigen::Index d, Eigen::Index p) {
    Eigen::MatrixXd beta(d, p);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < p; ++c)
            beta(r, c) = theta(r * p + c);
    return beta;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& beta) {
    Eigen::VectorXd theta(beta.size());
    for (Eigen::Index r = 0; r < beta.rows(); ++r)
        for (Eigen::Index c = 0; c < beta.cols(); ++c)
            theta(r * beta.cols() + c) = beta(r, c);
    return theta;
}

struct LikelihoodParts {
    const Eigen::MatrixXd& x;    // n x p design
    const Eigen::MatrixXd& logv; // n x D

    Eigen::MatrixXd alphas(const Eigen::MatrixXd& beta) const {
        return (x * beta.transpose()).array().exp();
    }

    // negative log-likelihood; +inf when the shapes overflow
    double negative_ll(const Eigen::VectorXd& theta) const {
        const Eigen::MatrixXd lin = x * unflatten(theta, logv.cols(), x.cols()).transpose();
        if (!lin.allFinite() || lin.maxCoeff() > 700.0)
            return std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd alpha = lin.array().exp();
        double ll = 0.0;
        for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
            ll += log_gamma(alpha.row(i).sum());
            for (Eigen::Index d = 0; d < alpha.cols(); ++d)
                ll += -log_gamma(alpha(i, d)) + (alpha(i, d) - 1.0) * logv(i, d);
        }
        return -ll;
    }

    // dNLL/dbeta_dk = -sum_i alpha_id x_ik s_id
    Eigen::VectorXd negative_grad(const Eigen::VectorXd& theta) const {
        const Eigen::MatrixXd beta = unflatten(theta, logv.cols(), x.cols());
        const Eigen::MatrixXd alpha = alphas(beta);
        Eigen::MatrixXd weighted(alpha.rows(), alpha.cols());
        for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
            const double dg_total = digamma(alpha.row(i).sum());
            for (Eigen::Index d = 0; d < alpha.cols(); ++d) {
                const double score = dg_total - digamma(alpha(i, d)) + logv(i, d);
                weighted(i, d) = alpha(i, d) * score;
            }
        }
        return flatten(-(weighted.transpose() * x));
    }

    // d2NLL/dbeta_dk dbeta_eh = -sum_i x_ik x_ih [delta_de (alpha_id s_id
    //     - alpha_id^2 trigamma(alpha_id)) + alpha_id alpha_ie trigamma(alpha_i+)]
    Eigen::MatrixXd negative_hessian(const Eigen::VectorXd& theta) const {
        const Eigen::Index dd = logv.cols();
        const Eigen::Index p = x.cols();
        const Eigen::MatrixXd beta = unflatten(theta, dd, p);
        const Eigen::MatrixXd alpha = alphas(beta);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dd * p, dd * p);
        Eigen::MatrixXd outer(p, p);
        for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
            const double total = alpha.row(i).sum();
            const double dg_total = digamma(total);
            const double tg_total = trigamma(total);
            outer.noalias() = x.row(i).transpose() * x.row(i);
            for (Eigen::Index d = 0; d < dd; ++d) {
                const double a = alpha(i, d);
                const double s = dg_total - digamma(a) + logv(i, d);
                const double own = a * s - a * a * trigamma(a);
                for (Eigen::Index e = 0; e < dd; ++e) {
                    double mix = a * alpha(i, e) * tg_total;
                    if (d == e)
                        mix += own;
                    hess.block(d * p, e * p, p, p).noalias() -= mix * outer;
                }
            }
        }
        return hess;
    }
};

Eigen::MatrixXd moment_matched_start(const Eigen::MatrixXd& v, Eigen::Index p) {
    const Eigen::Index n = v.rows();
    const Eigen::RowVectorXd mu = v.colwise().mean();
    double num = 0.0, den = 0.0;
    for (Eigen::Index d = 0; d < v.cols(); ++d) {
        num += mu(d) * (1.0 - mu(d));
        den += (v.col(d).array() - mu(d)).square().sum() / static_cast<double>(n - 1);
    }
    double precision = den > 0.0 ? num / den - 1.0 : 1e6;
    precision = std::clamp(precision, 0.5, 1e6);
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(v.cols(), p);
    for (Eigen::Index d = 0; d < v.cols(); ++d)
        beta(d, 0) = std::log(precision * mu(d));
    return beta;
}

} // namespace

DirichletFit fit_dirichlet_regression(const CompositionMatrix& m, const DesignMatrix& x,
                                      const std::optional<Eigen::MatrixXd>& init) {
    validate_design(x);
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    if (!m.strictly_positive())
        throw domain_error("the likelihood needs strictly positive entries; "
                           "run zero replacement first");
    if (m.n_samples() < 2)
        throw degenerate_data_error("at least 2 samples are required");
    for (Eigen::Index d = 0; d < m.n_parts(); ++d)
        if (m.values().col(d).maxCoeff() < 1e-10)
            throw degenerate_data_error("part '" + m.part_names()[static_cast<size_t>(d)] +
                                        "' is numerically zero in every sample");

    const auto dd = m.n_parts();
    const auto p = x.values.cols();
    Eigen::MatrixXd start;
    if (init) {
        if (init->rows() != dd || init->cols() != p || !init->allFinite())
            throw parameter_error("init must be a finite " + std::to_string(dd) + "x" +
                                  std::to_string(p) + " matrix");
        start = *init;
    } else {
        start = moment_matched_start(m.values(), p);
    }

    // Optimize in standardized covariate coordinates: the linear predictor is
    // invariant under the affine reparameterization, and the solver then sees
    // comparable curvature in every direction even when a covariate spans a
    // range like 40..80. Results are mapped back afterwards.
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
    Eigen::MatrixXd xs = x.values;
    for (Eigen::Index k = 1; k < p; ++k) {
        shift(k) = x.values.col(k).mean();
        const double sd = std::sqrt((x.values.col(k).array() - shift(k)).square().sum() /
                                    static_cast<double>(x.values.rows()));
        if (sd > 0.0)
            scale(k) = sd;
        xs.col(k) = (x.values.col(k).array() - shift(k)) / scale(k);
    }
    const auto to_standardized = [&](Eigen::MatrixXd beta) {
        for (Eigen::Index d = 0; d < beta.rows(); ++d) {
            for (Eigen::Index k = 1; k < p; ++k) {
                beta(d, 0) += beta(d, k) * shift(k);
                beta(d, k) *= scale(k);
            }
        }
        return beta;
    };
    const auto from_standardized = [&](Eigen::MatrixXd beta) {
        for (Eigen::Index d = 0; d < beta.rows(); ++d) {
            for (Eigen::Index k = 1; k < p; ++k) {
                beta(d, k) /= scale(k);
                beta(d, 0) -= beta(d, k) * shift(k);
            }
        }
        return beta;
    };

    const Eigen::MatrixXd logv = m.values().array().log();
    const LikelihoodParts lik{x.values, logv};
    const LikelihoodParts standardized{xs, logv};

    const double tol = numerics::ConvergenceSettings{}.gradient_norm_tol;
    DirichletFit fit;
    Eigen::VectorXd theta = flatten(to_standardized(start));
    if (!std::isfinite(standardized.negative_ll(theta)))
        throw domain_error("log-likelihood is not finite at the starting point");

    // Newton with the analytic observed information. The likelihood flattens
    // to within rounding of its optimum while coefficients still move, so the
    // line search contracts on the gradient norm, which stays resolvable all
    // the way down to the tolerance.
    Eigen::VectorXd grad = standardized.negative_grad(theta);
    int iter = 0;
    bool stuck = false;
    for (; iter < 200 && grad.norm() > tol && !stuck; ++iter) {
        const Eigen::MatrixXd hess = standardized.negative_hessian(theta);
        Eigen::MatrixXd damped = hess;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
        double ridge = 1e-6 * hess.diagonal().cwiseAbs().maxCoeff() + 1e-12;
        while ((ldlt.info() != Eigen::Success ||
                (ldlt.vectorD().array() <= 0.0).any()) &&
               std::isfinite(ridge)) {
            damped = hess + ridge * Eigen::MatrixXd::Identity(hess.rows(), hess.cols());
            ldlt.compute(damped);
            ridge *= 10.0;
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        const double gn = grad.norm();
        double scale_t = 1.0;
        stuck = true;
        for (int bt = 0; bt < 40; ++bt, scale_t *= 0.5) {
            const Eigen::VectorXd trial = theta - scale_t * step;
            const Eigen::VectorXd g_new = standardized.negative_grad(trial);
            if (g_new.allFinite() && g_new.norm() < gn &&
                std::isfinite(standardized.negative_ll(trial))) {
                theta = trial;
                grad = g_new;
                stuck = false;
                break;
            }
        }
    }
    if (grad.norm() > tol) {
        // quasi-Newton rescue for the rare iterate Newton cannot improve
        numerics::OptimizerProblem problem;
        problem.objective = [&standardized](const Eigen::VectorXd& t) {
            return standardized.negative_ll(t);
        };
        problem.gradient = [&standardized](const Eigen::VectorXd& t) {
            return standardized.negative_grad(t);
        };
        problem.initial_point = theta;
        try {
            const numerics::MinimizeResult res = numerics::minimize(problem);
            theta = res.solution;
            iter += static_cast<int>(res.iterations);
        } catch (const numerics::optimization_failure& failed) {
            theta = failed.last_point;
            iter += static_cast<int>(failed.iterations);
        }
        grad = standardized.negative_grad(theta);
    }
    fit.converged = grad.norm() <= tol;
    fit.iterations = iter;
    fit.beta = from_standardized(unflatten(theta, dd, p));
    theta = flatten(fit.beta);
    fit.alpha_hat = lik.alphas(fit.beta);
    fit.log_likelihood = -lik.negative_ll(theta);

    // observed information: central differences on the analytic gradient
    const auto dim = theta.size();
    Eigen::MatrixXd hessian(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta(j)));
        Eigen::VectorXd hi = theta, lo = theta;
        hi(j) += h;
        lo(j) -= h;
        hessian.col(j) = (lik.negative_grad(hi) - lik.negative_grad(lo)) / (2.0 * h);
    }
    hessian = 0.5 * (hessian + hessian.transpose()).eval();

    fit.standard_errors = Eigen::MatrixXd::Constant(dd, p,
                                                    std::numeric_limits<double>::quiet_NaN());
    fit.wald_p = fit.standard_errors;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() == Eigen::Success) {
        const Eigen::MatrixXd cov =
            ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
        for (Eigen::Index d = 0; d < dd; ++d) {
            for (Eigen::Index k = 0; k < p; ++k) {
                const double var = cov(d * p + k, d * p + k);
                if (var > 0.0) {
                    const double se = std::sqrt(var);
                    fit.standard_errors(d, k) = se;
                    const double z = std::abs(fit.beta(d, k)) / se;
                    fit.wald_p(d, k) = 2.0 * (1.0 - normal_cdf(z));
                }
            }
        }
    }
    return fit;
}

namespace {

void check_loglik_inputs(const CompositionMatrix& m, const DesignMatrix& x,
                         const Eigen::MatrixXd& beta) {
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    if (beta.rows() != m.n_parts() || beta.cols() != x.values.cols())
        throw parameter_error("beta must be " + std::to_string(m.n_parts()) + "x" +
                              std::to_string(x.values.cols()));
    if (!m.strictly_positive())
        throw domain_error("the likelihood needs strictly positive entries; "
                           "run zero replacement first");
}

} // namespace

double dirichlet_regression_loglik(const CompositionMatrix& m, const DesignMatrix& x,
                                   const Eigen::MatrixXd& beta) {
    check_loglik_inputs(m, x, beta);
    const Eigen::MatrixXd logv = m.values().array().log();
    const LikelihoodParts lik{x.values, logv};
    return -lik.negative_ll(flatten(beta));
}

Eigen::MatrixXd dirichlet_regression_gradient(const CompositionMatrix& m,
                                              const DesignMatrix& x,
                                              const Eigen::MatrixXd& beta) {
    check_loglik_inputs(m, x, beta);
    const Eigen::MatrixXd logv = m.values().array().log();
    const LikelihoodParts lik{x.values, logv};
    return -unflatten(lik.negative_grad(flatten(beta)), beta.rows(), beta.cols());
}

namespace {

void require_aligned(const DirichletFit& fit, const CompositionMatrix& m) {
    if (fit.alpha_hat.rows() != m.n_samples() || fit.alpha_hat.cols() != m.n_parts())
        throw inconsistency_error("fit dimensions do not match the composition matrix");
    if (!m.strictly_positive())
        throw domain_error("diagnostics need strictly positive entries");
}

} // namespace

Eigen::MatrixXd standardized_residuals(const DirichletFit& fit, const CompositionMatrix& m) {
    require_aligned(fit, m);
    Eigen::MatrixXd r(m.n_samples(), m.n_parts());
    for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
        const MarginalMoments mom = dirichlet_marginal_moments(fit.alpha_hat.row(i));
        r.row(i) = (m.values().row(i) - mom.mean.transpose()).array() /
                   mom.variance.transpose().array().sqrt();
    }
    return r;
}

Eigen::VectorXd composite_residuals(const Eigen::MatrixXd& standardized) {
    return standardized.array().square().rowwise().sum();
}

Eigen::MatrixXd score_residuals(const DirichletFit& fit, const CompositionMatrix& m) {
    require_aligned(fit, m);
    Eigen::MatrixXd s(m.n_samples(), m.n_parts());
    for (Eigen::Index i = 0; i < m.n_samples(); ++i) {
        const double dg_total = digamma(fit.alpha_hat.row(i).sum());
        for (Eigen::Index d = 0; d < m.n_parts(); ++d)
            s(i, d) = dg_total - digamma(fit.alpha_hat(i, d)) +
                      std::log(m.values()(i, d));
    }
    return s;
}

Eigen::MatrixXd local_influence(const DirichletFit& fit, const CompositionMatrix& m) {
    const Eigen::MatrixXd s = score_residuals(fit, m);
    Eigen::MatrixXd rho(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double tg_total = trigamma(fit.alpha_hat.row(i).sum());
        for (Eigen::Index d = 0; d < s.cols(); ++d)
            rho(i, d) = s(i, d) / (trigamma(fit.alpha_hat(i, d)) - tg_total);
    }
    return rho;
}

std::vector<Eigen::MatrixXd> overdispersion_statistics(const DirichletFit& fit,
                                                       const CompositionMatrix& m,
                                                       const DesignMatrix& x) {
    require_aligned(fit, m);
    if (x.values.rows() != m.n_samples())
        throw inconsistency_error("design rows do not match composition rows");
    const Eigen::MatrixXd s = score_residuals(fit, m);
    Eigen::MatrixXd eta(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double tg_total = trigamma(fit.alpha_hat.row(i).sum());
        for (Eigen::Index d = 0; d < s.cols(); ++d)
            eta(i, d) = tg_total - trigamma(fit.alpha_hat(i, d)) + s(i, d) * s(i, d);
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<size_t>(x.values.cols()));
    for (Eigen::Index k = 0; k < x.values.cols(); ++k) {
        Eigen::MatrixXd delta(s.rows(), s.cols());
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double xk2 = x.values(i, k) * x.values(i, k);
            delta.row(i) =
                fit.alpha_hat.row(i).array().square() * xk2 * eta.row(i).array();
        }
        out.push_back(std::move(delta));
    }
    return out;
}

DiagnosticsReport diagnostics(const DirichletFit& fit, const CompositionMatrix& m,
                              const DesignMatrix& x) {
    DiagnosticsReport rep;
    rep.standardized_residuals = standardized_residuals(fit, m);
    rep.composite_residuals = composite_residuals(rep.standardized_residuals);
    rep.score_residuals = score_residuals(fit, m);
    rep.local_influence = local_influence(fit, m);
    rep.overdispersion = overdispersion_statistics(fit, m, x);

    const auto n = m.n_samples();
    const auto p = x.values.cols();
    std::vector<Eigen::Index> covariates;
    for (Eigen::Index k = 1; k < p; ++k)
        covariates.push_back(k);
    if (covariates.empty())
        covariates.push_back(0);
    for (const auto k : covariates) {
        for (Eigen::Index d = 0; d < m.n_parts(); ++d) {
            Eigen::Index arg = 0;
            rep.overdispersion[static_cast<size_t>(k)].col(d).maxCoeff(&arg);
            rep.flagged.push_back(
                {arg, m.sample_ids()[static_cast<size_t>(arg)],
                 "largest overdispersion statistic for part '" +
                     m.part_names()[static_cast<size_t>(d)] + "' under '" +
                     x.covariate_names[static_cast<size_t>(k)] + "'"});
        }
    }
    if (n >= 2) {
        const double mean = rep.composite_residuals.mean();
        const double sd = std::sqrt((rep.composite_residuals.array() - mean).square().sum() /
                                    static_cast<double>(n - 1));
        for (Eigen::Index i = 0; i < n; ++i)
            if (rep.composite_residuals(i) > mean + 3.0 * sd)
                rep.flagged.push_back({i, m.sample_ids()[static_cast<size_t>(i)],
                                       "composite residual above mean + 3 sd"});
    }
    std::sort(rep.flagged.begin(), rep.flagged.end(),
              [](const FlaggedObservation& a, const FlaggedObservation& b) {
                  if (a.sample != b.sample)
                      return a.sample < b.sample;
                  return a.reason < b.reason;
              });
    return rep;
}

} // namespace coda
