#include "coda/dirichlet.hpp"
#include "coda/errors.hpp"
#include "coda/numerics/rng.hpp"
#include "coda/numerics/special_functions.hpp"

#include <doctest.h>

#include <cmath>

using namespace coda;

namespace {

std::vector<std::string> parts(int d) {
    std::vector<std::string> out;
    for (int i = 1; i <= d; ++i)
        out.push_back("p" + std::to_string(i));
    return out;
}

std::vector<std::string> ids(int n) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i)
        out.push_back(std::to_string(i));
    return out;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        out(i++) = x;
    return out;
}

// rows drawn from Dirichlet(exp(beta x_i)) so each sample has its own alpha
CompositionMatrix simulate_regression(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& x,
                                      std::uint64_t seed) {
    numerics::Rng rng(seed);
    const Eigen::Index n = x.rows();
    const Eigen::Index d = beta.rows();
    Eigen::MatrixXd raw(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd alpha = (beta * x.row(i).transpose()).array().exp();
        for (Eigen::Index j = 0; j < d; ++j)
            raw(i, j) = rng.gamma(alpha(j));
    }
    return close(raw, parts(static_cast<int>(d)), ids(static_cast<int>(n)));
}

DesignMatrix intercept_only(Eigen::Index n) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(n, 1);
    return make_design(std::move(x), {"intercept"});
}

} // namespace

TEST_CASE("log density matches closed forms and an external evaluation") {
    // uniform on the 2-simplex: density 1
    CHECK(dirichlet_log_pdf(vec({0.3, 0.7}), vec({1.0, 1.0})) ==
          doctest::Approx(0.0).epsilon(1e-14));
    // uniform on the 3-simplex: density Gamma(3) = 2
    CHECK(dirichlet_log_pdf(vec({0.2, 0.5, 0.3}), vec({1.0, 1.0, 1.0})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(dirichlet_log_pdf(vec({0.3, 0.45, 0.25}), vec({1.5, 2.0, 2.5})) ==
          doctest::Approx(1.1436554698837966).epsilon(1e-10));
}

TEST_CASE("two-part density integrates to one") {
    const Eigen::VectorXd alpha = vec({1.7, 2.9});
    const int n = 800;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = (i + 0.5) / n;
        total += std::exp(dirichlet_log_pdf(vec({t, 1.0 - t}), alpha)) / n;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("log density rejects invalid input") {
    CHECK_THROWS_AS(dirichlet_log_pdf(vec({0.0, 1.0}), vec({1.0, 1.0})), domain_error);
    CHECK_THROWS_AS(dirichlet_log_pdf(vec({0.4, 0.4}), vec({1.0, 1.0})), domain_error);
    CHECK_THROWS_AS(dirichlet_log_pdf(vec({0.5, 0.5}), vec({1.0, -1.0})), domain_error);
    CHECK_THROWS_AS(dirichlet_log_pdf(vec({0.5, 0.5}), vec({1.0, 1.0, 1.0})),
                    inconsistency_error);
}

TEST_CASE("marginal moments agree with the Beta marginals") {
    const MarginalMoments flat = dirichlet_marginal_moments(vec({1.0, 1.0}));
    CHECK(flat.mean(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(flat.variance(0) == doctest::Approx(1.0 / 12.0).epsilon(1e-14));

    const MarginalMoments m = dirichlet_marginal_moments(vec({2.0, 3.0, 5.0}));
    CHECK(m.mean(0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(m.mean(1) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(m.mean(2) == doctest::Approx(0.5).epsilon(1e-14));
    // var = mean (1 - mean) / (a0 + 1)
    CHECK(m.variance(0) == doctest::Approx(0.2 * 0.8 / 11.0).epsilon(1e-14));

    // same means at ten times the precision, smaller variance
    const MarginalMoments tight = dirichlet_marginal_moments(vec({20.0, 30.0, 50.0}));
    CHECK(tight.mean(1) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(tight.variance(1) < m.variance(1));

    CHECK_THROWS_AS(dirichlet_marginal_moments(vec({1.0, 0.0})), domain_error);
}

TEST_CASE("sampler is deterministic and matches its moments") {
    const Eigen::VectorXd alpha = vec({2.0, 3.0, 5.0});
    const Eigen::MatrixXd a = sample_dirichlet(alpha, 200, 99);
    const Eigen::MatrixXd b = sample_dirichlet(alpha, 200, 99);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.array() > 0.0).all());
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

    const Eigen::MatrixXd big = sample_dirichlet(alpha, 100000, 7);
    const MarginalMoments mm = dirichlet_marginal_moments(alpha);
    for (Eigen::Index d = 0; d < 3; ++d) {
        const double se = std::sqrt(mm.variance(d) / big.rows());
        CHECK(std::abs(big.col(d).mean() - mm.mean(d)) < 4.0 * se);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    const Eigen::MatrixXd truth =
        (Eigen::MatrixXd(3, 2) << 0.7, 0.4, 1.1, -0.3, 0.2, 0.1).finished();
    Eigen::MatrixXd xv(25, 2);
    numerics::Rng xr(5);
    xv.col(0).setOnes();
    for (Eigen::Index i = 0; i < 25; ++i)
        xv(i, 1) = xr.normal();
    const DesignMatrix x = make_design(xv, {"intercept", "z"});
    const CompositionMatrix m = simulate_regression(truth, xv, 6);

    numerics::Rng rng(17);
    for (int point = 0; point < 20; ++point) {
        Eigen::MatrixXd beta(3, 2);
        for (Eigen::Index r = 0; r < 3; ++r)
            for (Eigen::Index c = 0; c < 2; ++c)
                beta(r, c) = rng.normal() * 0.5;
        const Eigen::MatrixXd analytic = dirichlet_regression_gradient(m, x, beta);
        for (Eigen::Index r = 0; r < 3; ++r) {
            for (Eigen::Index c = 0; c < 2; ++c) {
                const double h = 1e-6 * std::max(1.0, std::abs(beta(r, c)));
                Eigen::MatrixXd hi = beta, lo = beta;
                hi(r, c) += h;
                lo(r, c) -= h;
                const double fd = (dirichlet_regression_loglik(m, x, hi) -
                                   dirichlet_regression_loglik(m, x, lo)) /
                                  (2.0 * h);
                const double rel =
                    std::abs(fd - analytic(r, c)) / std::max(1.0, std::abs(analytic(r, c)));
                CHECK(rel <= 1e-5);
            }
        }
    }
}

TEST_CASE("intercept-only fit satisfies the stationarity identity") {
    const Eigen::MatrixXd truth = (Eigen::MatrixXd(3, 1) << 0.6, 1.2, 0.1).finished();
    const Eigen::MatrixXd xv = Eigen::MatrixXd::Ones(400, 1);
    const CompositionMatrix m = simulate_regression(truth, xv, 23);
    const DirichletFit fit = fit_dirichlet_regression(m, intercept_only(400));
    REQUIRE(fit.converged);

    // at the optimum: digamma(alpha_d) - digamma(alpha_sum) = mean log v_d
    const Eigen::VectorXd alpha = fit.beta.col(0).array().exp();
    const double total = alpha.sum();
    const Eigen::MatrixXd logs = m.values().array().log();
    for (Eigen::Index d = 0; d < 3; ++d) {
        const double lhs = numerics::digamma(alpha(d)) - numerics::digamma(total);
        CHECK(lhs == doctest::Approx(logs.col(d).mean()).epsilon(1e-6));
    }
}

TEST_CASE("fit exposes coherent likelihood and fitted alphas") {
    const Eigen::MatrixXd truth =
        (Eigen::MatrixXd(3, 2) << 0.8, 0.5, 1.4, -0.4, 0.3, 0.0).finished();
    Eigen::MatrixXd xv(300, 2);
    xv.col(0).setOnes();
    for (Eigen::Index i = 0; i < 300; ++i)
        xv(i, 1) = (i % 2 == 0) ? 1.0 : 0.0;
    const DesignMatrix x = make_design(xv, {"intercept", "group"});
    const CompositionMatrix m = simulate_regression(truth, xv, 31);

    const DirichletFit fit = fit_dirichlet_regression(m, x);
    REQUIRE(fit.converged);
    CHECK(fit.iterations > 0);

    const Eigen::MatrixXd expected_alpha = (xv * fit.beta.transpose()).array().exp();
    CHECK((fit.alpha_hat - expected_alpha).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fit.log_likelihood ==
          doctest::Approx(dirichlet_regression_loglik(m, x, fit.beta)).epsilon(1e-12));

    // the maximum beats both the default start and an arbitrary start
    const Eigen::MatrixXd start = Eigen::MatrixXd::Constant(3, 2, 0.1);
    CHECK(fit.log_likelihood >= dirichlet_regression_loglik(m, x, start));
    const DirichletFit warm = fit_dirichlet_regression(m, x, start);
    CHECK(warm.log_likelihood == doctest::Approx(fit.log_likelihood).epsilon(1e-8));
    CHECK((warm.beta - fit.beta).cwiseAbs().maxCoeff() < 1e-4);

    CHECK((fit.standard_errors.array() > 0.0).all());
    CHECK((fit.wald_p.array() >= 0.0).all());
    CHECK((fit.wald_p.array() <= 1.0).all());
}

TEST_CASE("maximum likelihood recovers the generating coefficients") {
    const Eigen::MatrixXd truth =
        (Eigen::MatrixXd(4, 2) << 0.9, 0.3, 1.3, -0.25, 0.4, 0.15, 0.7, 0.0).finished();
    Eigen::MatrixXd xv(2000, 2);
    xv.col(0).setOnes();
    for (Eigen::Index i = 0; i < 2000; ++i)
        xv(i, 1) = (i % 2 == 0) ? 1.0 : 0.0;
    const DesignMatrix x = make_design(xv, {"intercept", "group"});

    int inside = 0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
        const CompositionMatrix m = simulate_regression(truth, xv, 1000 + t);
        const DirichletFit fit = fit_dirichlet_regression(m, x);
        if (!fit.converged)
            continue;
        bool all_close = true;
        for (Eigen::Index r = 0; r < 4; ++r)
            for (Eigen::Index c = 0; c < 2; ++c)
                if (std::abs(fit.beta(r, c) - truth(r, c)) > 3.0 * fit.standard_errors(r, c))
                    all_close = false;
        if (all_close)
            ++inside;
    }
    // each of the 8 coefficients misses a 3 SE window with prob ~0.003
    CHECK(inside >= trials - 3);
}

TEST_CASE("fit rejects unusable compositions") {
    Eigen::MatrixXd with_zero(3, 3);
    with_zero << 0.5, 0.5, 0.0, 0.2, 0.3, 0.5, 0.1, 0.1, 0.8;
    const CompositionMatrix z(with_zero, parts(3), ids(3));
    CHECK_THROWS_AS(fit_dirichlet_regression(z, intercept_only(3)), domain_error);

    Eigen::MatrixXd xshort = Eigen::MatrixXd::Ones(4, 1);
    const CompositionMatrix ok = close(Eigen::MatrixXd::Random(3, 3).array() + 2.0,
                                       parts(3), ids(3));
    CHECK_THROWS_AS(fit_dirichlet_regression(ok, make_design(xshort, {"intercept"})),
                    inconsistency_error);
}

TEST_CASE("fit names a vanishing part") {
    Eigen::MatrixXd tiny(30, 3);
    numerics::Rng rng(3);
    for (Eigen::Index i = 0; i < 30; ++i) {
        tiny(i, 0) = 1.0 + rng.uniform();
        tiny(i, 1) = 1.0 + rng.uniform();
        tiny(i, 2) = 1e-14 * (1.0 + rng.uniform());
    }
    const CompositionMatrix m = close(tiny, {"big1", "big2", "vanishing"}, ids(30));
    try {
        fit_dirichlet_regression(m, intercept_only(30));
        FAIL("expected degenerate_data_error");
    } catch (const degenerate_data_error& e) {
        CHECK(std::string(e.what()).find("vanishing") != std::string::npos);
    }
}

TEST_CASE("residual definitions are mutually consistent") {
    const Eigen::MatrixXd truth =
        (Eigen::MatrixXd(3, 2) << 0.9, 0.4, 1.2, -0.3, 0.5, 0.1).finished();
    Eigen::MatrixXd xv(80, 2);
    xv.col(0).setOnes();
    for (Eigen::Index i = 0; i < 80; ++i)
        xv(i, 1) = (i % 2 == 0) ? 1.0 : 0.0;
    const DesignMatrix x = make_design(xv, {"intercept", "group"});
    const CompositionMatrix m = simulate_regression(truth, xv, 47);
    const DirichletFit fit = fit_dirichlet_regression(m, x);
    REQUIRE(fit.converged);

    const Eigen::MatrixXd std_res = standardized_residuals(fit, m);
    CHECK(std_res.rows() == 80);
    CHECK(std_res.cols() == 3);

    // standardized residual from first principles for one cell
    {
        const Eigen::VectorXd alpha = fit.alpha_hat.row(5).transpose();
        const MarginalMoments mm = dirichlet_marginal_moments(alpha);
        const double expect = (m.values()(5, 1) - mm.mean(1)) / std::sqrt(mm.variance(1));
        CHECK(std_res(5, 1) == doctest::Approx(expect).epsilon(1e-12));
    }

    const Eigen::VectorXd composite = composite_residuals(std_res);
    for (Eigen::Index i = 0; i < composite.size(); ++i)
        CHECK(composite(i) ==
              doctest::Approx(std_res.row(i).squaredNorm()).epsilon(1e-12));

    const Eigen::MatrixXd score = score_residuals(fit, m);
    const Eigen::MatrixXd infl = local_influence(fit, m);
    for (Eigen::Index i = 0; i < 80; ++i) {
        const double asum = fit.alpha_hat.row(i).sum();
        for (Eigen::Index d = 0; d < 3; ++d) {
            const double s = numerics::digamma(asum) -
                             numerics::digamma(fit.alpha_hat(i, d)) +
                             std::log(m.values()(i, d));
            CHECK(score(i, d) == doctest::Approx(s).epsilon(1e-12));
            const double denom =
                numerics::trigamma(fit.alpha_hat(i, d)) - numerics::trigamma(asum);
            CHECK(denom > 0.0);
            CHECK(infl(i, d) == doctest::Approx(s / denom).epsilon(1e-12));
        }
    }

    // score residuals of a converged fit balance against alpha and x
    const Eigen::MatrixXd weighted = fit.alpha_hat.cwiseProduct(score);
    CHECK((xv.transpose() * weighted).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("diagnostics report is shaped and flagged as documented") {
    const Eigen::MatrixXd truth =
        (Eigen::MatrixXd(3, 2) << 0.9, 0.4, 1.2, -0.3, 0.5, 0.1).finished();
    Eigen::MatrixXd xv(60, 2);
    xv.col(0).setOnes();
    for (Eigen::Index i = 0; i < 60; ++i)
        xv(i, 1) = (i % 2 == 0) ? 1.0 : 0.0;
    const DesignMatrix x = make_design(xv, {"intercept", "group"});
    const CompositionMatrix m = simulate_regression(truth, xv, 53);
    const DirichletFit fit = fit_dirichlet_regression(m, x);
    REQUIRE(fit.converged);

    const DiagnosticsReport rep = diagnostics(fit, m, x);
    CHECK(rep.standardized_residuals.rows() == 60);
    CHECK(rep.composite_residuals.size() == 60);
    CHECK(rep.score_residuals.cols() == 3);
    CHECK(rep.local_influence.cols() == 3);
    REQUIRE(rep.overdispersion.size() == 2);
    CHECK(rep.overdispersion[1].rows() == 60);

    // delta_id = alpha^2 x^2 (trigamma(alpha_sum) - trigamma(alpha_id) + s^2)
    {
        const Eigen::Index i = 11, d = 2, k = 1;
        const double asum = fit.alpha_hat.row(i).sum();
        const double s = numerics::digamma(asum) -
                         numerics::digamma(fit.alpha_hat(i, d)) +
                         std::log(m.values()(i, d));
        const double eta =
            numerics::trigamma(asum) - numerics::trigamma(fit.alpha_hat(i, d)) + s * s;
        const double expect = fit.alpha_hat(i, d) * fit.alpha_hat(i, d) * xv(i, k) *
                              xv(i, k) * eta;
        CHECK(rep.overdispersion[static_cast<size_t>(k)](i, d) ==
              doctest::Approx(expect).epsilon(1e-12));
    }

    // one overdispersion flag per (part, non-intercept covariate)
    int over_flags = 0;
    for (const auto& f : rep.flagged) {
        CHECK(f.sample_id == m.sample_ids()[static_cast<size_t>(f.sample)]);
        if (f.reason.find("largest overdispersion statistic") != std::string::npos) {
            ++over_flags;
            CHECK(f.reason.find("under 'group'") != std::string::npos);
        } else {
            CHECK(f.reason == "composite residual above mean + 3 sd");
        }
    }
    CHECK(over_flags == 3);
}
