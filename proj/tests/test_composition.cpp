#include "coda/composition.hpp"
#include "coda/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace coda;

namespace {

Eigen::MatrixXd rows3() {
    Eigen::MatrixXd raw(2, 3);
    raw << 2.0, 3.0, 5.0, 1.0, 1.0, 2.0;
    return raw;
}

std::vector<std::string> abc() { return {"a", "b", "c"}; }
std::vector<std::string> ids(int n) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i)
        out.push_back("s" + std::to_string(i));
    return out;
}

} // namespace

TEST_CASE("close normalizes rows and is scale invariant") {
    const CompositionMatrix m = close(rows3(), abc(), ids(2));
    for (Eigen::Index i = 0; i < m.n_samples(); ++i)
        CHECK(m.values().row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.values()(0, 0) == doctest::Approx(0.2));
    CHECK(m.values()(0, 2) == doctest::Approx(0.5));

    // percentages and raw counts close to the same composition
    const CompositionMatrix scaled = close(100.0 * rows3(), abc(), ids(2));
    CHECK((scaled.values() - m.values()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("constructor and close validate their inputs") {
    CHECK_THROWS_AS(close(Eigen::MatrixXd::Zero(1, 1), {"a"}, ids(1)), parameter_error);

    Eigen::MatrixXd neg = rows3();
    neg(0, 1) = -0.5;
    CHECK_THROWS_AS(close(neg, abc(), ids(2)), domain_error);

    Eigen::MatrixXd nan = rows3();
    nan(1, 2) = std::nan("");
    CHECK_THROWS_AS(close(nan, abc(), ids(2)), domain_error);

    CHECK_THROWS_AS(close(rows3(), {"a", "b", "a"}, ids(2)), parameter_error);

    Eigen::MatrixXd zero_row = rows3();
    zero_row.row(1).setZero();
    try {
        close(zero_row, abc(), ids(2));
        FAIL("expected degenerate_data_error");
    } catch (const degenerate_data_error& e) {
        CHECK(std::string(e.what()).find("s2") != std::string::npos);
    }

    // already-closed rows pass the constructor's sum check
    Eigen::MatrixXd closed(1, 3);
    closed << 0.2, 0.3, 0.5;
    CHECK_NOTHROW(CompositionMatrix(closed, abc(), ids(1)));
    Eigen::MatrixXd off(1, 3);
    off << 0.2, 0.3, 0.6;
    CHECK_THROWS_AS(CompositionMatrix(off, abc(), ids(1)), domain_error);
}

TEST_CASE("weights modes") {
    const CompositionMatrix avg = close(rows3(), abc(), ids(2));
    CHECK(avg.weights_mode() == WeightsMode::kAverage);
    CHECK(avg.weights().sum() == doctest::Approx(1.0).epsilon(1e-14));
    // column means of the closed rows: ((0.2, 0.3, 0.5) + (0.25, 0.25, 0.5)) / 2
    CHECK(avg.weights()(0) == doctest::Approx(0.225));
    CHECK(avg.weights()(1) == doctest::Approx(0.275));
    CHECK(avg.weights()(2) == doctest::Approx(0.5));

    const CompositionMatrix uni = close(rows3(), abc(), ids(2), WeightsMode::kUniform);
    for (Eigen::Index d = 0; d < 3; ++d)
        CHECK(uni.weights()(d) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Eigen::VectorXd w(3);
    w << 2.0, 1.0, 1.0;
    const CompositionMatrix ex = close(rows3(), abc(), ids(2), WeightsMode::kExplicit, w);
    CHECK(ex.weights()(0) == doctest::Approx(0.5));
    CHECK(ex.weights()(1) == doctest::Approx(0.25));

    Eigen::VectorXd bad(3);
    bad << 1.0, 0.0, 1.0;
    CHECK_THROWS_AS(close(rows3(), abc(), ids(2), WeightsMode::kExplicit, bad),
                    parameter_error);
    CHECK_THROWS_AS(close(rows3(), abc(), ids(2), WeightsMode::kExplicit,
                          Eigen::VectorXd::Ones(2)),
                    parameter_error);
}

TEST_CASE("part lookup and positivity flag") {
    const CompositionMatrix m = close(rows3(), abc(), ids(2));
    CHECK(m.part_index("b") == 1);
    CHECK_THROWS_AS(m.part_index("nope"), lookup_error);
    CHECK(m.strictly_positive());

    Eigen::MatrixXd with_zero = rows3();
    with_zero(0, 0) = 0.0;
    CHECK_FALSE(close(with_zero, abc(), ids(2)).strictly_positive());
}

TEST_CASE("geometric mean works in log space") {
    Eigen::VectorXd v(2);
    v << std::exp(1.0), std::exp(3.0);
    CHECK(geometric_mean(v) == doctest::Approx(std::exp(2.0)).epsilon(1e-14));
    Eigen::VectorXd tiny = Eigen::VectorXd::Constant(4, 1e-300);
    CHECK(geometric_mean(tiny) == doctest::Approx(1e-300).epsilon(1e-12));
    Eigen::VectorXd zero(2);
    zero << 1.0, 0.0;
    CHECK_THROWS_AS(geometric_mean(zero), domain_error);
}

TEST_CASE("knn zero replacement reproduces a hand-worked case") {
    Eigen::MatrixXd raw(3, 3);
    raw << 0.0, 0.4, 0.6, //
        0.2, 0.3, 0.5,    //
        0.5, 0.25, 0.25;
    const CompositionMatrix m = close(raw, abc(), ids(3));
    const CompositionMatrix rep = replace_zeros_knn(m, 1);

    // nearest donor for row 1 is row 2 (CLR distance over shared parts b, c);
    // its value 0.2 is rescaled by the ratio of geometric means over b and c:
    // 0.2 * sqrt(0.24 / 0.15), then the row is re-closed
    const double imputed = 0.2 * std::sqrt(0.24 / 0.15);
    CHECK(rep.values()(0, 0) == doctest::Approx(imputed).epsilon(1e-12));
    CHECK(rep.values()(0, 1) == doctest::Approx(0.4 * (1.0 - imputed)).epsilon(1e-12));
    CHECK(rep.values()(0, 2) == doctest::Approx(0.6 * (1.0 - imputed)).epsilon(1e-12));
    CHECK(rep.values().row(0).sum() == doctest::Approx(1.0).epsilon(1e-14));

    // ratios between originally positive parts are untouched
    CHECK(rep.values()(0, 1) / rep.values()(0, 2) == doctest::Approx(0.4 / 0.6).epsilon(1e-13));

    // rows without zeros are unchanged
    CHECK((rep.values().row(1) - m.values().row(1)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((rep.values().row(2) - m.values().row(2)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(rep.strictly_positive());
}

TEST_CASE("knn zero replacement is a no-op on positive data and validates donors") {
    const CompositionMatrix m = close(rows3(), abc(), ids(2));
    const CompositionMatrix same = replace_zeros_knn(m, 1);
    CHECK((same.values() - m.values()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd all_zero_col(2, 3);
    all_zero_col << 0.0, 0.4, 0.6, 0.0, 0.3, 0.7;
    CHECK_THROWS_AS(replace_zeros_knn(close(all_zero_col, abc(), ids(2)), 1),
                    degenerate_data_error);

    Eigen::MatrixXd few_donors(2, 3);
    few_donors << 0.0, 0.4, 0.6, 0.2, 0.3, 0.5;
    CHECK_THROWS_AS(replace_zeros_knn(close(few_donors, abc(), ids(2)), 5),
                    parameter_error);

    CHECK_THROWS_AS(replace_zeros_knn(m, 0), parameter_error);
}

TEST_CASE("subcomposition recloses and renormalizes weights") {
    Eigen::MatrixXd raw(2, 4);
    raw << 1.0, 2.0, 3.0, 4.0, 4.0, 3.0, 2.0, 1.0;
    const CompositionMatrix m =
        close(raw, {"a", "b", "c", "d"}, ids(2));
    const CompositionMatrix sub = subcomposition(m, {"b", "d"});
    CHECK(sub.n_parts() == 2);
    CHECK(sub.part_names()[0] == "b");
    CHECK(sub.values()(0, 0) == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(sub.values()(0, 1) == doctest::Approx(4.0 / 6.0).epsilon(1e-14));
    CHECK(sub.values().row(1).sum() == doctest::Approx(1.0).epsilon(1e-14));

    // weights: parent weights over {b, d}, renormalized
    const double wb = m.weights()(1), wd = m.weights()(3);
    CHECK(sub.weights()(0) == doctest::Approx(wb / (wb + wd)).epsilon(1e-13));
    CHECK(sub.weights()(1) == doctest::Approx(wd / (wb + wd)).epsilon(1e-13));

    CHECK_THROWS_AS(subcomposition(m, {"a"}), parameter_error);
    CHECK_THROWS_AS(subcomposition(m, {"a", "zz"}), lookup_error);
    CHECK_THROWS_AS(subcomposition(m, {"a", "a"}), parameter_error);
}

TEST_CASE("subcompositional coherence of part ratios") {
    Eigen::MatrixXd raw(3, 4);
    raw << 1.0, 2.0, 3.0, 4.0, //
        2.0, 2.0, 5.0, 1.0,    //
        6.0, 1.0, 1.0, 2.0;
    const CompositionMatrix m = close(raw, {"a", "b", "c", "d"}, ids(3));
    const CompositionMatrix sub = subcomposition(m, {"a", "c"});
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double full_ratio = m.values()(i, 0) / m.values()(i, 2);
        const double sub_ratio = sub.values()(i, 0) / sub.values()(i, 1);
        CHECK(sub_ratio == doctest::Approx(full_ratio).epsilon(1e-13));
    }
}
