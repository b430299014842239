#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlr/wald.hpp"

using namespace nlr;

TEST_CASE("wald_quantile values", "[wald]") {
    CHECK(wald_quantile(builtin_uniform_shift(), 0.3, 0.05) ==
          Catch::Approx(2.995732273553991).epsilon(1e-12));
    CHECK(wald_quantile(builtin_offset_truncnormal(1.25), 0.0, 0.05) ==
          Catch::Approx(14.668750359083665).epsilon(1e-9));
    CHECK(wald_quantile(builtin_uniform_shift(), 0.0, 0.999999) ==
          Catch::Approx(0.0).margin(1e-5));
    CHECK_THROWS_AS(wald_quantile(builtin_uniform_shift(), 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("wald_quantile monotonicity", "[wald]") {
    const ModelSpec m = builtin_offset_truncnormal(1.25);
    double prev = wald_quantile(m, 0.0, 0.01);
    for (double alpha = 0.02; alpha < 1.0; alpha += 0.02) {
        const double q = wald_quantile(m, 0.0, alpha);
        REQUIRE(q < prev);  // decreasing in alpha
        prev = q;
    }
    // Decreasing in the boundary density: a larger offset raises the
    // boundary density of the truncated normal family.
    double prev_q = 1e300;
    for (double offset : {0.25, 0.75, 1.25, 2.0}) {
        const ModelSpec fam = builtin_offset_truncnormal(offset);
        const double f0 = fam.density(fam.boundary(0.0), 0.0);
        const double q = wald_quantile(fam, 0.0, 0.05);
        CHECK(q == Catch::Approx(2.995732273553991 / f0).epsilon(1e-10));
        REQUIRE(q < prev_q);
        prev_q = q;
    }
}

TEST_CASE("wald_test decision rule", "[wald]") {
    const ModelSpec m = builtin_offset_truncnormal(1.25);
    WaldConfig cfg;
    RngStream rng(91);
    const Sample s = draw_sample(m, 0.0, 20, rng);
    const TestOutcome out = wald_test(m, s, cfg);
    CHECK((out.branch == Branch::Reject || out.branch == Branch::Accept));
    REQUIRE(out.statistic_raw.has_value());
    const double theta_hat = mle_theta(m, s);
    CHECK(*out.statistic_raw == Catch::Approx(20.0 * theta_hat).margin(1e-9));

    // theta_hat == theta0 exactly: statistic 0, accept.
    WaldConfig at;
    at.theta0 = theta_hat;
    CHECK(wald_test(m, s, at).branch == Branch::Accept);
}

TEST_CASE("wald_test null size at n = 20", "[wald][mc]") {
    const ModelSpec m = builtin_offset_truncnormal(1.25);
    WaldConfig cfg;
    const std::size_t R = 2000;
    double acc = 0.0;
    for (std::size_t rep = 0; rep < R; ++rep) {
        RngStream rng(derive_stream_key(9201, 0, rep));
        const Sample s = draw_sample(m, 0.0, 20, rng);
        acc += wald_test(m, s, cfg).reject_probability;
    }
    CHECK(acc / double(R) <= 0.05 + 0.02);
}

TEST_CASE("quantile-at-mle variant is exposed but off by default", "[wald]") {
    const ModelSpec m = builtin_offset_truncnormal(1.25);
    WaldConfig def;
    CHECK_FALSE(def.quantile_at_mle);
    WaldConfig variant;
    variant.quantile_at_mle = true;
    RngStream rng(92);
    const Sample s = draw_sample(m, 0.0, 25, rng);
    // For this location family the quantile is theta-free, so the decision agrees.
    CHECK(wald_test(m, s, def).branch == wald_test(m, s, variant).branch);
}
