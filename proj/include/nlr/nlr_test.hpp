#pragma once

// The NLR tests: randomized likelihood-ratio tests for the one-sided and
// two-sided problems, in the benchmark model and in the general model with
// estimated nuisance parameters. All cutoff comparisons run in log space on
// the normalized statistic S = e^{-hbar/lambda} * Z_n(0, hbar), whose limit
// under the null is the binary e^{-hbar/lambda} * Z(0,hbar) in {0, 1}:
//
//   plus side, alpha <= p:  reject S > 1+eps, randomize alpha/p on [1-eps, 1+eps]
//   plus side, alpha >  p:  reject S > eps2,  randomize (alpha-p)/(1-p) below
//   minus side (finite):    reject S > 1+eps, randomize alpha/p on [1-eps, 1+eps]
//   minus side (hbar=-inf): reject on support violation, else alpha-coin
//   two-sided:              reject S+ >= 1-eps or S- > 1+eps (never randomizes)
//
// where p = Pr{D_{0,hbar} = 1}. A support violation (some Y_i below the null
// boundary) rejects by convention on every path.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>

#include "nlr/estimate.hpp"
#include "nlr/limit.hpp"
#include "nlr/lratio.hpp"
#include "nlr/model.hpp"
#include "nlr/rng.hpp"

namespace nlr {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct HbarPolicy {
    enum class Kind { Explicit, EnvelopeInversion, Optimal };
    Kind kind = Kind::Optimal;
    double value = 0.0;  // Explicit (may be -infinity on the minus side)
    double pi = 1.0;     // EnvelopeInversion

    static HbarPolicy explicit_value(double v) { return {Kind::Explicit, v, 0.0}; }
    static HbarPolicy envelope_inversion(double pi) { return {Kind::EnvelopeInversion, 0.0, pi}; }
    static HbarPolicy optimal() { return {Kind::Optimal, 0.0, 1.0}; }
};

enum class RandomizationPolicy { ReportProbability, CoinFlip };

struct TestConfig {
    double alpha = 0.05;
    std::optional<double> epsilon;   // eps / eps1; branch-dependent default
    std::optional<double> epsilon2;  // plus side, alpha > p branch
    std::optional<double> epsilon3;  // general two-sided, minus arm
    HbarPolicy hbar = HbarPolicy::optimal();
    double truncation_M = 50.0;      // hbar_minus sentinel realized as -M where finite
    RandomizationPolicy randomization = RandomizationPolicy::ReportProbability;
    std::uint64_t coin_seed = 0;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("TestConfig: alpha must lie in (0,1)");
        if (!(truncation_M > 0.0))
            throw std::invalid_argument("TestConfig: truncation constant M must be positive");
    }
};

enum class Branch { Reject, Randomize, Accept, SupportViolation };

struct TestOutcome {
    LrValue statistic;            // Z_n(0, hbar); the plus statistic for two-sided tests
    Branch branch = Branch::Accept;
    double reject_probability = 0.0;
    std::optional<int> coin;      // realized decision under CoinFlip
    double hbar_used = 0.0;
    double lambda_used = 0.0;
    std::optional<double> statistic_raw;  // non-LR statistics (Wald: n*(theta_hat - theta0))
};

inline const char* branch_name(Branch b) {
    switch (b) {
        case Branch::Reject: return "reject";
        case Branch::Randomize: return "randomize";
        case Branch::Accept: return "accept";
        case Branch::SupportViolation: return "support-violation";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// hbar selection
// ---------------------------------------------------------------------------

/// Envelope inversion for the plus side: hbar satisfying Pi(hbar) = pi,
/// i.e. lambda * log(pi/alpha). pi = 1 gives the optimal -lambda*log(alpha).
inline double hbar_plus(const LimitParams& params, double alpha, double pi) {
    if (!(pi > alpha) || pi > 1.0)
        throw std::invalid_argument("hbar_plus: pi must lie in (alpha, 1]");
    return params.lambda * std::log(pi / alpha);
}

/// Envelope inversion for the minus side: lambda * log((1-pi)/(1-alpha))
/// for pi in [alpha, 1); pi = 1 returns the -infinity sentinel.
inline double hbar_minus(const LimitParams& params, double alpha, double pi) {
    if (pi < alpha || pi > 1.0)
        throw std::invalid_argument("hbar_minus: pi must lie in [alpha, 1]");
    if (pi == 1.0) return -std::numeric_limits<double>::infinity();
    return params.lambda * std::log((1.0 - pi) / (1.0 - alpha));
}

namespace detail {

// Boundary-equality tolerance for the alpha vs p branch split: the optimal
// hbar makes them equal by construction, so ulp noise must not flip the
// branch.
inline bool alpha_le_p(double alpha, double p) {
    return alpha <= p * (1.0 + 1e-9);
}

inline double resolve_hbar_plus(const LimitParams& params, const TestConfig& config) {
    switch (config.hbar.kind) {
        case HbarPolicy::Kind::Explicit:
            if (!(config.hbar.value > 0.0))
                throw std::invalid_argument("plus-side test requires hbar > 0");
            return config.hbar.value;
        case HbarPolicy::Kind::EnvelopeInversion:
            return hbar_plus(params, config.alpha, config.hbar.pi);
        case HbarPolicy::Kind::Optimal:
            return hbar_plus(params, config.alpha, 1.0);
    }
    throw std::logic_error("unreachable");
}

/// Minus side: -infinity means the sentinel test.
inline double resolve_hbar_minus(const LimitParams& params, const TestConfig& config) {
    switch (config.hbar.kind) {
        case HbarPolicy::Kind::Explicit:
            if (!(config.hbar.value < 0.0))
                throw std::invalid_argument("minus-side test requires hbar < 0");
            return config.hbar.value;
        case HbarPolicy::Kind::EnvelopeInversion:
            return hbar_minus(params, config.alpha, config.hbar.pi);
        case HbarPolicy::Kind::Optimal:
            return -std::numeric_limits<double>::infinity();
    }
    throw std::logic_error("unreachable");
}

inline double checked_epsilon1(const TestConfig& config) {
    const double eps = config.epsilon.value_or(0.9999);
    if (!(eps >= 0.0) || eps >= 1.0)
        throw std::invalid_argument("epsilon must lie in [0, 1) on this branch");
    return eps;
}

inline double checked_epsilon2(const TestConfig& config, double p, double upper) {
    const double eps = config.epsilon2.value_or(config.epsilon.value_or(0.01 * upper));
    if (!(eps >= 0.0) || eps >= upper)
        throw std::invalid_argument("epsilon out of the branch-legal range (0, "
                                    "Pr{D=1}) for the alpha > Pr{D=1} branch");
    (void)p;
    return eps;
}

inline void flip_coin(TestOutcome& out, const TestConfig& config, RngStream* rng) {
    if (config.randomization != RandomizationPolicy::CoinFlip) return;
    if (out.branch == Branch::Randomize) {
        RngStream local(config.coin_seed);
        RngStream& coin_rng = rng != nullptr ? *rng : local;
        out.coin = coin_rng.next_uniform() < out.reject_probability ? 1 : 0;
    } else {
        out.coin = out.reject_probability >= 1.0 ? 1 : 0;
    }
}

/// Shared decision kernel for the one-sided tests. `lr` is Z_n(0, hbar);
/// `p` is Pr{D_{0,hbar}=1} (estimated or exact); `minus_side` forces the
/// phi_1 form as in the minus-side construction.
inline TestOutcome one_sided_decision(const LrValue& lr, double hbar, double lambda,
                                      double p, bool minus_side, const TestConfig& config,
                                      RngStream* coin_rng) {
    TestOutcome out;
    out.statistic = lr;
    out.hbar_used = hbar;
    out.lambda_used = lambda;

    if (lr.is_indeterminate()) {
        out.branch = Branch::SupportViolation;
        out.reject_probability = 1.0;
        flip_coin(out, config, coin_rng);
        return out;
    }

    const double log_S = lr.log_z - hbar / lambda;  // -inf when Z = 0

    if (minus_side || alpha_le_p(config.alpha, p)) {
        const double eps = checked_epsilon1(config);
        const double lower = eps < 1.0 ? std::log(1.0 - eps) : -std::numeric_limits<double>::infinity();
        const double upper = std::log1p(eps);
        if (log_S > upper) {
            out.branch = Branch::Reject;
            out.reject_probability = 1.0;
        } else if (log_S >= lower) {
            out.branch = Branch::Randomize;
            out.reject_probability = std::min(config.alpha / p, 1.0);
        } else {
            out.branch = Branch::Accept;
            out.reject_probability = 0.0;
        }
    } else {
        const double eps2 = checked_epsilon2(config, p, p);
        const double upper = std::log(eps2);
        if (log_S > upper) {
            out.branch = Branch::Reject;
            out.reject_probability = 1.0;
        } else {
            // S in [-eps2, eps2] covers all of [0, eps2]; the test never accepts.
            out.branch = Branch::Randomize;
            out.reject_probability = (config.alpha - p) / (1.0 - p);
        }
    }
    flip_coin(out, config, coin_rng);
    return out;
}

} // namespace detail

/// Pr{D_{0,hbar}=1} estimator from per-level estimates:
/// exp(sum_j min{-G_j*hbar, 0} / lambda_check_j). Equals e^{-hbar/lambda_check}
/// when all slopes are positive and hbar > 0, and 1 when hbar <= 0.
inline double p_check(const LimitParams& limit_est, double hbar) {
    return prob_indicator_one(limit_est, hbar);
}

// ---------------------------------------------------------------------------
// Benchmark tests
// ---------------------------------------------------------------------------

/// One-sided NLR test against h > 0.
inline TestOutcome test_plus(const ModelSpec& model, const Sample& sample, double theta0,
                             const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    const LimitParams params = lambda_benchmark(model, theta0);
    const double hbar = detail::resolve_hbar_plus(params, config);
    const LrValue lr = lr_benchmark(model, sample, theta0, 0.0, hbar);
    const double p = prob_indicator_one(params, hbar);
    return detail::one_sided_decision(lr, hbar, params.lambda, p, /*minus_side=*/false,
                                      config, coin_rng);
}

/// One-sided NLR test against h < 0. The hbar = -infinity sentinel is the
/// closed-form limit of the finite test: reject on support violation,
/// otherwise randomize with probability alpha.
inline TestOutcome test_minus(const ModelSpec& model, const Sample& sample, double theta0,
                              const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    const LimitParams params = lambda_benchmark(model, theta0);
    const double hbar = detail::resolve_hbar_minus(params, config);

    if (std::isinf(hbar)) {
        TestOutcome out;
        out.hbar_used = hbar;
        out.lambda_used = params.lambda;
        if (sample.min_y < model.boundary(theta0)) {
            out.statistic = LrValue::indeterminate();
            out.branch = Branch::SupportViolation;
            out.reject_probability = 1.0;
        } else {
            out.statistic = LrValue::numerator_zero();
            out.branch = Branch::Randomize;
            out.reject_probability = config.alpha;
        }
        detail::flip_coin(out, config, coin_rng);
        return out;
    }

    const LrValue lr = lr_benchmark(model, sample, theta0, 0.0, hbar);
    const double p = prob_indicator_one(params, hbar);  // 1 for hbar < 0, slope > 0
    return detail::one_sided_decision(lr, hbar, params.lambda, p, /*minus_side=*/true,
                                      config, coin_rng);
}

/// Two-sided NLR test: rejects when Z_n(0, hbar+) >= e^{hbar+/lambda}(1-eps)
/// or Z_n(0, hbar-) > e^{hbar-/lambda}(1+eps) or the support is violated,
/// with hbar+ = -lambda*log(alpha) and hbar- = -M. Never randomizes.
inline TestOutcome test_twosided(const ModelSpec& model, const Sample& sample, double theta0,
                                 const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    const LimitParams params = lambda_benchmark(model, theta0);
    const double hbar_pos = hbar_plus(params, config.alpha, 1.0);
    const double hbar_neg = -config.truncation_M;
    const double eps = config.epsilon.value_or(0.5);
    if (!(eps >= 0.0) || eps >= 1.0)
        throw std::invalid_argument("test_twosided: epsilon must lie in [0, 1)");

    const LrValue lr_pos = lr_benchmark(model, sample, theta0, 0.0, hbar_pos);
    TestOutcome out;
    out.statistic = lr_pos;
    out.hbar_used = hbar_pos;
    out.lambda_used = params.lambda;

    if (lr_pos.is_indeterminate()) {
        out.branch = Branch::SupportViolation;
        out.reject_probability = 1.0;
        detail::flip_coin(out, config, coin_rng);
        return out;
    }

    const LrValue lr_neg = lr_benchmark(model, sample, theta0, 0.0, hbar_neg);
    const double log_S_pos = lr_pos.log_z - hbar_pos / params.lambda;
    const double log_S_neg = lr_neg.log_z - hbar_neg / params.lambda;
    const double lower = eps < 1.0 ? std::log(1.0 - eps) : -std::numeric_limits<double>::infinity();
    const bool reject = (log_S_pos >= lower) || (log_S_neg > std::log1p(eps));
    out.branch = reject ? Branch::Reject : Branch::Accept;
    out.reject_probability = reject ? 1.0 : 0.0;
    detail::flip_coin(out, config, coin_rng);
    return out;
}

/// Inverts the two-sided test over a theta grid: theta is retained when
/// Z_n^theta(0, hbar+) < e^{hbar+/lambda(theta)}(1-eps) and
/// Z_n^theta(0, hbar-) <= e^{hbar-/lambda(theta)}(1+eps), with lambda and
/// hbar+ recomputed at each theta. Indeterminate statistics exclude theta.
inline std::vector<double> confidence_set(const ModelSpec& model, const Sample& sample,
                                          std::span<const double> theta_grid,
                                          const TestConfig& config) {
    config.validate();
    if (theta_grid.empty()) throw std::invalid_argument("confidence_set: empty theta grid");
    const double eps = config.epsilon.value_or(0.5);
    if (!(eps >= 0.0) || eps >= 1.0)
        throw std::invalid_argument("confidence_set: epsilon must lie in [0, 1)");

    std::vector<double> accepted;
    for (double theta : theta_grid) {
        if (!model.theta_domain.contains(theta))
            throw std::invalid_argument("confidence_set: grid point outside theta domain");
        const LimitParams params = lambda_benchmark(model, theta);
        const double hbar_pos = hbar_plus(params, config.alpha, 1.0);
        const double hbar_neg = -config.truncation_M;

        const LrValue lr_pos = lr_at_theta(model, sample, theta, hbar_pos);
        if (lr_pos.is_indeterminate()) continue;
        const LrValue lr_neg = lr_at_theta(model, sample, theta, hbar_neg);

        const double log_S_pos = lr_pos.log_z - hbar_pos / params.lambda;
        const double log_S_neg = lr_neg.log_z - hbar_neg / params.lambda;
        const double lower = eps < 1.0 ? std::log(1.0 - eps) : -std::numeric_limits<double>::infinity();
        if (log_S_pos < lower && log_S_neg <= std::log1p(eps)) accepted.push_back(theta);
    }
    return accepted;
}

// ---------------------------------------------------------------------------
// General-model tests (estimated nuisance parameters)
// ---------------------------------------------------------------------------

namespace detail {

inline double resolve_h_check_plus(const NuisanceEstimates& est, const TestConfig& config) {
    switch (config.hbar.kind) {
        case HbarPolicy::Kind::Explicit:
            if (!(config.hbar.value > 0.0))
                throw std::invalid_argument("plus-side test requires hbar > 0");
            return config.hbar.value;
        case HbarPolicy::Kind::EnvelopeInversion:
            return select_h_check(est.limit, config.alpha, HbarSide::plus(config.hbar.pi));
        case HbarPolicy::Kind::Optimal:
            return est.h_check_plus;
    }
    throw std::logic_error("unreachable");
}

} // namespace detail

/// Plus-side NLR test for the covariate model with plug-in estimates. The
/// statistic is e^{-h_check/lambda_check} * Z_n(0, h_check, gamma_check);
/// the phi_1/phi_2 form is selected by alpha vs p_check(h_check).
inline TestOutcome test_plus_general(const CovariateModelSpec& model, const Sample& sample,
                                     double theta0, const NuisanceEstimates& estimates,
                                     const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    estimates.require_independent_from(sample);
    const double h_check = detail::resolve_h_check_plus(estimates, config);
    const LrValue lr = lr_plugin(model, sample, theta0, 0.0, h_check, estimates.gamma_check);
    const double p = p_check(estimates.limit, h_check);
    return detail::one_sided_decision(lr, h_check, estimates.limit.lambda, p,
                                      /*minus_side=*/false, config, coin_rng);
}

/// Minus-side NLR test for the covariate model: the phi_1 form with
/// h_check = -M and randomization probability alpha / p_check (exactly
/// alpha when all slopes are positive).
inline TestOutcome test_minus_general(const CovariateModelSpec& model, const Sample& sample,
                                      double theta0, const NuisanceEstimates& estimates,
                                      const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    estimates.require_independent_from(sample);
    double h_check = estimates.h_check_minus;
    if (config.hbar.kind == HbarPolicy::Kind::Explicit) h_check = config.hbar.value;
    if (!(h_check < 0.0)) throw std::invalid_argument("minus-side test requires hbar < 0");
    const LrValue lr = lr_plugin(model, sample, theta0, 0.0, h_check, estimates.gamma_check);
    const double p = p_check(estimates.limit, h_check);
    return detail::one_sided_decision(lr, h_check, estimates.limit.lambda, p,
                                      /*minus_side=*/true, config, coin_rng);
}

/// General two-sided test: min{1, phi+(h_check+, eps1, eps2) + phi-(h_check-,
/// eps3)} where the minus arm runs at level 0 (its randomization probability
/// is zero, so it contributes only its hard rejection region).
inline TestOutcome test_twosided_general(const CovariateModelSpec& model, const Sample& sample,
                                         double theta0, const NuisanceEstimates& estimates,
                                         const TestConfig& config, RngStream* coin_rng = nullptr) {
    config.validate();
    estimates.require_independent_from(sample);

    TestConfig plus_config = config;
    if (!plus_config.epsilon) plus_config.epsilon = 0.5;
    plus_config.hbar = HbarPolicy::optimal();
    plus_config.randomization = RandomizationPolicy::ReportProbability;
    const TestOutcome plus = test_plus_general(model, sample, theta0, estimates, plus_config);

    TestOutcome out;
    out.statistic = plus.statistic;
    out.hbar_used = plus.hbar_used;
    out.lambda_used = plus.lambda_used;

    if (plus.branch == Branch::SupportViolation) {
        out.branch = Branch::SupportViolation;
        out.reject_probability = 1.0;
        detail::flip_coin(out, config, coin_rng);
        return out;
    }

    const double eps3 = config.epsilon3.value_or(config.epsilon.value_or(0.5));
    if (!(eps3 >= 0.0) || eps3 >= 1.0)
        throw std::invalid_argument("test_twosided_general: epsilon3 must lie in [0, 1)");
    const double h_neg = estimates.h_check_minus;
    const LrValue lr_neg = lr_plugin(model, sample, theta0, 0.0, h_neg, estimates.gamma_check);
    const double log_S_neg = lr_neg.log_z - h_neg / estimates.limit.lambda;
    const double minus_reject = log_S_neg > std::log1p(eps3) ? 1.0 : 0.0;

    const double combined = std::min(1.0, plus.reject_probability + minus_reject);
    out.reject_probability = combined;
    if (combined >= 1.0)
        out.branch = Branch::Reject;
    else if (combined > 0.0)
        out.branch = Branch::Randomize;
    else
        out.branch = Branch::Accept;
    detail::flip_coin(out, config, coin_rng);
    return out;
}

} // namespace nlr
