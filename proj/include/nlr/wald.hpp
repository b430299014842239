#pragma once

// Wald baseline: n*(theta_hat - theta0) compared against the (1-alpha)
// quantile of the nonstandard MLE limit Exp(1) / (f(g(theta)|theta) *
// slope(theta)). Used as the comparison test in the power studies.

#include <cmath>
#include <stdexcept>

#include "nlr/estimate.hpp"
#include "nlr/model.hpp"
#include "nlr/nlr_test.hpp"

namespace nlr {

struct WaldConfig {
    double alpha = 0.05;
    double theta0 = 0.0;
    bool quantile_at_mle = false;  // evaluate the quantile at theta_hat instead of theta0

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("WaldConfig: alpha must lie in (0,1)");
    }
};

/// q_{1-alpha} of Exp(1)/(f(g(theta)|theta)*slope(theta)) = -log(alpha) / (f*slope).
inline double wald_quantile(const ModelSpec& model, double theta, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("wald_quantile: alpha must lie in (0,1)");
    const double f0 = model.density(model.boundary(theta), theta);
    const double slope = model.boundary_slope(theta);
    if (!(f0 > 0.0) || !(slope > 0.0))
        throw std::invalid_argument("wald_quantile: degenerate boundary density or slope");
    return -std::log(alpha) / (f0 * slope);
}

/// Rejects H0: theta = theta0 against theta > theta0 when
/// n*(theta_hat - theta0) exceeds the quantile. Never randomizes.
inline TestOutcome wald_test(const ModelSpec& model, const Sample& sample,
                             const WaldConfig& config) {
    config.validate();
    const double theta_hat = mle_theta(model, sample);
    const double quantile_theta = config.quantile_at_mle ? theta_hat : config.theta0;
    const double q = wald_quantile(model, quantile_theta, config.alpha);
    const double statistic = static_cast<double>(sample.size()) * (theta_hat - config.theta0);

    TestOutcome out;
    out.statistic_raw = statistic;
    out.hbar_used = q;
    out.lambda_used = 1.0 / (model.density(model.boundary(quantile_theta), quantile_theta) *
                             model.boundary_slope(quantile_theta));
    const bool reject = statistic > q;
    out.branch = reject ? Branch::Reject : Branch::Accept;
    out.reject_probability = reject ? 1.0 : 0.0;
    return out;
}

} // namespace nlr
