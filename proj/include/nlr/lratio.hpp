#pragma once

// Finite-sample likelihood-ratio statistics with explicit support-indicator
// semantics. The LR of two local parameters is
//
//   Z_n(h, hbar) = I{Y_(1) >= g(theta0 + hbar/n)} / I{Y_(1) >= g(theta0 + h/n)}
//                  * prod_i f(Y_i | theta0 + hbar/n) / f(Y_i | theta0 + h/n),
//
// which is indeterminate (0/0) when the denominator indicator is 0 and zero
// when only the numerator indicator fails. Products accumulate as sums of
// log densities; callers compare in log space.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

#include "nlr/model.hpp"

namespace nlr {

enum class LrKind {
    Value,          // positive ratio; log_z holds log Z
    NumeratorZero,  // numerator support indicator failed: Z = 0
    Indeterminate,  // denominator support indicator failed: 0/0
};

struct LrValue {
    LrKind kind = LrKind::Indeterminate;
    double log_z = std::numeric_limits<double>::quiet_NaN();

    static LrValue value(double log_z) { return {LrKind::Value, log_z}; }
    static LrValue numerator_zero() {
        return {LrKind::NumeratorZero, -std::numeric_limits<double>::infinity()};
    }
    static LrValue indeterminate() { return {}; }

    bool is_value() const { return kind == LrKind::Value; }
    bool is_indeterminate() const { return kind == LrKind::Indeterminate; }
    bool is_zero() const { return kind == LrKind::NumeratorZero; }

    /// Z as a plain number (0 for NumeratorZero); only for reporting, all
    /// test comparisons stay in log space.
    double z() const {
        if (kind == LrKind::Indeterminate) return std::numeric_limits<double>::quiet_NaN();
        if (kind == LrKind::NumeratorZero) return 0.0;
        return std::exp(log_z);
    }
};

/// Z_n(h, hbar) for the benchmark (no-covariate) model.
inline LrValue lr_benchmark(const ModelSpec& model, const Sample& sample,
                            double theta0, double h, double hbar) {
    if (sample.size() == 0) throw std::invalid_argument("lr_benchmark: empty sample");
    const double n = static_cast<double>(sample.size());
    const double theta_num = theta0 + hbar / n;
    const double theta_den = theta0 + h / n;
    if (!model.theta_domain.contains(theta_num) || !model.theta_domain.contains(theta_den))
        throw std::invalid_argument("lr_benchmark: local parameter leaves theta domain");

    if (sample.min_y < model.boundary(theta_den)) return LrValue::indeterminate();
    if (sample.min_y < model.boundary(theta_num)) return LrValue::numerator_zero();

    double log_num = 0.0;
    double log_den = 0.0;
    for (double y : sample.y) {
        log_num += model.log_density(y, theta_num);
        log_den += model.log_density(y, theta_den);
    }
    // Densities can vanish inside the indicator region only for families
    // with a second (upper) support edge, e.g. the uniform family.
    if (std::isinf(log_den)) return LrValue::indeterminate();
    if (std::isinf(log_num)) return LrValue::numerator_zero();
    return LrValue::value(log_num - log_den);
}

/// Plug-in LR for the covariate model at nuisance estimate gamma_check:
/// Z_n(h, h_check, gamma_check) of the general family.
inline LrValue lr_plugin(const CovariateModelSpec& model, const Sample& sample,
                         double theta0, double h, double h_check,
                         std::span<const double> gamma_check) {
    if (sample.size() == 0) throw std::invalid_argument("lr_plugin: empty sample");
    if (!std::isfinite(h_check)) throw std::invalid_argument("lr_plugin: non-finite h_check");
    for (double g : gamma_check)
        if (!std::isfinite(g)) throw std::invalid_argument("lr_plugin: non-finite gamma_check");
    const double n = static_cast<double>(sample.size());
    const double theta_num = theta0 + h_check / n;
    const double theta_den = theta0 + h / n;

    const std::size_t L = model.level_count();
    // A sample without covariate labels is accepted for single-level models
    // (the benchmark-as-general reduction); every observation is level 0.
    const bool implicit_level0 = sample.x.empty();
    if (implicit_level0 && L != 1)
        throw std::invalid_argument("lr_plugin: sample lacks covariate labels");
    for (int level : sample.x)
        if (level < 0 || static_cast<std::size_t>(level) >= L)
            throw std::invalid_argument("lr_plugin: observation level not in model");

    const auto level_min = [&](std::size_t j) {
        return sample.min_y_level.empty() ? sample.min_y : sample.min_y_level[j];
    };
    for (std::size_t j = 0; j < L; ++j) {
        const double mj = level_min(j);
        if (!std::isfinite(mj)) continue;  // level absent from sample
        if (mj < model.boundary(static_cast<int>(j), theta_den)) return LrValue::indeterminate();
    }
    for (std::size_t j = 0; j < L; ++j) {
        const double mj = level_min(j);
        if (!std::isfinite(mj)) continue;
        if (mj < model.boundary(static_cast<int>(j), theta_num)) return LrValue::numerator_zero();
    }

    double log_num = 0.0;
    double log_den = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const int level = implicit_level0 ? 0 : sample.x[i];
        log_num += model.log_density(sample.y[i], level, theta_num, gamma_check);
        log_den += model.log_density(sample.y[i], level, theta_den, gamma_check);
    }
    if (std::isinf(log_den)) return LrValue::indeterminate();
    if (std::isinf(log_num)) return LrValue::numerator_zero();
    return LrValue::value(log_num - log_den);
}

/// Z_n^theta(0, hbar): the test-inversion statistic with theta playing the
/// null role. Identical to lr_benchmark with theta0 = theta, h = 0.
inline LrValue lr_at_theta(const ModelSpec& model, const Sample& sample,
                           double theta, double hbar) {
    return lr_benchmark(model, sample, theta, 0.0, hbar);
}

} // namespace nlr
