#pragma once

// The limit experiment. The LR process converges to Z(h,hbar) =
// e^{(hbar-h)/lambda} * D_{h,hbar} where D is driven by per-level shifted
// exponentials W_{h,j} = G_j*h + lambda_j*Exp(1). This module evaluates the
// limit quantities analytically: lambda from the boundary density, the
// one-sided and two-sided power envelopes, the local power lower bounds
// pi_L(h, hbar) (both the benchmark closed forms and the general exp-sum
// forms, kept as independent routes), and the limiting randomized
// Neyman-Pearson test itself.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "nlr/model.hpp"
#include "nlr/rng.hpp"

namespace nlr {

struct LevelParams {
    double slope;   // G_j
    double lambda;  // lambda_j
    double mass;    // Pr{X = a_j}
};

/// Limit-experiment constants: the exponential scale lambda and the
/// per-level triplets (G_j, lambda_j, mass_j). The benchmark is L = 1 with
/// mass 1 and lambda = 1 / (f(g(theta0)|theta0) * slope).
struct LimitParams {
    double lambda = 0.0;
    std::vector<LevelParams> per_level;

    std::size_t level_count() const { return per_level.size(); }

    bool all_slopes_positive() const {
        for (const auto& lvl : per_level)
            if (!(lvl.slope > 0.0)) return false;
        return true;
    }
};

inline LimitParams lambda_benchmark(const ModelSpec& model, double theta0) {
    if (!model.theta_domain.contains(theta0))
        throw std::invalid_argument("lambda_benchmark: theta0 outside domain");
    const double f0 = model.density(model.boundary(theta0), theta0);
    const double slope = model.boundary_slope(theta0);
    if (!(f0 > 0.0)) throw std::invalid_argument("lambda_benchmark: boundary density must be positive");
    if (!(slope > 0.0)) throw std::invalid_argument("lambda_benchmark: boundary slope must be positive");
    LimitParams p;
    p.lambda = 1.0 / (f0 * slope);
    p.per_level = {LevelParams{slope, 1.0 / f0, 1.0}};
    return p;
}

inline LimitParams lambda_general(const CovariateModelSpec& model, double theta0,
                                  std::span<const double> gamma) {
    model.validate();
    LimitParams p;
    double inv_lambda = 0.0;
    for (std::size_t j = 0; j < model.level_count(); ++j) {
        const int lj = static_cast<int>(j);
        const double bdry = model.boundary(lj, theta0);
        const double fj = model.density(bdry, lj, theta0, gamma);
        if (!(fj > 0.0))
            throw std::invalid_argument("lambda_general: boundary density must be positive");
        const double lambda_j = 1.0 / (model.masses[j] * fj);
        const double slope_j = model.boundary_slope(lj, theta0);
        p.per_level.push_back(LevelParams{slope_j, lambda_j, model.masses[j]});
        inv_lambda += slope_j / lambda_j;
    }
    p.lambda = 1.0 / inv_lambda;
    return p;
}

/// One draw of (W_{h,1}, ..., W_{h,L}) at local parameter h.
inline std::vector<double> sample_W(const LimitParams& params, double h, RngStream& rng) {
    std::vector<double> w;
    w.reserve(params.level_count());
    for (const auto& lvl : params.per_level)
        w.push_back(lvl.slope * h + lvl.lambda * rng.next_exponential());
    return w;
}

/// Z(h, hbar) evaluated at a realization w of the limit experiment drawn at h.
inline double limit_lr(const LimitParams& params, double h, double hbar,
                       std::span<const double> w) {
    if (w.size() != params.level_count())
        throw std::invalid_argument("limit_lr: dimension mismatch");
    for (std::size_t j = 0; j < w.size(); ++j)
        if (!(w[j] > params.per_level[j].slope * hbar)) return 0.0;
    return std::exp((hbar - h) / params.lambda);
}

/// Pr{D_{0,hbar} = 1} = exp(sum_j min{-G_j*hbar, 0} / lambda_j). Reduces to
/// e^{-hbar/lambda} when all G_j > 0 and hbar > 0, and to 1 when hbar <= 0.
inline double prob_indicator_one(const LimitParams& params, double hbar) {
    double exponent = 0.0;
    for (const auto& lvl : params.per_level)
        exponent += std::min(-lvl.slope * hbar, 0.0) / lvl.lambda;
    return std::exp(exponent);
}

// ---------------------------------------------------------------------------
// Power envelopes
// ---------------------------------------------------------------------------

/// Plus-side envelope Pi(h) = min{alpha * e^{h/lambda}, 1} for h >= 0.
inline double envelope_plus(const LimitParams& params, double alpha, double h) {
    if (h < 0.0) throw std::invalid_argument("envelope_plus: h must be >= 0");
    const double log_power = std::log(alpha) + h / params.lambda;
    return log_power >= 0.0 ? 1.0 : std::exp(log_power);
}

/// Minus-side envelope Pi(h) = 1 - (1-alpha) * e^{h/lambda} for h <= 0.
inline double envelope_minus(const LimitParams& params, double alpha, double h) {
    if (h > 0.0) throw std::invalid_argument("envelope_minus: h must be <= 0");
    return 1.0 - (1.0 - alpha) * std::exp(h / params.lambda);
}

/// Two-sided envelope: min{alpha e^{h/lambda}, 1} + 1 - min{e^{h/lambda}, 1}.
inline double envelope_twosided(const LimitParams& params, double alpha, double h) {
    if (h >= 0.0) return envelope_plus(params, alpha, h);
    return envelope_minus(params, alpha, h);
}

// ---------------------------------------------------------------------------
// Local power lower bounds pi_L(h, hbar)
// ---------------------------------------------------------------------------

/// Benchmark closed form for h, hbar > 0 (two branches by alpha vs
/// e^{-hbar/lambda}).
inline double lower_bound_plus_closed_form(double lambda, double alpha, double h, double hbar) {
    if (!(h > 0.0) || !(hbar > 0.0))
        throw std::invalid_argument("lower_bound_plus: h and hbar must be > 0");
    const double p = std::exp(-hbar / lambda);
    if (alpha <= p) return alpha * std::exp(std::min(h, hbar) / lambda);
    const double m = std::min(std::exp((h - hbar) / lambda), 1.0);
    return (alpha - p) / (1.0 - p) + m * (1.0 - alpha) / (1.0 - p);
}

/// Benchmark closed form for h, hbar < 0.
inline double lower_bound_minus_closed_form(double lambda, double alpha, double h, double hbar) {
    if (!(h < 0.0) || !(hbar < 0.0))
        throw std::invalid_argument("lower_bound_minus: h and hbar must be < 0");
    return std::min(std::exp((h - hbar) / lambda), 1.0) - (1.0 - alpha) * std::exp(h / lambda);
}

namespace detail {

template <typename TermFn>
double exp_sum(const LimitParams& params, TermFn&& term) {
    double s = 0.0;
    for (const auto& lvl : params.per_level) s += term(lvl) / lvl.lambda;
    return std::exp(s);
}

} // namespace detail

/// General exp-sum lower bound for the plus-side test, valid for arbitrary
/// sign of the slopes G_j as printed; branch chosen by alpha vs
/// Pr{D_{0,hbar}=1}.
inline double lower_bound_plus(const LimitParams& params, double alpha, double h, double hbar) {
    if (!(h > 0.0) || !(hbar > 0.0))
        throw std::invalid_argument("lower_bound_plus: h and hbar must be > 0");
    const double p = prob_indicator_one(params, hbar);
    const double a = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min(l.slope * (h - hbar), 0.0);
    });
    const double b = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min({l.slope * (h - hbar), l.slope * h, 0.0});
    });
    if (alpha <= p) {
        const double c = detail::exp_sum(params, [&](const LevelParams& l) {
            return std::min(l.slope * h, std::max(l.slope, 0.0) * hbar);
        });
        return a - b + alpha * c;
    }
    const double c = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min(l.slope * h, 0.0);
    });
    return a + (alpha - p) / (1.0 - p) * (c - b);
}

/// General exp-sum lower bound for the minus-side test.
inline double lower_bound_minus(const LimitParams& params, double alpha, double h, double hbar) {
    if (!(h < 0.0) || !(hbar < 0.0))
        throw std::invalid_argument("lower_bound_minus: h and hbar must be < 0");
    const double a = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min(l.slope * (h - hbar), 0.0);
    });
    const double b = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min({l.slope * (h - hbar), l.slope * h, 0.0});
    });
    const double c = detail::exp_sum(params, [&](const LevelParams& l) {
        return std::min(l.slope * h, std::min(l.slope, 0.0) * hbar);
    });
    return a - b + alpha * c;
}

// ---------------------------------------------------------------------------
// Limiting Neyman-Pearson test
// ---------------------------------------------------------------------------

/// The limiting randomized NP test of H0: W ~ f_W(.|0) vs H1: W ~ f_W(.|hbar),
/// applied to a realization w. Equality branches are detected through the
/// binary indicator structure (the limit LR takes exactly two values), never
/// through floating-point comparison of densities. Consumes exactly one
/// uniform draw per invocation.
inline int np_limit_test(const LimitParams& params, double alpha, double hbar,
                         std::span<const double> w, RngStream& rng) {
    if (w.size() != params.level_count())
        throw std::invalid_argument("np_limit_test: dimension mismatch");
    const double u = rng.next_uniform();

    const auto indicator_at = [&](double threshold_h) {
        for (std::size_t j = 0; j < w.size(); ++j)
            if (!(w[j] > params.per_level[j].slope * threshold_h)) return 0;
        return 1;
    };
    const int d_hbar = indicator_at(hbar);
    const int d_zero = indicator_at(0.0);

    if (hbar > 0.0) {
        const double p = prob_indicator_one(params, hbar);
        if (alpha <= p) {
            // Reject when Z(hbar,hbar) > e^{hbar/lambda} Z(hbar,0),
            // i.e. d_hbar > d_zero; randomize with alpha/p on equality.
            if (d_hbar > d_zero) return 1;
            if (d_hbar == d_zero) return u < alpha / p ? 1 : 0;
            return 0;
        }
        // alpha > p: reject when Z(hbar,hbar) > 0; randomize at zero.
        if (d_hbar == 1) return 1;
        return u < (alpha - p) / (1.0 - p) ? 1 : 0;
    }
    // hbar < 0: reject when d_hbar > d_zero; randomize with alpha on equality.
    if (d_hbar > d_zero) return 1;
    if (d_hbar == d_zero) return u < alpha ? 1 : 0;
    return 0;
}

} // namespace nlr
