#pragma once

// Auxiliary-sample estimation for the general (nuisance-parameter) tests:
// sample splitting, nuisance MLE gamma_check, per-level plug-in scales
// lambda_check_j, the aggregate lambda_check, and the plug-in alternative
// h_check. Estimates must come from data disjoint from the main sample;
// the test entry points enforce this with a content-overlap check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "nlr/limit.hpp"
#include "nlr/model.hpp"
#include "nlr/rng.hpp"

namespace nlr {

namespace detail {

/// Golden-section maximizer on [lo, hi]; assumes a unimodal (or flat)
/// objective. Returns the interior argmax to within xtol.
template <typename Fn>
double golden_section_max(Fn&& f, double lo, double hi, double xtol, int max_iter = 400) {
    constexpr double invphi = 0.6180339887498948482;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < max_iter && (b - a) > xtol; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

} // namespace detail

/// Split rules: FirstHalf keeps the first floor(n/2) observations as the
/// main sample; Seeded permutes indices first with the given seed.
struct SplitRule {
    enum class Kind { FirstHalf, Seeded };
    Kind kind = Kind::FirstHalf;
    std::uint64_t seed = 0;

    static SplitRule first_half() { return {Kind::FirstHalf, 0}; }
    static SplitRule seeded(std::uint64_t seed) { return {Kind::Seeded, seed}; }
};

struct SplitSampleResult {
    Sample main;
    Sample aux;
};

inline SplitSampleResult split_sample(const Sample& full, const SplitRule& rule,
                                      std::size_t num_levels = 0) {
    const std::size_t n = full.size();
    if (n < 2) throw std::invalid_argument("split_sample: need at least 2 observations");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (rule.kind == SplitRule::Kind::Seeded) {
        RngStream rng(rule.seed);
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
            std::swap(order[i], order[j]);
        }
    }

    const std::size_t n_main = n / 2;
    SplitSampleResult out;
    out.main.y.reserve(n_main);
    out.aux.y.reserve(n - n_main);
    for (std::size_t k = 0; k < n; ++k) {
        Sample& dst = k < n_main ? out.main : out.aux;
        dst.y.push_back(full.y[order[k]]);
        if (full.has_covariates()) dst.x.push_back(full.x[order[k]]);
    }
    out.main.finalize(num_levels);
    out.aux.finalize(num_levels);
    return out;
}

/// Maximizes the aux-sample log likelihood over gamma at the null theta0 by
/// coordinate-wise golden-section search (tolerance 1e-8 per coordinate).
/// Models without nuisance parameters return an empty vector unchanged.
inline std::vector<double> estimate_gamma(const CovariateModelSpec& model,
                                          const Sample& aux, double theta0) {
    if (aux.size() == 0) throw std::invalid_argument("estimate_gamma: empty aux sample");
    if (model.gamma_dim == 0) return {};

    std::vector<double> gamma = model.gamma_init.empty()
                                    ? std::vector<double>(model.gamma_dim, 1.0)
                                    : model.gamma_init;
    const auto loglik = [&](std::span<const double> g) {
        double s = 0.0;
        for (std::size_t i = 0; i < aux.size(); ++i)
            s += model.log_density(aux.y[i], aux.x.empty() ? 0 : aux.x[i], theta0, g);
        return s;
    };

    const auto coord_bound = [&](const std::vector<double>& bounds, std::size_t d, double fallback) {
        return bounds.size() == model.gamma_dim ? bounds[d] : fallback;
    };

    constexpr double xtol = 1e-8;
    constexpr int max_sweeps = 200;
    double prev_ll = loglik(gamma);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_move = 0.0;
        for (std::size_t d = 0; d < model.gamma_dim; ++d) {
            const double lo_d = coord_bound(model.gamma_lower, d, -std::numeric_limits<double>::infinity());
            const double hi_d = coord_bound(model.gamma_upper, d, std::numeric_limits<double>::infinity());
            const double center = gamma[d];
            const auto f1 = [&](double v) {
                std::vector<double> g = gamma;
                g[d] = v;
                return loglik(g);
            };
            // Expand the bracket until the center beats both edges.
            double half = std::max(0.5, 0.5 * std::fabs(center));
            double fc = f1(center);
            double lo = std::max(center - half, lo_d);
            double hi = std::min(center + half, hi_d);
            for (int grow = 0; grow < 60; ++grow) {
                const double flo = f1(lo);
                const double fhi = f1(hi);
                if (flo <= fc && fhi <= fc) break;
                fc = std::max({fc, flo, fhi});
                half *= 2.0;
                lo = std::max(center - half, lo_d);
                hi = std::min(center + half, hi_d);
                if (lo == lo_d && hi == hi_d) break;
            }
            // Inner tolerance well below the sweep threshold, so successive
            // sweeps of a separable likelihood settle instead of oscillating.
            const double best = detail::golden_section_max(f1, lo, hi, 0.02 * xtol);
            max_move = std::max(max_move, std::fabs(best - gamma[d]));
            gamma[d] = best;
        }
        // Stop on coordinate convergence, or when a full sweep no longer
        // improves the likelihood beyond floating-point resolution (the
        // objective is flat to double precision near the maximizer).
        const double ll = loglik(gamma);
        if (max_move < xtol || ll - prev_ll <= 1e-9 * (1.0 + std::fabs(ll))) return gamma;
        prev_ll = ll;
    }
    throw std::runtime_error("estimate_gamma: coordinate search did not converge");
}

/// Per-level plug-in estimator
///   lambda_check_j = { (1/n) sum_i I{X_i = a_j} * f(g(a_j,theta0)|a_j,theta0,gamma_check) }^{-1}.
/// Every level must appear in the aux sample.
inline std::vector<double> estimate_lambda_levels(const CovariateModelSpec& model,
                                                  const Sample& aux, double theta0,
                                                  std::span<const double> gamma_check) {
    const std::size_t L = model.level_count();
    std::vector<std::size_t> counts(L, 0);
    for (int level : aux.x) {
        if (level < 0 || static_cast<std::size_t>(level) >= L)
            throw std::invalid_argument("estimate_lambda_levels: bad level in aux sample");
        ++counts[static_cast<std::size_t>(level)];
    }
    if (aux.x.empty() && L == 1) counts[0] = aux.size();

    std::vector<double> lambda_j(L);
    for (std::size_t j = 0; j < L; ++j) {
        if (counts[j] == 0)
            throw std::runtime_error("estimate_lambda_levels: level " + std::to_string(j) +
                                     " absent from aux sample; estimator undefined");
        const int lj = static_cast<int>(j);
        const double fj = model.density(model.boundary(lj, theta0), lj, theta0, gamma_check);
        if (!(fj > 0.0))
            throw std::runtime_error("estimate_lambda_levels: zero boundary density");
        const double freq = static_cast<double>(counts[j]) / static_cast<double>(aux.size());
        lambda_j[j] = 1.0 / (freq * fj);
    }
    return lambda_j;
}

/// Assembles LimitParams from per-level estimates (slopes from the model,
/// masses as observed frequencies implied by the lambda_check_j; the mass
/// entry is informational only).
inline LimitParams assemble_limit_estimate(const CovariateModelSpec& model, double theta0,
                                           std::span<const double> lambda_check_j) {
    LimitParams p;
    double inv_lambda = 0.0;
    for (std::size_t j = 0; j < model.level_count(); ++j) {
        const double slope = model.boundary_slope(static_cast<int>(j), theta0);
        p.per_level.push_back(LevelParams{slope, lambda_check_j[j], model.masses[j]});
        inv_lambda += slope / lambda_check_j[j];
    }
    p.lambda = 1.0 / inv_lambda;
    return p;
}

struct HbarSide {
    enum class Kind { Plus, Minus };
    Kind kind;
    double pi = 1.0;   // Plus: envelope inversion level
    double M = 50.0;   // Minus: truncation constant

    static HbarSide plus(double pi = 1.0) { return {Kind::Plus, pi, 0.0}; }
    static HbarSide minus(double M = 50.0) { return {Kind::Minus, 0.0, M}; }
};

/// Plug-in alternative: Plus(pi) -> lambda_check * log(pi/alpha);
/// Minus(M) -> -M.
inline double select_h_check(const LimitParams& limit_est, double alpha, const HbarSide& side) {
    if (side.kind == HbarSide::Kind::Minus) return -side.M;
    if (!(side.pi > alpha) || side.pi > 1.0)
        throw std::invalid_argument("select_h_check: pi must lie in (alpha, 1]");
    return limit_est.lambda * std::log(side.pi / alpha);
}

namespace detail {

inline std::uint64_t double_bits(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
}

} // namespace detail

/// Bundle consumed by the general tests. `source_values` records the aux
/// sample the estimates were computed from, so the tests can reject
/// estimates that share observations with the main sample.
struct NuisanceEstimates {
    std::vector<double> gamma_check;
    std::vector<double> lambda_check_j;
    LimitParams limit;               // lambda = lambda_check, per_level = estimates
    double h_check_plus = 0.0;       // lambda_check * log(pi/alpha), pi = 1
    double h_check_minus = -50.0;    // -M
    std::unordered_set<std::uint64_t> source_values;
    std::size_t source_size = 0;

    /// Throws if any observation of `main` also appears in the source
    /// sample (exact value match; ties have probability zero under
    /// continuous sampling).
    void require_independent_from(const Sample& main) const {
        if (source_values.empty()) return;  // exact (known-parameter) estimates
        for (double v : main.y)
            if (source_values.count(detail::double_bits(v)) > 0)
                throw std::invalid_argument(
                    "nuisance estimates overlap the main sample; use a disjoint aux split");
    }
};

/// Convenience: gamma MLE, per-level lambda estimates, and plug-in h values
/// from one aux sample.
inline NuisanceEstimates estimate_all(const CovariateModelSpec& model, const Sample& aux,
                                      double theta0, double alpha, double truncation_M = 50.0) {
    NuisanceEstimates est;
    est.gamma_check = estimate_gamma(model, aux, theta0);
    est.lambda_check_j = estimate_lambda_levels(model, aux, theta0, est.gamma_check);
    est.limit = assemble_limit_estimate(model, theta0, est.lambda_check_j);
    est.h_check_plus = select_h_check(est.limit, alpha, HbarSide::plus());
    est.h_check_minus = -truncation_M;
    est.source_values.reserve(aux.size());
    for (double v : aux.y) est.source_values.insert(detail::double_bits(v));
    est.source_size = aux.size();
    return est;
}

/// Exact-parameter analogue of estimate_all; used for KnownNuisance policies
/// and the benchmark-as-general reduction.
inline NuisanceEstimates exact_estimates(const LimitParams& params,
                                         std::span<const double> gamma_true,
                                         double alpha, double truncation_M = 50.0) {
    NuisanceEstimates est;
    est.gamma_check.assign(gamma_true.begin(), gamma_true.end());
    for (const auto& lvl : params.per_level) est.lambda_check_j.push_back(lvl.lambda);
    est.limit = params;
    est.h_check_plus = select_h_check(params, alpha, HbarSide::plus());
    est.h_check_minus = -truncation_M;
    est.source_size = 0;
    return est;
}

// ---------------------------------------------------------------------------
// Maximum likelihood for the benchmark model (Wald baseline input)
// ---------------------------------------------------------------------------

/// MLE of theta over the feasible region {theta : g(theta) <= Y_(1)}.
/// Golden-section search over an adaptively widened bracket, with an explicit
/// boundary check: the feasibility edge g(theta) = Y_(1) is the maximizer for
/// boundary-MLE families (uniform, half-normal) and ties there are resolved
/// toward the edge.
inline double mle_theta(const ModelSpec& model, const Sample& sample) {
    if (sample.size() == 0) throw std::invalid_argument("mle_theta: empty sample");

    const auto loglik = [&](double theta) {
        double s = 0.0;
        for (double y : sample.y) s += model.log_density(y, theta);
        return s;
    };

    // Feasibility edge: g(theta_ub) = Y_(1), located by bisection
    // (g is strictly increasing on the tested families).
    double lo = sample.min_y - 1.0, hi = sample.min_y + 1.0;
    for (int grow = 0; model.boundary(lo) > sample.min_y && grow < 200; ++grow)
        lo -= std::max(1.0, hi - lo);
    for (int grow = 0; model.boundary(hi) < sample.min_y && grow < 200; ++grow)
        hi += std::max(1.0, hi - lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (model.boundary(mid) <= sample.min_y)
            lo = mid;
        else
            hi = mid;
    }
    double theta_ub = lo;
    theta_ub = std::min(theta_ub, model.theta_domain.hi);

    constexpr double xtol = 1e-10;
    double bracket = 10.0;
    double theta_int = theta_ub;
    for (int attempt = 0; attempt < 20; ++attempt) {
        const double lo_edge = std::max(theta_ub - bracket, model.theta_domain.lo);
        theta_int = detail::golden_section_max(loglik, lo_edge, theta_ub, xtol);
        if (theta_int > lo_edge + 1e-6 || lo_edge == model.theta_domain.lo) break;
        bracket *= 4.0;  // maximum sat at the lower edge: widen
    }

    const double ll_int = loglik(theta_int);
    const double ll_ub = loglik(theta_ub);
    if (!std::isfinite(ll_int) && !std::isfinite(ll_ub))
        throw std::runtime_error("mle_theta: likelihood not finite on feasible region");
    if (ll_ub >= ll_int - 1e-12 * std::max(1.0, std::fabs(ll_int))) return theta_ub;
    return theta_int;
}

} // namespace nlr
