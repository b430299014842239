#pragma once

// Parametric families with parameter-dependent support: the observation Y
// has density factor f(y|theta) on the half line y >= g(theta), where the
// boundary g moves with theta (increasing slope throughout this library).
// Support membership is the caller's responsibility; density/log_density
// are only contracted on y >= g(theta).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlr/math.hpp"
#include "nlr/rng.hpp"

namespace nlr {

struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Scalar nonregular family: density factor f, support boundary g, their
/// slopes, and a sampler. Immutable after construction; samplers take an
/// externally supplied RNG stream (no hidden global state).
struct ModelSpec {
    std::string id;
    Interval theta_domain;
    std::function<double(double y, double theta)> density;
    std::function<double(double y, double theta)> log_density;
    std::function<double(double theta)> boundary;
    std::function<double(double theta)> boundary_slope;
    std::function<double(double theta, RngStream& rng)> sampler;
};

/// Conditional family with discrete covariate levels a_1..a_L and a regular
/// nuisance vector gamma: Y | X=a_j ~ f(y|a_j,theta,gamma) on y >= g(a_j,theta).
struct CovariateModelSpec {
    std::string id;
    Interval theta_domain;
    std::vector<double> levels;
    std::vector<double> masses;
    std::size_t gamma_dim = 0;
    std::vector<double> gamma_init;
    std::vector<double> gamma_true;
    std::vector<double> gamma_lower;   // optional per-coordinate search box
    std::vector<double> gamma_upper;

    std::function<double(double y, int level, double theta, std::span<const double> gamma)> density;
    std::function<double(double y, int level, double theta, std::span<const double> gamma)> log_density;
    std::function<double(int level, double theta)> boundary;
    std::function<double(int level, double theta)> boundary_slope;
    std::function<std::pair<double, int>(double theta, std::span<const double> gamma, RngStream& rng)> sampler;

    std::size_t level_count() const { return levels.size(); }

    void validate() const {
        if (levels.empty() || levels.size() != masses.size())
            throw std::invalid_argument("covariate model: levels/masses mismatch");
        double total = 0.0;
        for (double m : masses) {
            if (m <= 0.0) throw std::invalid_argument("covariate model: nonpositive level mass");
            total += m;
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw std::invalid_argument("covariate model: masses must sum to 1");
    }
};

/// An observed sample: y draws, optional per-observation level indices, and
/// cached minima used by the support indicators.
struct Sample {
    std::vector<double> y;
    std::vector<int> x;                    // empty for benchmark samples
    double min_y = std::numeric_limits<double>::infinity();
    std::vector<double> min_y_level;       // per-level minima (covariate samples)

    std::size_t size() const { return y.size(); }
    bool has_covariates() const { return !x.empty(); }

    void finalize(std::size_t num_levels = 0) {
        if (y.empty()) throw std::invalid_argument("sample must contain at least one observation");
        min_y = y.front();
        for (double v : y) min_y = std::min(min_y, v);
        if (num_levels > 0) {
            min_y_level.assign(num_levels, std::numeric_limits<double>::infinity());
            for (std::size_t i = 0; i < y.size(); ++i)
                min_y_level[static_cast<std::size_t>(x[i])] =
                    std::min(min_y_level[static_cast<std::size_t>(x[i])], y[i]);
        }
    }

    /// Order-independent content hash; used by the estimate/test independence check.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0x51ed270b81a2b7f5ULL;
        for (std::size_t i = 0; i < y.size(); ++i) {
            std::uint64_t bits;
            static_assert(sizeof(double) == sizeof(std::uint64_t));
            std::memcpy(&bits, &y[i], sizeof(bits));
            if (!x.empty()) bits ^= static_cast<std::uint64_t>(x[i]) * 0x9e3779b97f4a7c15ULL;
            h ^= detail::splitmix64_finalize(bits + 0x1d8e4e27c47d124fULL);
        }
        return h;
    }
};

// ---------------------------------------------------------------------------
// Builtin families
// ---------------------------------------------------------------------------

/// Half-normal shift family: f(y|theta) = 2*phi(y-theta) on y >= theta.
inline ModelSpec builtin_halfnormal_shift() {
    ModelSpec m;
    m.id = "halfnormal";
    m.theta_domain = Interval{};
    m.density = [](double y, double theta) { return 2.0 * normal_pdf(y - theta); };
    m.log_density = [](double y, double theta) {
        return 0.69314718055994530941723212145818 + normal_log_pdf(y - theta);
    };
    m.boundary = [](double theta) { return theta; };
    m.boundary_slope = [](double) { return 1.0; };
    m.sampler = [](double theta, RngStream& rng) {
        return theta + std::fabs(rng.next_normal());
    };
    return m;
}

/// N(theta,1) restricted to [theta - offset, inf): f = phi(y-theta)/Phi(offset),
/// g(theta) = theta - offset. Sampler rejects N(theta,1) draws below the
/// boundary (acceptance probability Phi(offset)).
inline ModelSpec builtin_offset_truncnormal(double offset) {
    if (!(offset > 0.0)) throw std::invalid_argument("offset-truncnormal requires offset > 0");
    ModelSpec m;
    m.id = "offset-truncnormal:" + std::to_string(offset);
    m.theta_domain = Interval{};
    const double norm = normal_cdf(offset);
    const double log_norm = std::log(norm);
    m.density = [norm](double y, double theta) { return normal_pdf(y - theta) / norm; };
    m.log_density = [log_norm](double y, double theta) {
        return normal_log_pdf(y - theta) - log_norm;
    };
    m.boundary = [offset](double theta) { return theta - offset; };
    m.boundary_slope = [](double) { return 1.0; };
    m.sampler = [offset](double theta, RngStream& rng) {
        for (;;) {
            const double z = rng.next_normal();
            if (z >= -offset) return theta + z;
        }
    };
    return m;
}

/// Uniform shift family U(theta, theta+1). Canonical monotone-LR example;
/// note the upper support edge also moves with theta, so the density factor
/// vanishes above theta + 1.
inline ModelSpec builtin_uniform_shift() {
    ModelSpec m;
    m.id = "uniform";
    m.theta_domain = Interval{};
    m.density = [](double y, double theta) {
        return (y <= theta + 1.0 && y >= theta) ? 1.0 : 0.0;
    };
    m.log_density = [](double y, double theta) {
        return (y <= theta + 1.0 && y >= theta)
                   ? 0.0
                   : -std::numeric_limits<double>::infinity();
    };
    m.boundary = [](double theta) { return theta; };
    m.boundary_slope = [](double) { return 1.0; };
    m.sampler = [](double theta, RngStream& rng) { return theta + rng.next_uniform(); };
    return m;
}

/// Two-level covariate family with shifted-exponential conditionals:
/// Y | X=a_j ~ g_j(theta) + Exp(scale gamma_j) with g_j(theta) = theta - c_j.
/// Boundary densities are 1/gamma_j, so the true gamma = (2,4) with masses
/// (1/2,1/2) gives per-level lambda (4,8) and overall lambda 8/3.
inline CovariateModelSpec builtin_toy2_exp() {
    CovariateModelSpec m;
    m.id = "toy2-exp";
    m.theta_domain = Interval{};
    m.levels = {0.0, 1.0};
    m.masses = {0.5, 0.5};
    m.gamma_dim = 2;
    m.gamma_true = {2.0, 4.0};
    m.gamma_init = {1.0, 1.0};
    m.gamma_lower = {1e-6, 1e-6};
    m.gamma_upper = {1e6, 1e6};
    const std::vector<double> shift = {1.0, 2.0};
    m.boundary = [shift](int level, double theta) { return theta - shift[static_cast<std::size_t>(level)]; };
    m.boundary_slope = [](int, double) { return 1.0; };
    m.density = [shift](double y, int level, double theta, std::span<const double> gamma) {
        const double scale = gamma[static_cast<std::size_t>(level)];
        const double v = y - (theta - shift[static_cast<std::size_t>(level)]);
        return std::exp(-v / scale) / scale;
    };
    m.log_density = [shift](double y, int level, double theta, std::span<const double> gamma) {
        const double scale = gamma[static_cast<std::size_t>(level)];
        const double v = y - (theta - shift[static_cast<std::size_t>(level)]);
        return -v / scale - std::log(scale);
    };
    m.sampler = [shift](double theta, std::span<const double> gamma, RngStream& rng) {
        const int level = rng.next_uniform() < 0.5 ? 0 : 1;
        const double scale = gamma[static_cast<std::size_t>(level)];
        const double y = theta - shift[static_cast<std::size_t>(level)] + scale * rng.next_exponential();
        return std::make_pair(y, level);
    };
    return m;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline Sample draw_sample(const ModelSpec& model, double theta, std::size_t n, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("draw_sample requires n >= 1");
    if (!model.theta_domain.contains(theta))
        throw std::invalid_argument("draw_sample: theta outside model domain");
    Sample s;
    s.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.y.push_back(model.sampler(theta, rng));
    s.finalize();
    return s;
}

inline Sample draw_sample(const CovariateModelSpec& model, double theta,
                          std::span<const double> gamma, std::size_t n, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("draw_sample requires n >= 1");
    if (!model.theta_domain.contains(theta))
        throw std::invalid_argument("draw_sample: theta outside model domain");
    Sample s;
    s.y.reserve(n);
    s.x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto [y, level] = model.sampler(theta, gamma, rng);
        s.y.push_back(y);
        s.x.push_back(level);
    }
    s.finalize(model.level_count());
    return s;
}

// ---------------------------------------------------------------------------
// String-id registry (CLI and config files)
// ---------------------------------------------------------------------------

/// Resolves "halfnormal", "uniform", or "offset-truncnormal:<offset>".
inline ModelSpec make_model(const std::string& id) {
    if (id == "halfnormal") return builtin_halfnormal_shift();
    if (id == "uniform") return builtin_uniform_shift();
    const std::string prefix = "offset-truncnormal:";
    if (id.rfind(prefix, 0) == 0) {
        const std::string arg = id.substr(prefix.size());
        std::size_t pos = 0;
        const double offset = std::stod(arg, &pos);
        if (pos != arg.size()) throw std::invalid_argument("bad offset in model id: " + id);
        return builtin_offset_truncnormal(offset);
    }
    throw std::invalid_argument("unknown model id: " + id);
}

inline CovariateModelSpec make_covariate_model(const std::string& id) {
    if (id == "toy2-exp") return builtin_toy2_exp();
    throw std::invalid_argument("unknown covariate model id: " + id);
}

inline bool is_covariate_model_id(const std::string& id) {
    return id == "toy2-exp";
}

} // namespace nlr
