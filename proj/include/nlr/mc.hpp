#pragma once

// Reproducible Monte Carlo power studies. Each (grid point, replication)
// pair owns an RNG stream derived from the master seed by counter hashing,
// so results are bit-identical across runs and thread counts; aggregation
// stores per-replication values and reduces them in index order.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "nlr/estimate.hpp"
#include "nlr/limit.hpp"
#include "nlr/model.hpp"
#include "nlr/nlr_test.hpp"
#include "nlr/rng.hpp"
#include "nlr/wald.hpp"

namespace nlr {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class Side { Plus, Minus, TwoSided };

inline const char* side_name(Side s) {
    switch (s) {
        case Side::Plus: return "plus";
        case Side::Minus: return "minus";
        case Side::TwoSided: return "two";
    }
    return "?";
}

inline Side parse_side(const std::string& s) {
    if (s == "plus") return Side::Plus;
    if (s == "minus") return Side::Minus;
    if (s == "two" || s == "twosided" || s == "two-sided") return Side::TwoSided;
    throw std::invalid_argument("unknown side: " + s);
}

enum class PowerAggregation {
    MeanRejectProbability,  // average the exact rejection probabilities
    CoinFlips,              // realize the randomization coin per replication
};

enum class EstimatorPolicy { KnownNuisance, SplitSample };

/// One Monte Carlo power-study design. `n` is the main-sample size; split-
/// sample scenarios draw 2n observations and use the second half as the
/// auxiliary estimation sample.
struct Scenario {
    std::string model_id = "halfnormal";
    double theta0 = 0.0;
    Side side = Side::Plus;
    double alpha = 0.05;
    std::optional<double> epsilon;
    std::optional<double> epsilon2;
    std::optional<double> epsilon3;
    HbarPolicy hbar = HbarPolicy::optimal();
    std::size_t n = 200;
    std::vector<double> h_grid;
    std::size_t replications = 2000;
    std::uint64_t master_seed = 0;
    EstimatorPolicy estimator_policy = EstimatorPolicy::KnownNuisance;
    PowerAggregation aggregation = PowerAggregation::MeanRejectProbability;
    double truncation_M = 50.0;

    void validate() const {
        if (h_grid.empty()) throw std::invalid_argument("scenario: empty h grid");
        if (replications < 1) throw std::invalid_argument("scenario: replications >= 1 required");
        if (n < 1) throw std::invalid_argument("scenario: n >= 1 required");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("scenario: alpha in (0,1)");
        for (double h : h_grid) {
            if (side == Side::Plus && h < 0.0)
                throw std::invalid_argument("scenario: plus-side grid must have h >= 0");
            if (side == Side::Minus && h > 0.0)
                throw std::invalid_argument("scenario: minus-side grid must have h <= 0");
        }
    }

    TestConfig test_config() const {
        TestConfig cfg;
        cfg.alpha = alpha;
        cfg.epsilon = epsilon;
        cfg.epsilon2 = epsilon2;
        cfg.epsilon3 = epsilon3;
        cfg.hbar = hbar;
        cfg.truncation_M = truncation_M;
        cfg.randomization = aggregation == PowerAggregation::CoinFlips
                                ? RandomizationPolicy::CoinFlip
                                : RandomizationPolicy::ReportProbability;
        return cfg;
    }
};

struct PowerPoint {
    double h = 0.0;
    double reject_rate = 0.0;
    double mc_se = 0.0;
    double envelope = 0.0;
    std::optional<double> lower_bound;
};

struct PowerStudy {
    std::vector<PowerPoint> points;
    std::vector<std::pair<std::string, std::string>> metadata;  // echoed as '#' lines
    Scenario scenario;
    double hbar_resolved = 0.0;   // population value (metadata; -inf for the sentinel)
    double epsilon_resolved = 0.0;
};

struct ComparisonStudy {
    PowerStudy nlr;
    PowerStudy wald;
};

// ---------------------------------------------------------------------------
// Parallel execution
// ---------------------------------------------------------------------------

/// Thread cap: explicit request, else NLR_THREADS, else hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("NLR_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    pool.reserve(spawn);
    for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline void aggregate_point(PowerPoint& pt, const std::vector<double>& values,
                            PowerAggregation mode) {
    const double R = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= R;
    pt.reject_rate = mean;
    if (mode == PowerAggregation::CoinFlips) {
        pt.mc_se = std::sqrt(mean * (1.0 - mean) / R);
    } else {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        pt.mc_se = R > 1.0 ? std::sqrt(ss / (R * (R - 1.0))) : 0.0;
    }
}

/// Realized rejection value of one outcome under the scenario's aggregation.
inline double realized_value(const TestOutcome& outcome, PowerAggregation mode) {
    if (mode == PowerAggregation::CoinFlips && outcome.coin.has_value())
        return static_cast<double>(*outcome.coin);
    return outcome.reject_probability;
}

#ifndef NDEBUG
/// Debug-mode seed ledger: every (grid, replication) stream key must be unique.
inline void check_seed_ledger(std::uint64_t master, std::size_t grid_size, std::size_t reps) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(grid_size * reps);
    for (std::size_t ih = 0; ih < grid_size; ++ih)
        for (std::size_t r = 0; r < reps; ++r)
            if (!seen.insert(derive_stream_key(master, ih, r)).second)
                throw std::logic_error("seed ledger: stream key reused across grid points");
}
#endif

} // namespace detail

// ---------------------------------------------------------------------------
// Power studies
// ---------------------------------------------------------------------------

namespace detail {

inline void fill_envelope_and_bound(PowerPoint& pt, const LimitParams& params,
                                    const Scenario& sc, double hbar_resolved) {
    switch (sc.side) {
        case Side::Plus:
            pt.envelope = envelope_plus(params, sc.alpha, pt.h);
            if (pt.h > 0.0 && std::isfinite(hbar_resolved))
                pt.lower_bound = lower_bound_plus(params, sc.alpha, pt.h, hbar_resolved);
            break;
        case Side::Minus:
            pt.envelope = envelope_minus(params, sc.alpha, pt.h);
            if (pt.h < 0.0) {
                // pi_L(h, -inf) converges to the envelope itself.
                pt.lower_bound = std::isfinite(hbar_resolved)
                                     ? lower_bound_minus(params, sc.alpha, pt.h, hbar_resolved)
                                     : envelope_minus(params, sc.alpha, pt.h);
            }
            break;
        case Side::TwoSided:
            pt.envelope = envelope_twosided(params, sc.alpha, pt.h);
            break;
    }
}

inline double resolved_epsilon(const Scenario& sc) {
    if (sc.epsilon) return *sc.epsilon;
    switch (sc.side) {
        case Side::Plus: return 0.9999;
        case Side::Minus: return 0.5;
        case Side::TwoSided: return 0.5;
    }
    return 0.5;
}

inline void echo_metadata(PowerStudy& study) {
    const Scenario& sc = study.scenario;
    auto& md = study.metadata;
    md.emplace_back("library_version", kLibraryVersion);
    md.emplace_back("model", sc.model_id);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", sc.theta0);
    md.emplace_back("theta0", buf);
    md.emplace_back("side", side_name(sc.side));
    std::snprintf(buf, sizeof buf, "%.10g", sc.alpha);
    md.emplace_back("alpha", buf);
    std::snprintf(buf, sizeof buf, "%.10g", study.epsilon_resolved);
    md.emplace_back("epsilon", buf);
    std::snprintf(buf, sizeof buf, "%.10g", study.hbar_resolved);
    md.emplace_back("hbar", buf);
    md.emplace_back("n", std::to_string(sc.n));
    md.emplace_back("replications", std::to_string(sc.replications));
    md.emplace_back("master_seed", std::to_string(sc.master_seed));
    md.emplace_back("aggregation", sc.aggregation == PowerAggregation::CoinFlips
                                       ? "coin-flips"
                                       : "mean-reject-probability");
    md.emplace_back("estimator_policy", sc.estimator_policy == EstimatorPolicy::SplitSample
                                            ? "split-sample"
                                            : "known-nuisance");
}

} // namespace detail

/// Runs the scenario on the benchmark (no-covariate) model.
inline PowerStudy run_power_study_benchmark(const Scenario& sc, unsigned threads) {
    const ModelSpec model = make_model(sc.model_id);
    const LimitParams params = lambda_benchmark(model, sc.theta0);
    const TestConfig base_config = sc.test_config();

    double hbar_resolved = 0.0;
    switch (sc.side) {
        case Side::Plus: hbar_resolved = detail::resolve_hbar_plus(params, base_config); break;
        case Side::Minus: hbar_resolved = detail::resolve_hbar_minus(params, base_config); break;
        case Side::TwoSided: hbar_resolved = hbar_plus(params, sc.alpha, 1.0); break;
    }

    PowerStudy study;
    study.scenario = sc;
    study.hbar_resolved = hbar_resolved;
    study.epsilon_resolved = detail::resolved_epsilon(sc);

#ifndef NDEBUG
    detail::check_seed_ledger(sc.master_seed, sc.h_grid.size(), sc.replications);
#endif

    const double n = static_cast<double>(sc.n);
    for (std::size_t ih = 0; ih < sc.h_grid.size(); ++ih) {
        const double h = sc.h_grid[ih];
        const double theta_true = sc.theta0 + h / n;
        std::vector<double> values(sc.replications, 0.0);
        detail::parallel_for(sc.replications, threads, [&](std::size_t rep) {
            RngStream rng(derive_stream_key(sc.master_seed, ih, rep));
            const Sample sample = draw_sample(model, theta_true, sc.n, rng);
            TestOutcome outcome;
            switch (sc.side) {
                case Side::Plus: outcome = test_plus(model, sample, sc.theta0, base_config, &rng); break;
                case Side::Minus: outcome = test_minus(model, sample, sc.theta0, base_config, &rng); break;
                case Side::TwoSided: outcome = test_twosided(model, sample, sc.theta0, base_config, &rng); break;
            }
            values[rep] = detail::realized_value(outcome, sc.aggregation);
        });
        PowerPoint pt;
        pt.h = h;
        detail::aggregate_point(pt, values, sc.aggregation);
        detail::fill_envelope_and_bound(pt, params, sc, hbar_resolved);
        study.points.push_back(pt);
    }
    detail::echo_metadata(study);
    return study;
}

inline TestOutcome run_general_test(const CovariateModelSpec& model, const Sample& sample,
                                    double theta0, const NuisanceEstimates& est,
                                    const TestConfig& config, RngStream& rng, Side side) {
    switch (side) {
        case Side::Plus: return test_plus_general(model, sample, theta0, est, config, &rng);
        case Side::Minus: return test_minus_general(model, sample, theta0, est, config, &rng);
        case Side::TwoSided: return test_twosided_general(model, sample, theta0, est, config, &rng);
    }
    throw std::logic_error("unreachable");
}

/// Runs the scenario on a covariate model. Split-sample scenarios draw 2n
/// observations at the true parameter and split them into disjoint halves
/// (main n, aux n), reproducing the sample-splitting procedure.
inline PowerStudy run_power_study_general(const Scenario& sc, unsigned threads) {
    const CovariateModelSpec model = make_covariate_model(sc.model_id);
    const std::vector<double> gamma_true = model.gamma_true;
    const LimitParams true_params = lambda_general(model, sc.theta0, gamma_true);
    const TestConfig base_config = sc.test_config();

    const NuisanceEstimates known =
        exact_estimates(true_params, gamma_true, sc.alpha, sc.truncation_M);

    double hbar_resolved = 0.0;
    switch (sc.side) {
        case Side::Plus: hbar_resolved = detail::resolve_h_check_plus(known, base_config); break;
        case Side::Minus: hbar_resolved = -sc.truncation_M; break;
        case Side::TwoSided: hbar_resolved = known.h_check_plus; break;
    }

    PowerStudy study;
    study.scenario = sc;
    study.hbar_resolved = hbar_resolved;
    study.epsilon_resolved = detail::resolved_epsilon(sc);

#ifndef NDEBUG
    detail::check_seed_ledger(sc.master_seed, sc.h_grid.size(), sc.replications);
#endif

    const double n = static_cast<double>(sc.n);
    for (std::size_t ih = 0; ih < sc.h_grid.size(); ++ih) {
        const double h = sc.h_grid[ih];
        const double theta_true = sc.theta0 + h / n;
        std::vector<double> values(sc.replications, 0.0);
        detail::parallel_for(sc.replications, threads, [&](std::size_t rep) {
            RngStream rng(derive_stream_key(sc.master_seed, ih, rep));
            TestOutcome outcome;
            if (sc.estimator_policy == EstimatorPolicy::SplitSample) {
                const Sample full = draw_sample(model, theta_true, gamma_true, 2 * sc.n, rng);
                SplitSampleResult halves =
                    split_sample(full, SplitRule::first_half(), model.level_count());
                const NuisanceEstimates est =
                    estimate_all(model, halves.aux, sc.theta0, sc.alpha, sc.truncation_M);
                outcome = run_general_test(model, halves.main, sc.theta0, est, base_config, rng, sc.side);
            } else {
                const Sample sample = draw_sample(model, theta_true, gamma_true, sc.n, rng);
                outcome = run_general_test(model, sample, sc.theta0, known, base_config, rng, sc.side);
            }
            values[rep] = detail::realized_value(outcome, sc.aggregation);
        });
        PowerPoint pt;
        pt.h = h;
        detail::aggregate_point(pt, values, sc.aggregation);
        detail::fill_envelope_and_bound(pt, true_params, sc, hbar_resolved);
        study.points.push_back(pt);
    }
    detail::echo_metadata(study);
    return study;
}

/// Dispatches on the model id.
inline PowerStudy run_power_study(const Scenario& scenario, unsigned threads = 0) {
    scenario.validate();
    const unsigned t = resolve_threads(threads);
    return is_covariate_model_id(scenario.model_id) ? run_power_study_general(scenario, t)
                                                    : run_power_study_benchmark(scenario, t);
}

/// NLR-vs-Wald comparison with common random numbers: both tests see the
/// identical sample in every (h, replication) cell.
inline ComparisonStudy run_comparison(const Scenario& sc, unsigned threads = 0) {
    sc.validate();
    if (sc.side != Side::Plus)
        throw std::invalid_argument("run_comparison requires side = plus");
    const unsigned t = resolve_threads(threads);

    const ModelSpec model = make_model(sc.model_id);
    const LimitParams params = lambda_benchmark(model, sc.theta0);
    const TestConfig base_config = sc.test_config();
    const double hbar_resolved = detail::resolve_hbar_plus(params, base_config);

    WaldConfig wald_config;
    wald_config.alpha = sc.alpha;
    wald_config.theta0 = sc.theta0;

    ComparisonStudy out;
    out.nlr.scenario = sc;
    out.nlr.hbar_resolved = hbar_resolved;
    out.nlr.epsilon_resolved = detail::resolved_epsilon(sc);
    out.wald = out.nlr;

#ifndef NDEBUG
    detail::check_seed_ledger(sc.master_seed, sc.h_grid.size(), sc.replications);
#endif

    const double n = static_cast<double>(sc.n);
    for (std::size_t ih = 0; ih < sc.h_grid.size(); ++ih) {
        const double h = sc.h_grid[ih];
        const double theta_true = sc.theta0 + h / n;
        std::vector<double> nlr_values(sc.replications, 0.0);
        std::vector<double> wald_values(sc.replications, 0.0);
        detail::parallel_for(sc.replications, t, [&](std::size_t rep) {
            RngStream rng(derive_stream_key(sc.master_seed, ih, rep));
            const Sample sample = draw_sample(model, theta_true, sc.n, rng);
            const TestOutcome nlr_outcome = test_plus(model, sample, sc.theta0, base_config, &rng);
            const TestOutcome wald_outcome = wald_test(model, sample, wald_config);
            nlr_values[rep] = detail::realized_value(nlr_outcome, sc.aggregation);
            wald_values[rep] = wald_outcome.reject_probability;
        });
        PowerPoint pn, pw;
        pn.h = pw.h = h;
        detail::aggregate_point(pn, nlr_values, sc.aggregation);
        detail::aggregate_point(pw, wald_values, PowerAggregation::CoinFlips);
        detail::fill_envelope_and_bound(pn, params, sc, hbar_resolved);
        detail::fill_envelope_and_bound(pw, params, sc, hbar_resolved);
        out.nlr.points.push_back(pn);
        out.wald.points.push_back(pw);
    }
    detail::echo_metadata(out.nlr);
    detail::echo_metadata(out.wald);
    out.nlr.metadata.emplace_back("test", "nlr");
    out.wald.metadata.emplace_back("test", "wald");
    return out;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

/// Fixed 11-column schema; metadata echoed as '#'-prefixed comment lines.
/// Re-emission of the same study is byte-identical.
inline std::string csv_string(const PowerStudy& study) {
    std::string out;
    for (const auto& [key, value] : study.metadata)
        out += "# " + key + " = " + value + "\n";
    out += "h,reject_rate,mc_se,envelope,lower_bound,side,epsilon,hbar,n,alpha,seed\n";
    const Scenario& sc = study.scenario;
    for (const PowerPoint& pt : study.points) {
        out += detail::format_double(pt.h);
        out += ',';
        out += detail::format_double(pt.reject_rate);
        out += ',';
        out += detail::format_double(pt.mc_se);
        out += ',';
        out += detail::format_double(pt.envelope);
        out += ',';
        if (pt.lower_bound) out += detail::format_double(*pt.lower_bound);
        out += ',';
        out += side_name(sc.side);
        out += ',';
        out += detail::format_double(study.epsilon_resolved);
        out += ',';
        out += detail::format_double(study.hbar_resolved);
        out += ',';
        out += std::to_string(sc.n);
        out += ',';
        out += detail::format_double(sc.alpha);
        out += ',';
        out += std::to_string(sc.master_seed);
        out += '\n';
    }
    return out;
}

inline void emit_csv(const PowerStudy& study, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("emit_csv: cannot open " + path);
    const std::string body = csv_string(study);
    file.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!file) throw std::runtime_error("emit_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Shipped scenario presets
// ---------------------------------------------------------------------------

inline std::vector<double> linspace_grid(double lo, double hi, double step) {
    std::vector<double> g;
    const double dir = hi >= lo ? 1.0 : -1.0;
    const double s = dir * std::fabs(step);
    for (double v = lo; dir * (v - hi) <= 1e-12; v += s) {
        double r = v;
        if (std::fabs(r) < 1e-12) r = 0.0;
        g.push_back(r);
    }
    return g;
}

/// Named presets mirroring the shipped experiment designs.
inline Scenario preset_scenario(const std::string& name) {
    Scenario sc;
    sc.master_seed = 20240517;
    if (name == "fig1-upper") {
        sc.model_id = "halfnormal";
        sc.side = Side::Plus;
        sc.epsilon = 0.9999;
        sc.n = 200;
        sc.h_grid = linspace_grid(0.0, 5.0, 0.5);
    } else if (name == "fig1-lower") {
        sc.model_id = "halfnormal";
        sc.side = Side::Minus;
        sc.n = 200;
        sc.h_grid = linspace_grid(0.0, -5.0, 0.5);
    } else if (name == "fig-ch") {
        sc.model_id = "offset-truncnormal:1.25";
        sc.side = Side::Plus;
        sc.epsilon = 0.9999;
        sc.n = 20;
        sc.h_grid = linspace_grid(0.0, 5.0, 0.5);
    } else if (name == "appendix-hbar") {
        sc.model_id = "halfnormal";
        sc.side = Side::Plus;
        sc.epsilon = 0.5;
        sc.hbar = HbarPolicy::explicit_value(5.0);
        sc.n = 200;
        sc.h_grid = linspace_grid(0.0, 5.0, 0.5);
    } else if (name == "appendix-eps-plus") {
        sc.model_id = "halfnormal";
        sc.side = Side::Plus;
        sc.epsilon = 0.5;
        sc.hbar = HbarPolicy::explicit_value(3.7);
        sc.n = 200;
        sc.h_grid = linspace_grid(0.0, 5.0, 0.5);
    } else if (name == "appendix-n-plus") {
        sc.model_id = "halfnormal";
        sc.side = Side::Plus;
        sc.epsilon = 0.1;
        sc.n = 500;
        sc.h_grid = linspace_grid(0.0, 5.0, 0.5);
    } else if (name == "appendix-n-minus") {
        sc.model_id = "halfnormal";
        sc.side = Side::Minus;
        sc.epsilon = 0.01;
        sc.hbar = HbarPolicy::envelope_inversion(0.5);
        sc.n = 500;
        sc.h_grid = linspace_grid(0.0, -5.0, 0.5);
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return sc;
}

} // namespace nlr
