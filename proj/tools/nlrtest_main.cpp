// nlrtest: command-line front end for the NLR test library.
//
// Subcommands:
//   test          run one test on a data file, print a one-line JSON record
//   power         Monte Carlo power study -> CSV
//   envelope      power envelope / lower-bound curve -> CSV (no RNG)
//   cs            confidence set by test inversion over a theta grid -> CSV
//   compare-wald  paired NLR/Wald power study with common random numbers
//
// Exit codes: 0 success, 2 configuration/usage error, 1 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "nlr/mc.hpp"

using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// --- helpers ---------------------------------------------------------------

std::vector<double> read_data_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file: " + path);
    std::vector<double> values;
    std::string token;
    while (in >> token) {
        if (token.front() == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        std::replace(token.begin(), token.end(), ',', ' ');
        std::istringstream ts(token);
        double v;
        while (ts >> v) values.push_back(v);
    }
    if (values.empty()) throw std::runtime_error("data file is empty: " + path);
    return values;
}

nlr::HbarPolicy parse_hbar(const std::string& text) {
    if (text == "auto") return nlr::HbarPolicy::optimal();
    if (text == "-inf" || text == "-INF")
        return nlr::HbarPolicy::explicit_value(-std::numeric_limits<double>::infinity());
    if (text.rfind("pi:", 0) == 0)
        return nlr::HbarPolicy::envelope_inversion(std::stod(text.substr(3)));
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw CLI::ValidationError("--hbar", "expected a number, 'auto', 'pi:<p>' or '-inf'");
    return nlr::HbarPolicy::explicit_value(v);
}

std::vector<double> parse_grid(const std::string& text) {
    // "lo:hi:step" or comma-separated values.
    if (text.find(':') != std::string::npos) {
        double lo, hi, step;
        char c1, c2;
        std::istringstream in(text);
        if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':')
            throw CLI::ValidationError("--h-grid", "expected lo:hi:step");
        return nlr::linspace_grid(lo, hi, step);
    }
    std::vector<double> grid;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) grid.push_back(std::stod(item));
    return grid;
}

/// Flat `key = value` scenario file; '#' starts a comment.
void apply_config_file(const std::string& path, nlr::Scenario& sc) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (key == "model_id") sc.model_id = value;
        else if (key == "theta0") sc.theta0 = std::stod(value);
        else if (key == "side") sc.side = nlr::parse_side(value);
        else if (key == "alpha") sc.alpha = std::stod(value);
        else if (key == "epsilon") sc.epsilon = std::stod(value);
        else if (key == "epsilon2") sc.epsilon2 = std::stod(value);
        else if (key == "epsilon3") sc.epsilon3 = std::stod(value);
        else if (key == "hbar_policy") sc.hbar = parse_hbar(value);
        else if (key == "n") sc.n = std::stoul(value);
        else if (key == "h_grid") sc.h_grid = parse_grid(value);
        else if (key == "replications") sc.replications = std::stoul(value);
        else if (key == "master_seed") sc.master_seed = std::stoull(value);
        else if (key == "estimator_policy")
            sc.estimator_policy = value == "split-sample" ? nlr::EstimatorPolicy::SplitSample
                                                          : nlr::EstimatorPolicy::KnownNuisance;
        else if (key == "truncation_M") sc.truncation_M = std::stod(value);
        else throw std::runtime_error("unknown config key: " + key);
    }
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

void maybe_write_gnuplot(const std::string& csv_path, bool enabled) {
    if (!enabled) return;
    const std::string script =
        "set datafile separator ','\n"
        "set key left top\n"
        "set xlabel 'h'\n"
        "set ylabel 'power'\n"
        "plot '" + csv_path + "' using 1:2 with linespoints title 'rejection rate', \\\n"
        "     '" + csv_path + "' using 1:4 with lines title 'envelope'\n";
    write_text(csv_path + ".gnuplot", script);
}

std::string format_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// --- subcommand bodies -------------------------------------------------------

struct TestArgs {
    std::string model = "halfnormal";
    double theta0 = 0.0;
    std::string side = "plus";
    double alpha = 0.05;
    std::string epsilon = "auto";
    std::string hbar = "auto";
    std::string data_path;
    std::uint64_t seed = 0;
    bool coin = false;
};

int run_test_command(const TestArgs& args) {
    const nlr::ModelSpec model = nlr::make_model(args.model);
    nlr::Sample sample;
    sample.y = read_data_file(args.data_path);
    sample.finalize();

    nlr::TestConfig cfg;
    cfg.alpha = args.alpha;
    cfg.hbar = parse_hbar(args.hbar);
    if (args.epsilon != "auto") cfg.epsilon = std::stod(args.epsilon);
    cfg.coin_seed = args.seed;
    cfg.randomization = args.coin ? nlr::RandomizationPolicy::CoinFlip
                                  : nlr::RandomizationPolicy::ReportProbability;

    nlr::TestOutcome out;
    const nlr::Side side = nlr::parse_side(args.side);
    switch (side) {
        case nlr::Side::Plus: out = nlr::test_plus(model, sample, args.theta0, cfg); break;
        case nlr::Side::Minus: out = nlr::test_minus(model, sample, args.theta0, cfg); break;
        case nlr::Side::TwoSided: out = nlr::test_twosided(model, sample, args.theta0, cfg); break;
    }

    json record;
    if (out.statistic.is_indeterminate())
        record["statistic"] = "indeterminate";
    else
        record["statistic"] = out.statistic.z();
    record["branch"] = nlr::branch_name(out.branch);
    record["reject_probability"] = out.reject_probability;
    if (out.coin.has_value())
        record["coin"] = *out.coin;
    else
        record["coin"] = nullptr;
    record["hbar_used"] = std::isfinite(out.hbar_used) ? json(out.hbar_used) : json("-inf");
    record["lambda_used"] = out.lambda_used;
    std::cout << record.dump() << "\n";
    return kExitOk;
}

struct PowerArgs {
    nlr::Scenario scenario;
    std::string preset;
    std::string config_path;
    std::string out_path;
    std::string hbar = "";
    std::string h_grid = "";
    bool coin = false;
    bool gnuplot = false;
};

int run_power_command(CLI::App* cmd, PowerArgs& args) {
    nlr::Scenario sc = args.preset.empty() ? nlr::Scenario{} : nlr::preset_scenario(args.preset);
    if (args.preset.empty()) sc.h_grid = nlr::linspace_grid(0.0, 5.0, 0.5);
    if (!args.config_path.empty()) apply_config_file(args.config_path, sc);

    // Explicit flags override preset and config values.
    if (cmd->count("--model")) sc.model_id = args.scenario.model_id;
    if (cmd->count("--theta0")) sc.theta0 = args.scenario.theta0;
    if (cmd->count("--side")) sc.side = args.scenario.side;
    if (cmd->count("--alpha")) sc.alpha = args.scenario.alpha;
    if (cmd->count("--epsilon")) sc.epsilon = args.scenario.epsilon;
    if (cmd->count("--n")) sc.n = args.scenario.n;
    if (cmd->count("--replications")) sc.replications = args.scenario.replications;
    sc.master_seed = args.scenario.master_seed;
    if (cmd->count("--estimator")) sc.estimator_policy = args.scenario.estimator_policy;
    if (!args.hbar.empty()) sc.hbar = parse_hbar(args.hbar);
    if (!args.h_grid.empty()) sc.h_grid = parse_grid(args.h_grid);
    if (args.coin) sc.aggregation = nlr::PowerAggregation::CoinFlips;

    const nlr::PowerStudy study = nlr::run_power_study(sc);
    const std::string body = nlr::csv_string(study);
    if (args.out_path.empty()) {
        std::cout << body;
    } else {
        write_text(args.out_path, body);
        maybe_write_gnuplot(args.out_path, args.gnuplot);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal one- and two-sided tests for support-boundary models"};
    app.require_subcommand(1);

    // --- test ---
    TestArgs test_args;
    CLI::App* test_cmd = app.add_subcommand("test", "run one test on a data file");
    test_cmd->add_option("--model", test_args.model, "model id");
    test_cmd->add_option("--theta0", test_args.theta0, "null value of theta");
    test_cmd->add_option("--side", test_args.side, "plus | minus | two");
    test_cmd->add_option("--alpha", test_args.alpha, "significance level");
    test_cmd->add_option("--epsilon", test_args.epsilon, "tuning constant or 'auto'");
    test_cmd->add_option("--hbar", test_args.hbar, "number, 'auto', 'pi:<p>' or '-inf'");
    test_cmd->add_option("--data", test_args.data_path, "data file (one value per line)")
        ->required();
    test_cmd->add_option("--seed", test_args.seed, "seed for the randomization coin")->required();
    test_cmd->add_flag("--coin", test_args.coin, "realize the randomization coin");

    // --- power ---
    PowerArgs power_args;
    CLI::App* power_cmd = app.add_subcommand("power", "Monte Carlo power study -> CSV");
    power_cmd->add_option("--preset", power_args.preset,
                          "fig1-upper | fig1-lower | fig-ch | appendix-*");
    power_cmd->add_option("--config", power_args.config_path, "key = value scenario file");
    power_cmd->add_option("--model", power_args.scenario.model_id, "model id");
    power_cmd->add_option("--theta0", power_args.scenario.theta0, "null value of theta");
    power_cmd->add_option_function<std::string>(
        "--side", [&](const std::string& s) { power_args.scenario.side = nlr::parse_side(s); },
        "plus | minus | two");
    power_cmd->add_option("--alpha", power_args.scenario.alpha, "significance level");
    power_cmd->add_option_function<double>(
        "--epsilon", [&](double e) { power_args.scenario.epsilon = e; }, "tuning constant");
    power_cmd->add_option("--hbar", power_args.hbar, "number, 'auto', 'pi:<p>' or '-inf'");
    power_cmd->add_option("--n", power_args.scenario.n, "sample size");
    power_cmd->add_option("--h-grid", power_args.h_grid, "lo:hi:step or comma list");
    power_cmd->add_option("--replications", power_args.scenario.replications, "MC replications");
    power_cmd->add_option("--seed", power_args.scenario.master_seed, "master seed")->required();
    power_cmd->add_option_function<std::string>(
        "--estimator",
        [&](const std::string& s) {
            power_args.scenario.estimator_policy = s == "split-sample"
                                                       ? nlr::EstimatorPolicy::SplitSample
                                                       : nlr::EstimatorPolicy::KnownNuisance;
        },
        "known-nuisance | split-sample");
    power_cmd->add_option("--out", power_args.out_path, "output CSV path (default stdout)");
    power_cmd->add_flag("--coin", power_args.coin, "aggregate coin flips instead of probabilities");
    power_cmd->add_flag("--gnuplot", power_args.gnuplot, "also write a gnuplot script");

    // --- envelope ---
    struct {
        std::string model = "halfnormal";
        double theta0 = 0.0;
        std::string side = "plus";
        double alpha = 0.05;
        double h_max = 5.0;
        double step = 0.1;
        std::string hbar = "auto";
        std::string out_path;
    } env_args;
    CLI::App* env_cmd = app.add_subcommand("envelope", "power envelope curve -> CSV (no RNG)");
    env_cmd->add_option("--model", env_args.model, "model id");
    env_cmd->add_option("--theta0", env_args.theta0, "null value of theta");
    env_cmd->add_option("--side", env_args.side, "plus | minus | two");
    env_cmd->add_option("--alpha", env_args.alpha, "significance level");
    env_cmd->add_option("--h-max", env_args.h_max, "grid endpoint (absolute value)");
    env_cmd->add_option("--step", env_args.step, "grid step");
    env_cmd->add_option("--hbar", env_args.hbar, "alternative for the lower-bound column");
    env_cmd->add_option("--out", env_args.out_path, "output CSV path (default stdout)");

    // --- cs ---
    struct {
        std::string model = "halfnormal";
        double alpha = 0.05;
        std::string epsilon = "auto";
        double grid_lo = 0.0, grid_hi = 0.0, grid_step = 0.01;
        std::string data_path;
        std::string out_path;
        std::uint64_t seed = 0;
    } cs_args;
    CLI::App* cs_cmd = app.add_subcommand("cs", "confidence set by test inversion -> CSV");
    cs_cmd->add_option("--model", cs_args.model, "model id");
    cs_cmd->add_option("--alpha", cs_args.alpha, "significance level");
    cs_cmd->add_option("--epsilon", cs_args.epsilon, "tuning constant or 'auto'");
    cs_cmd->add_option("--grid-min", cs_args.grid_lo, "theta grid lower end")->required();
    cs_cmd->add_option("--grid-max", cs_args.grid_hi, "theta grid upper end")->required();
    cs_cmd->add_option("--grid-step", cs_args.grid_step, "theta grid step");
    cs_cmd->add_option("--data", cs_args.data_path, "data file")->required();
    cs_cmd->add_option("--out", cs_args.out_path, "output CSV path (default stdout)");

    // --- compare-wald ---
    PowerArgs cmp_args;
    std::string cmp_out;
    CLI::App* cmp_cmd = app.add_subcommand("compare-wald",
                                           "paired NLR/Wald power study (common random numbers)");
    cmp_cmd->add_option("--preset", cmp_args.preset, "scenario preset (default fig-ch)");
    cmp_cmd->add_option("--config", cmp_args.config_path, "key = value scenario file");
    cmp_cmd->add_option("--model", cmp_args.scenario.model_id, "model id");
    cmp_cmd->add_option("--theta0", cmp_args.scenario.theta0, "null value of theta");
    cmp_cmd->add_option("--alpha", cmp_args.scenario.alpha, "significance level");
    cmp_cmd->add_option_function<double>(
        "--epsilon", [&](double e) { cmp_args.scenario.epsilon = e; }, "tuning constant");
    cmp_cmd->add_option("--hbar", cmp_args.hbar, "number, 'auto' or 'pi:<p>'");
    cmp_cmd->add_option("--n", cmp_args.scenario.n, "sample size");
    cmp_cmd->add_option("--h-grid", cmp_args.h_grid, "lo:hi:step or comma list");
    cmp_cmd->add_option("--replications", cmp_args.scenario.replications, "MC replications");
    cmp_cmd->add_option("--seed", cmp_args.scenario.master_seed, "master seed")->required();
    cmp_cmd->add_option("--out", cmp_out, "output prefix: writes <out>.nlr.csv and <out>.wald.csv")
        ->required();
    cmp_cmd->add_flag("--coin", cmp_args.coin, "aggregate coin flips for the NLR side");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (test_cmd->parsed()) return run_test_command(test_args);

        if (power_cmd->parsed()) return run_power_command(power_cmd, power_args);

        if (env_cmd->parsed()) {
            const nlr::ModelSpec model = nlr::make_model(env_args.model);
            const nlr::LimitParams params = nlr::lambda_benchmark(model, env_args.theta0);
            const nlr::Side side = nlr::parse_side(env_args.side);
            const double sgn = side == nlr::Side::Minus ? -1.0 : 1.0;

            std::optional<double> hbar;
            if (env_args.hbar == "auto") {
                hbar = side == nlr::Side::Minus
                           ? std::optional<double>()
                           : std::optional<double>(nlr::hbar_plus(params, env_args.alpha, 1.0));
            } else if (env_args.hbar != "none") {
                const nlr::HbarPolicy hp = parse_hbar(env_args.hbar);
                if (hp.kind == nlr::HbarPolicy::Kind::Explicit && std::isfinite(hp.value))
                    hbar = hp.value;
            }

            std::string body;
            body += "# model = " + env_args.model + "\n";
            body += "# alpha = " + format_g(env_args.alpha) + "\n";
            body += "# side = " + std::string(nlr::side_name(side)) + "\n";
            body += "h,envelope,lower_bound,branch\n";
            const int steps = static_cast<int>(std::floor(env_args.h_max / env_args.step + 1e-9));
            for (int i = 0; i <= steps; ++i) {
                const double h = sgn * i * env_args.step;
                double env = 0.0;
                std::string branch;
                std::string lb;
                if (side == nlr::Side::TwoSided) {
                    env = nlr::envelope_twosided(params, env_args.alpha, h);
                    branch = h >= 0.0 ? "plus" : "minus";
                } else if (side == nlr::Side::Plus) {
                    env = nlr::envelope_plus(params, env_args.alpha, h);
                    branch = env >= 1.0 ? "saturated" : "exp";
                    if (h > 0.0 && hbar)
                        lb = format_g(nlr::lower_bound_plus(params, env_args.alpha, h, *hbar));
                } else {
                    env = nlr::envelope_minus(params, env_args.alpha, h);
                    branch = "exp";
                    if (h < 0.0 && hbar)
                        lb = format_g(nlr::lower_bound_minus(params, env_args.alpha, h, *hbar));
                }
                body += format_g(h) + "," + format_g(env) + "," + lb + "," + branch + "\n";
            }
            if (env_args.out_path.empty())
                std::cout << body;
            else
                write_text(env_args.out_path, body);
            return kExitOk;
        }

        if (cs_cmd->parsed()) {
            const nlr::ModelSpec model = nlr::make_model(cs_args.model);
            nlr::Sample sample;
            sample.y = read_data_file(cs_args.data_path);
            sample.finalize();
            nlr::TestConfig cfg;
            cfg.alpha = cs_args.alpha;
            if (cs_args.epsilon != "auto") cfg.epsilon = std::stod(cs_args.epsilon);
            std::vector<double> grid;
            for (double t = cs_args.grid_lo; t <= cs_args.grid_hi + 1e-12; t += cs_args.grid_step)
                grid.push_back(t);
            const auto accepted = nlr::confidence_set(model, sample, grid, cfg);
            std::string body;
            body += "# model = " + cs_args.model + "\n";
            body += "# alpha = " + format_g(cs_args.alpha) + "\n";
            body += "# n = " + std::to_string(sample.size()) + "\n";
            body += "theta\n";
            for (double t : accepted) body += format_g(t) + "\n";
            if (cs_args.out_path.empty())
                std::cout << body;
            else
                write_text(cs_args.out_path, body);
            return kExitOk;
        }

        if (cmp_cmd->parsed()) {
            nlr::Scenario sc = cmp_args.preset.empty() ? nlr::preset_scenario("fig-ch")
                                                       : nlr::preset_scenario(cmp_args.preset);
            if (!cmp_args.config_path.empty()) apply_config_file(cmp_args.config_path, sc);
            if (cmp_cmd->count("--model")) sc.model_id = cmp_args.scenario.model_id;
            if (cmp_cmd->count("--theta0")) sc.theta0 = cmp_args.scenario.theta0;
            if (cmp_cmd->count("--alpha")) sc.alpha = cmp_args.scenario.alpha;
            if (cmp_cmd->count("--epsilon")) sc.epsilon = cmp_args.scenario.epsilon;
            if (cmp_cmd->count("--n")) sc.n = cmp_args.scenario.n;
            if (cmp_cmd->count("--replications")) sc.replications = cmp_args.scenario.replications;
            if (cmp_cmd->count("--seed")) sc.master_seed = cmp_args.scenario.master_seed;
            if (!cmp_args.hbar.empty()) sc.hbar = parse_hbar(cmp_args.hbar);
            if (!cmp_args.h_grid.empty()) sc.h_grid = parse_grid(cmp_args.h_grid);
            if (cmp_args.coin) sc.aggregation = nlr::PowerAggregation::CoinFlips;
            sc.side = nlr::Side::Plus;

            const nlr::ComparisonStudy cmp = nlr::run_comparison(sc);
            write_text(cmp_out + ".nlr.csv", nlr::csv_string(cmp.nlr));
            write_text(cmp_out + ".wald.csv", nlr::csv_string(cmp.wald));
            return kExitOk;
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
