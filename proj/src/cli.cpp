#include "spde/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spde/estimators.hpp"
#include "spde/variations.hpp"

namespace spde::cli {

namespace {

using nlohmann::json;

const std::vector<std::string> kCommands = {"simulate",   "weak-order",      "strong-order",
                                            "regularity", "malliavin-check", "duality-check"};

double parse_level_token(const std::string& tok) {
    const auto slash = tok.find('/');
    try {
        if (slash == std::string::npos) return std::stod(tok);
        const double num = std::stod(tok.substr(0, slash));
        const double den = std::stod(tok.substr(slash + 1));
        if (den == 0.0) throw usage_error("levels: division by zero in '" + tok + "'");
        return num / den;
    } catch (const std::invalid_argument&) {
        throw usage_error("levels: cannot parse '" + tok + "'");
    }
}

std::vector<double> parse_levels(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(parse_level_token(tok));
    }
    return out;
}

bool is_power_of_two(double q) {
    const long r = std::lround(q);
    if (r < 1 || std::abs(q - static_cast<double>(r)) > 1e-9 * q) return false;
    return (r & (r - 1)) == 0;
}

void validate_levels(const std::vector<double>& levels, double horizon) {
    for (size_t j = 0; j < levels.size(); ++j) {
        if (!(levels[j] > 0.0)) throw usage_error("levels must be positive");
        const double q = horizon / levels[j];
        const long n = std::lround(q);
        if (n < 1 || std::abs(q - static_cast<double>(n)) > 1e-9 * q) {
            throw usage_error("level " + format_double(levels[j]) +
                              " does not divide the horizon");
        }
        if (j > 0) {
            if (levels[j] >= levels[j - 1]) {
                throw usage_error("levels must be sorted strictly descending");
            }
            if (!is_power_of_two(levels[j - 1] / levels[j])) {
                throw usage_error("levels must be nested by powers of 2");
            }
        }
    }
}

void resolve_time_grid(RunConfig& c) {
    const bool has_dt = c.dt > 0.0;
    const bool has_steps = c.steps >= 0;
    const bool has_T = c.horizon > 0.0;
    if (has_dt && c.dt < 0.0) throw usage_error("dt must be positive");

    if (has_dt && has_steps) {
        const double T = c.dt * c.steps;
        if (has_T && std::abs(T - c.horizon) > 1e-12 * std::max(1.0, c.horizon)) {
            throw usage_error("inconsistent horizon: steps * dt != horizon");
        }
        c.horizon = T;
        return;
    }
    if (!has_T) c.horizon = 0.25;
    if (has_steps) {
        if (c.steps > 0) c.dt = c.horizon / c.steps;
        return;
    }
    if (has_dt) {
        const double q = c.horizon / c.dt;
        const long n = std::lround(q);
        if (n < 1 || std::abs(q - static_cast<double>(n)) > 1e-9 * q) {
            throw usage_error("horizon is not an integer multiple of dt");
        }
        c.steps = static_cast<int>(n);
        return;
    }
    // Neither dt nor steps: leave unset; commands that need them fill
    // command-specific defaults in run().
}

std::string default_out(const RunConfig& c) {
    const bool js = c.command == "malliavin-check" || c.command == "duality-check" ||
                    c.format == "json";
    return c.command + (js ? ".json" : ".csv");
}

void append_csv_row(std::string& out, std::span<const double> vals, long samples_col = -1) {
    for (size_t i = 0; i < vals.size(); ++i) {
        if (i) out += ',';
        out += format_double(vals[i]);
    }
    if (samples_col >= 0) {
        out += ',';
        out += std::to_string(samples_col);
    }
    out += '\n';
}

int write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) return 4;
    f << content;
    f.flush();
    return f.good() ? 0 : 4;
}

SchemeParams make_params(const RunConfig& c) {
    SchemeParams p{c.dt, c.steps, c.modes, {c.delta, c.tau}, CoefficientBundle::preset(c.bundle)};
    return p;
}

json rate_summary(const std::vector<ErrorLevel>& rows) {
    std::vector<ErrorLevel> positive;
    for (const auto& r : rows) {
        if (r.error > 0.0) positive.push_back(r);
    }
    json s;
    if (positive.size() >= 3) {
        const RateEstimate fit = fit_rate(positive);
        s["slope"] = fit.slope;
        s["slope_stderr"] = fit.slope_stderr;
        s["r_squared"] = fit.r_squared;
    } else {
        s["slope"] = nullptr;
        s["slope_stderr"] = nullptr;
        s["r_squared"] = nullptr;
        s["note"] = "fewer than 3 positive-error levels; no fit";
    }
    return s;
}

json levels_json(const std::vector<ErrorLevel>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back({{"dt", r.dt},
                       {"error", r.error},
                       {"stderr", r.stderr_of_error},
                       {"samples", r.samples}});
    }
    return arr;
}

std::string levels_csv(const std::vector<ErrorLevel>& rows) {
    std::string out = "dt,error,stderr,samples\n";
    for (const auto& r : rows) {
        append_csv_row(out, std::array{r.dt, r.error, r.stderr_of_error}, r.samples);
    }
    return out;
}

int run_order_command(const RunConfig& c) {
    SchemeParams params = make_params(c);
    const double T = c.horizon;

    std::vector<double> levels = c.levels;
    if (levels.empty()) {
        for (int d = 16; d <= 256; d *= 2) levels.push_back(T / d);
    }
    validate_levels(levels, T);

    const bool closed = c.reference == "closed-form";
    if (closed && c.command != "weak-order") {
        throw usage_error("closed-form reference applies to weak-order only");
    }
    if (closed && !(params.bundle.is_linear_additive() && params.bundle.phi_is_square())) {
        throw usage_error("closed-form reference requires the linear-additive bundle");
    }
    if (!closed) {
        levels.push_back(levels.back() / c.ref_refine);
        validate_levels(levels, T);
    }

    // params_base carries the horizon via (dt, steps) at the finest level.
    params.dt = levels.back();
    params.steps = static_cast<int>(std::lround(T / params.dt));

    GridPtr grid = build_grid(c.modes);
    const Field x0 = Field::basis(grid, 1, 1.0);

    std::vector<ErrorLevel> rows;
    if (c.command == "weak-order") {
        rows = weak_error_curve(params, x0, levels, c.samples,
                                closed ? WeakReference::closed_form : WeakReference::finest_level,
                                c.seed);
    } else {
        rows = strong_error_curve(params, x0, levels, c.samples, c.seed);
    }

    const json summary = rate_summary(rows);
    std::string content;
    if (c.format == "json") {
        json doc = summary;
        doc["levels"] = levels_json(rows);
        content = doc.dump(2) + "\n";
    } else {
        content = levels_csv(rows);
    }
    const int rc = write_file(c.out, content);
    if (rc) return rc;
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_simulate(const RunConfig& c) {
    RunConfig cfg = c;
    if (cfg.steps < 0) throw usage_error("simulate: steps (or dt) must be given");
    SchemeParams params = make_params(cfg);
    if (params.dt <= 0.0) params.dt = 1.0;  // steps == 0: dt is irrelevant

    GridPtr grid = build_grid(cfg.modes);
    const Field x0 = Field::basis(grid, 1, 1.0);
    Euler engine(grid, params);

    NoisePath path;
    if (cfg.steps > 0) {
        path = sample_path(cfg.seed, 0, cfg.steps, cfg.modes, params.dt);
    } else {
        path.modes = cfg.modes;
        path.dt = params.dt;
    }
    const Trajectory traj = engine.simulate(x0, path);

    std::string content = "step,t";
    for (int i = 1; i <= cfg.modes; ++i) content += ",u_" + std::to_string(i);
    content += '\n';
    std::vector<double> nodal(static_cast<size_t>(cfg.modes));
    for (int n = 0; n <= traj.steps; ++n) {
        grid->from_modal(traj.state(n), nodal);
        content += std::to_string(n);
        content += ',';
        content += format_double(n * params.dt);
        for (double v : nodal) {
            content += ',';
            content += format_double(v);
        }
        content += '\n';
    }
    const int rc = write_file(cfg.out, content);
    if (rc) return rc;
    std::cout << "simulate: wrote " << (traj.steps + 1) << " states to " << cfg.out << "\n";
    return 0;
}

int run_regularity(const RunConfig& c) {
    RunConfig cfg = c;
    if (cfg.steps <= 0) cfg.steps = 64;  // steps per probe level
    SchemeParams params = make_params(cfg);
    params.dt = cfg.horizon / cfg.steps;

    std::vector<double> t_grid = cfg.levels;  // levels double as the T grid here
    if (t_grid.empty()) {
        for (int j = 0; j < 5; ++j) t_grid.push_back(cfg.horizon / (1 << j));
    }

    GridPtr grid = build_grid(cfg.modes);
    const Field x0 = Field::basis(grid, 1, 1.0);
    // Flat-spectrum unit-norm probe direction; (-A)^beta then sets the scale.
    std::vector<double> flat(static_cast<size_t>(cfg.modes),
                             1.0 / std::sqrt(static_cast<double>(cfg.modes)));
    const Field h_raw = Field::from_modal(grid, std::move(flat));

    const RegularityProbeResult probe =
        regularity_probe(params, x0, h_raw, cfg.beta, t_grid, cfg.samples, cfg.seed);

    json summary{{"beta", probe.beta},
                 {"fitted_exponent", probe.fitted_exponent},
                 {"slope_stderr", probe.fit.slope_stderr},
                 {"r_squared", probe.fit.r_squared},
                 {"reliable", probe.reliable}};
    std::string content;
    if (cfg.format == "json") {
        json doc = summary;
        doc["levels"] = levels_json(probe.fit.levels);
        content = doc.dump(2) + "\n";
    } else {
        content = "t,du_abs,stderr,samples\n";
        for (const auto& r : probe.fit.levels) {
            append_csv_row(content, std::array{r.dt, r.error, r.stderr_of_error}, r.samples);
        }
    }
    const int rc = write_file(cfg.out, content);
    if (rc) return rc;
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_malliavin_check(const RunConfig& c) {
    RunConfig cfg = c;
    if (cfg.steps <= 0) {
        cfg.steps = 32;
        cfg.dt = cfg.horizon / cfg.steps;
    }
    SchemeParams params = make_params(cfg);
    GridPtr grid = build_grid(cfg.modes);
    const Field x0 = Field::basis(grid, 1, 1.0);

    constexpr double kEps = 1e-4;
    constexpr double kTol = 1e-5;
    const MalliavinCheckResult res = malliavin_fd_check(params, x0, 20, kEps, cfg.seed);

    json doc{{"max_rel_err", res.max_rel_err},
             {"epsilon", res.epsilon},
             {"pass", res.max_rel_err <= kTol}};
    const int rc = write_file(cfg.out, doc.dump(2) + "\n");
    if (rc) return rc;
    std::cout << doc.dump() << "\n";
    return 0;
}

int run_duality_check(const RunConfig& c) {
    RunConfig cfg = c;
    if (cfg.steps <= 0) {
        cfg.steps = 32;
        cfg.dt = cfg.horizon / cfg.steps;
    }
    SchemeParams params = make_params(cfg);
    GridPtr grid = build_grid(cfg.modes);
    const Field x0 = Field::basis(grid, 1, 1.0);

    // Adapted test process psi_n = X_n.
    AdaptedProcess psi = [](int n, const Trajectory& traj, std::span<double> out) {
        auto s = traj.state(n);
        for (size_t i = 0; i < out.size(); ++i) out[i] = s[i];
    };
    const DualityResult res = duality_check(params, x0, cfg.samples, psi, cfg.seed);
    const double gap = std::abs(res.lhs - res.rhs);

    json doc{{"lhs", res.lhs},
             {"rhs", res.rhs},
             {"stderr", res.stderr_of_gap},
             {"gap", gap},
             {"pass", gap <= 4.0 * res.stderr_of_gap}};
    const int rc = write_file(cfg.out, doc.dump(2) + "\n");
    if (rc) return rc;
    std::cout << doc.dump() << "\n";
    return 0;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

RunConfig parse_config(const std::vector<std::string>& args) {
    RunConfig cfg;
    CLI::App app{"spectral SPDE lab: semi-implicit Euler, variation processes, rate experiments"};
    app.set_config("--config", "", "key = value configuration file");

    std::string levels_text;
    app.add_option("command", cfg.command, "one of: simulate, weak-order, strong-order, regularity, malliavin-check, duality-check")
        ->required()
        ->check(CLI::IsMember(kCommands));
    app.add_option("--modes", cfg.modes, "retained sine modes M")->check(CLI::PositiveNumber);
    app.add_option("--dt", cfg.dt, "time step");
    app.add_option("--steps", cfg.steps, "step count N (T = N dt)")
        ->check(CLI::Range(0, 1 << 28));
    app.add_option("--horizon", cfg.horizon, "time horizon T");
    app.add_option("--samples", cfg.samples, "Monte Carlo samples")->check(CLI::PositiveNumber);
    app.add_option("--seed", cfg.seed, "base RNG seed");
    app.add_option("--bundle", cfg.bundle, "coefficient bundle name")
        ->check(CLI::IsMember(CoefficientBundle::preset_names()));
    app.add_option("--delta", cfg.delta, "coefficient smoothing time delta")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--tau", cfg.tau, "noise smoothing time tau")->check(CLI::NonNegativeNumber);
    app.add_option("--beta", cfg.beta, "regularity probe exponent");
    app.add_option("--levels", levels_text,
                   "comma-separated dt levels (fractions allowed, e.g. 1/64,1/128)");
    app.add_option("--reference", cfg.reference, "weak-order reference")
        ->check(CLI::IsMember({"finest", "closed-form"}));
    app.add_option("--ref-refine", cfg.ref_refine, "extra refinement of the reference level")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", cfg.out, "output file path");
    app.add_option("--format", cfg.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        throw help_requested{app.help()};
    } catch (const CLI::ParseError& e) {
        throw usage_error(e.what());
    }

    if (!levels_text.empty()) cfg.levels = parse_levels(levels_text);
    resolve_time_grid(cfg);
    if (!cfg.levels.empty()) validate_levels(cfg.levels, cfg.horizon);
    if (cfg.out.empty()) cfg.out = default_out(cfg);
    return cfg;
}

int run(const RunConfig& config) {
    try {
        if (config.command == "simulate") return run_simulate(config);
        if (config.command == "weak-order" || config.command == "strong-order") {
            return run_order_command(config);
        }
        if (config.command == "regularity") return run_regularity(config);
        if (config.command == "malliavin-check") return run_malliavin_check(config);
        if (config.command == "duality-check") return run_duality_check(config);
        throw usage_error("unknown command: " + config.command);
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_failure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        const RunConfig cfg = parse_config(args);
        return run(cfg);
    } catch (const help_requested& h) {
        std::cout << h.text;
        return 0;
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace spde::cli
