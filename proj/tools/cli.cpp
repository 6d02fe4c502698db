#include "cli.hpp"

#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"
#include "eqport/sim.hpp"
#include "eqport/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace eqport::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Loaded {
    json raw;
    MarketSpec spec;
    MarketModel market;
};

Loaded load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::ParseError, "cannot open config file " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    Loaded l;
    try {
        l.raw = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("config ") + path + ": " + e.what());
    }
    l.spec = parse_market_spec(buf.str());
    l.market = build_market(l.spec);
    return l;
}

fs::path output_dir(const std::string& flag)
{
    fs::path dir;
    if (!flag.empty()) {
        dir = flag;
    } else if (const char* env = std::getenv("EQPORT_OUT_DIR"); env != nullptr && *env != '\0') {
        dir = env;
    } else {
        dir = "eqport_out";
    }
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw Error(ErrorCode::ParseError, "cannot write " + p.string());
    }
    return f;
}

// Value from the command line if given, else from the config section, else the default.
template<class T>
T pick(const CLI::Option* opt, const T& cli_value, const json& section, const char* key, const T& fallback)
{
    if (opt != nullptr && opt->count() > 0) {
        return cli_value;
    }
    if (section.is_object() && section.contains(key)) {
        return section.at(key).get<T>();
    }
    return fallback;
}

json section_of(const json& raw, const char* name)
{
    if (raw.is_object() && raw.contains(name) && raw.at(name).is_object()) {
        return raw.at(name);
    }
    return json::object();
}

void write_sidecar(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                   const Loaded* cfg, const json& resolved)
{
    json j;
    j["command"] = command;
    j["args"] = args;
    j["version"] = kVersion;
    j["resolved"] = resolved;
    if (resolved.contains("seed")) {
        j["seed"] = resolved.at("seed");
    }
    if (cfg != nullptr) {
        j["market"] = json::parse(market_spec_to_json(cfg->spec));
    }
    auto f = open_out(dir / "run.json");
    f << j.dump(2) << '\n';
}

int exit_for(ErrorCode c)
{
    switch (c) {
    case ErrorCode::ParseError:
    case ErrorCode::GridError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::SingularSigma:
    case ErrorCode::RangeError:
    case ErrorCode::HorizonError:
    case ErrorCode::UtilityMismatch:
    case ErrorCode::MissingIncrements:
        return kConfigError;
    default:
        return kSolverError;
    }
}

void write_residual_csv(std::ostream& os, const ScalarCurve& residual)
{
    os << "s,residual\n" << std::setprecision(17);
    for (std::size_t i = 0; i < residual.size(); ++i) {
        os << residual.grid()[i] << ',' << residual[i] << '\n';
    }
}

// Coefficients read back from CSV carry no r_hat; rebuild it from the market.
CoefficientCurves attach_market(CoefficientCurves c, const MarketModel& market)
{
    if (!same_grid(c.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "coefficient file grid differs from the market grid");
    }
    c.r_hat = market.r_minus(c.utility == Utility::Quadratic ? *c.lambda : market.mu);
    return c;
}

CoefficientCurves solve_for(const MarketModel& market, Utility u, bool lambda_rate, bool flat_shortcut)
{
    if (u == Utility::Quadratic) {
        return lambda_rate ? solve_quadratic_coeffs(market, market.r) : find_lambda_star(market).curves;
    }
    PowerSolverOptions opts;
    opts.flat_market_shortcut = flat_shortcut;
    return solve_coeffs(market, u, opts);
}

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, "bad number '" + item + "' in list " + s);
        }
    }
    return out;
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

void render_report(const json& r, std::ostream& out)
{
    out << "utility   " << r.value("utility", "?") << '\n';
    out << "verdict   " << r.value("verdict", "?");
    if (r.contains("reasons") && !r["reasons"].empty()) {
        out << " (";
        bool first = true;
        for (const auto& s : r["reasons"]) {
            out << (first ? "" : ", ") << s.get<std::string>();
            first = false;
        }
        out << ')';
    }
    out << '\n';
    out << std::setprecision(6);
    if (r.contains("residual_sup")) {
        out << "residual  sup " << r["residual_sup"].get<double>() << '\n';
        out << "consist.  sup " << r["consistency_sup"].get<double>() << '\n';
    }
    if (r.contains("slopes")) {
        const auto& s = r["slopes"];
        out << "\nspike slopes (t=" << s["t"].get<double>() << ", mode " << s["mode"].get<std::string>() << ")\n";
        out << std::setw(12) << "v" << std::setw(10) << "eps" << std::setw(14) << "slope" << std::setw(14) << "stderr"
            << std::setw(14) << "predicted" << '\n';
        for (const auto& pv : s["per_v"]) {
            std::string v;
            for (const auto& x : pv["v"]) {
                v += (v.empty() ? "" : " ") + std::to_string(static_cast<int>(std::lround(x.get<double>())));
            }
            for (const auto& e : pv["slopes"]) {
                out << std::setw(12) << v << std::setw(10) << e["epsilon"].get<double>() << std::setw(14)
                    << e["slope"].get<double>() << std::setw(14) << e["stderr"].get<double>() << std::setw(14)
                    << (e["predicted"].is_null() ? std::string("-") : fmt(e["predicted"].get<double>())) << '\n';
            }
        }
    }
    if (r.contains("adjoint_limits")) {
        const auto& a = r["adjoint_limits"];
        out << "\nadjoint E_t[Lambda_s^t] / theta_s (t=" << a["t"].get<double>() << ")\n";
        out << std::setw(10) << "s" << std::setw(14) << "mc" << std::setw(14) << "stderr" << std::setw(14) << "analytic"
            << '\n';
        for (const auto& e : a["ladder"]) {
            out << std::setw(10) << e["s"].get<double>() << std::setw(14) << e["mc"].get<double>() << std::setw(14)
                << e["stderr"].get<double>() << std::setw(14) << e["analytic"].get<double>() << '\n';
        }
    }
    if (r.contains("second_order_sign")) {
        const auto& s = r["second_order_sign"];
        out << "\nsecond order  " << s["estimate"].get<double>() << " +- " << s["stderr"].get<double>() << " ("
            << s["method"].get<std::string>() << ")\n";
    }
    if (r.contains("target_errors")) {
        out << "\ntarget errors\n" << std::setw(10) << "t" << std::setw(14) << "analytic" << std::setw(14) << "mc"
            << std::setw(14) << "stderr" << '\n';
        for (const auto& e : r["target_errors"]) {
            out << std::setw(10) << e["t"].get<double>() << std::setw(14) << e["analytic"].get<double>();
            if (e.contains("estimate")) {
                out << std::setw(14) << e["estimate"].get<double>() << std::setw(14) << e["stderr"].get<double>();
            }
            out << '\n';
        }
    }
    if (r.contains("negative_part")) {
        const auto& n = r["negative_part"];
        out << "\nx^- condition  " << n["analytic"].get<std::string>() << ", rhs " << n["rhs"].get<double>()
            << ", empirical violation fraction " << n["empirical_violation_fraction"].get<double>() << '\n';
    }
}

void write_report_csvs(const json& r, const fs::path& dir)
{
    if (r.contains("curves")) {
        auto f = open_out(dir / "report_curves.csv");
        const auto& rows = r["curves"];
        std::size_t d = rows.empty() || !rows[0].contains("alpha") ? 0 : rows[0]["alpha"].size();
        f << "s";
        for (std::size_t j = 0; j < d; ++j) {
            f << ",alpha_" << (j + 1);
        }
        f << ",residual,lambda\n" << std::setprecision(17);
        for (const auto& row : rows) {
            f << row["s"].get<double>();
            for (std::size_t j = 0; j < d; ++j) {
                f << ',' << row["alpha"][j].get<double>();
            }
            f << ',' << row["residual"].get<double>() << ',';
            if (row.contains("lambda")) {
                f << row["lambda"].get<double>();
            }
            f << '\n';
        }
    }
    if (r.contains("slopes")) {
        auto f = open_out(dir / "report_slopes.csv");
        f << "v,epsilon,slope,stderr,predicted\n" << std::setprecision(17);
        for (const auto& pv : r["slopes"]["per_v"]) {
            std::string v;
            for (const auto& x : pv["v"]) {
                std::ostringstream s;
                s << x.get<double>();
                v += (v.empty() ? "" : " ") + s.str();
            }
            for (const auto& e : pv["slopes"]) {
                f << v << ',' << e["epsilon"].get<double>() << ',' << e["slope"].get<double>() << ','
                  << e["stderr"].get<double>() << ',';
                if (!e["predicted"].is_null()) {
                    f << e["predicted"].get<double>();
                }
                f << '\n';
            }
        }
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Equilibrium portfolio controls with a moving wealth target", "eqport"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config;
    std::string out_dir;
    std::string utility_name_flag;

    auto* solve = app.add_subcommand("solve", "Solve the coefficient system for one utility");
    solve->add_option("--config", config, "Market config (JSON)")->required()->check(CLI::ExistingFile);
    auto* solve_u = solve->add_option("--utility", utility_name_flag, "quadratic, cubic or quartic");
    solve->add_option("--out", out_dir, "Output directory");
    bool lambda_rate = false;
    bool no_flat = false;
    solve->add_flag("--lambda-equals-r", lambda_rate, "Quadratic only: use lambda = r instead of lambda*");
    solve->add_flag("--no-flat-shortcut", no_flat, "Report flat markets as degenerate instead of returning alpha = 0");

    auto* lambda = app.add_subcommand("lambda", "Find the multiplier curve lambda*");
    lambda->add_option("--config", config, "Market config (JSON)")->required()->check(CLI::ExistingFile);
    lambda->add_option("--out", out_dir, "Output directory");

    std::size_t paths = 0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::string scheme;
    std::string measure;
    double x0 = 0.0;
    unsigned workers = 0;
    double gain_scale = 1.0;
    bool antithetic = false;
    bool no_paths = false;
    std::string control_kind;
    auto* sim = app.add_subcommand("simulate", "Simulate wealth under the equilibrium feedback control");
    sim->add_option("--config", config, "Market config (JSON)")->required()->check(CLI::ExistingFile);
    auto* sim_u = sim->add_option("--utility", utility_name_flag, "Utility whose equilibrium control is simulated");
    auto* sim_paths = sim->add_option("--paths", paths, "Number of paths");
    auto* sim_steps = sim->add_option("--steps", steps, "Number of time steps");
    auto* sim_seed = sim->add_option("--seed", seed, "RNG seed");
    auto* sim_scheme = sim->add_option("--scheme", scheme, "exact or euler");
    auto* sim_measure = sim->add_option("--measure", measure, "physical or risk_neutral");
    auto* sim_x0 = sim->add_option("--x0", x0, "Initial wealth");
    auto* sim_workers = sim->add_option("--workers", workers, "Worker threads (0 = all cores)");
    auto* sim_anti = sim->add_flag("--antithetic", antithetic, "Antithetic path pairs");
    auto* sim_control = sim->add_option("--control", control_kind, "equilibrium or zero");
    sim->add_option("--gain-scale", gain_scale, "Multiply the feedback gain");
    sim->add_flag("--no-paths", no_paths, "Skip the long-format path CSV");
    sim->add_option("--out", out_dir, "Output directory");

    std::string curves_path;
    std::string mode;
    std::string eps_list;
    double t = 0.0;
    std::size_t target_outer = 0;
    std::size_t target_inner = 0;
    std::size_t adjoint_paths = 0;
    auto* ver = app.add_subcommand("verify", "Run the equilibrium checks and write an EquilibriumReport");
    ver->add_option("--config", config, "Market config (JSON)")->required()->check(CLI::ExistingFile);
    auto* ver_u = ver->add_option("--utility", utility_name_flag, "quadratic, cubic, quartic or negative_part");
    ver->add_option("--curves", curves_path, "Coefficient CSV written by solve")->check(CLI::ExistingFile);
    auto* ver_paths = ver->add_option("--paths", paths, "Paired paths for the spike test");
    auto* ver_steps = ver->add_option("--steps", steps, "Simulation steps on [0, T]");
    auto* ver_seed = ver->add_option("--seed", seed, "RNG seed");
    auto* ver_x0 = ver->add_option("--x0", x0, "Initial wealth");
    auto* ver_mode = ver->add_option("--mode", mode, "frozen or feedback");
    auto* ver_eps = ver->add_option("--eps", eps_list, "Comma-separated epsilon ladder");
    auto* ver_t = ver->add_option("--t", t, "Perturbation time");
    auto* ver_outer = ver->add_option("--target-outer", target_outer, "Outer paths of the target check");
    auto* ver_inner = ver->add_option("--target-inner", target_inner, "Inner paths per outer state");
    auto* ver_adj = ver->add_option("--adjoint-paths", adjoint_paths, "Paths of the adjoint limit check");
    auto* ver_workers = ver->add_option("--workers", workers, "Worker threads (0 = all cores)");
    ver->add_option("--out", out_dir, "Output directory");

    std::string in_dir;
    auto* rep = app.add_subcommand("report", "Summarise a verify output directory");
    rep->add_option("--in", in_dir, "Directory containing report.json")->required()->check(CLI::ExistingDirectory);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (solve->parsed()) {
            const Loaded cfg = load_config(config);
            const Utility u = parse_utility(pick<std::string>(solve_u, utility_name_flag, cfg.raw, "utility", "quadratic"));
            if (u == Utility::NegativePart) {
                throw Error(ErrorCode::UtilityMismatch, "x^- has no coefficient system; use verify");
            }
            const fs::path dir = output_dir(out_dir);
            const CoefficientCurves c = solve_for(cfg.market, u, lambda_rate, !no_flat);
            const ScalarCurve residual = equilibrium_residual(c, cfg.market);
            {
                auto f = open_out(dir / "coefficients.csv");
                write_coefficients_csv(f, c, residual);
            }
            {
                auto f = open_out(dir / "residual.csv");
                write_residual_csv(f, residual);
            }
            json resolved = {{"utility", utility_name(u)},
                             {"lambda", u == Utility::Quadratic ? (lambda_rate ? "r" : "lambda_star") : "none"},
                             {"flat_market_shortcut", !no_flat}};
            if (c.terminal) {
                resolved["alpha_T"] = c.terminal->alpha_T;
                resolved["terminal_well_posed"] = c.terminal->well_posed;
            }
            write_sidecar(dir, "solve", args, &cfg, resolved);
            out << "solved " << utility_name(u) << " on " << cfg.market.grid.size() << " grid points; residual sup "
                << residual_verdict(residual).sup << ", consistency sup " << residual_verdict(c.consistency).sup
                << "\nwrote " << (dir / "coefficients.csv").string() << '\n';
            return kOk;
        }
        if (lambda->parsed()) {
            const Loaded cfg = load_config(config);
            const fs::path dir = output_dir(out_dir);
            write_sidecar(dir, "lambda", args, &cfg, json::object());
            try {
                const LambdaStar ls = find_lambda_star(cfg.market);
                const ScalarCurve residual = equilibrium_residual(ls.curves, cfg.market);
                auto f = open_out(dir / "lambda.csv");
                f << "s,lambda,residual\n" << std::setprecision(17);
                for (std::size_t i = 0; i < ls.lambda.size(); ++i) {
                    f << ls.lambda.grid()[i] << ',' << ls.lambda[i] << ',' << residual[i] << '\n';
                }
                out << "lambda* found; residual sup " << ls.residual_sup << "\nwrote " << (dir / "lambda.csv").string()
                    << '\n';
                return kOk;
            } catch (const Error& e) {
                auto f = open_out(dir / "diagnostic.txt");
                f << e.what() << '\n';
                throw;
            }
        }
        if (sim->parsed()) {
            const Loaded cfg = load_config(config);
            const json sec = section_of(cfg.raw, "simulate");
            const Utility u = parse_utility(pick<std::string>(sim_u, utility_name_flag, cfg.raw, "utility", "quadratic"));
            SimulationConfig sc;
            sc.n_paths = pick<std::size_t>(sim_paths, paths, sec, "paths", 1000);
            sc.n_steps = pick<std::size_t>(sim_steps, steps, sec, "steps", 64);
            sc.seed = pick<std::uint64_t>(sim_seed, seed, sec, "seed", cfg.raw.value("seed", std::uint64_t{1}));
            sc.scheme = parse_scheme(pick<std::string>(sim_scheme, scheme, sec, "scheme", "exact"));
            sc.measure = parse_measure(pick<std::string>(sim_measure, measure, sec, "measure", "physical"));
            sc.antithetic = pick<bool>(sim_anti, antithetic, sec, "antithetic", false);
            sc.workers = pick<unsigned>(sim_workers, workers, sec, "workers", 0);
            const double x = pick<double>(sim_x0, x0, sec, "x0", cfg.raw.value("x0", 1.0));
            const std::string kind = pick<std::string>(sim_control, control_kind, sec, "control", "equilibrium");
            FeedbackControl control;
            if (kind == "zero" || u == Utility::NegativePart) {
                control = zero_control(cfg.market, u);
            } else if (kind == "equilibrium") {
                control = feedback_control(solve_for(cfg.market, u, false, true), cfg.market);
            } else {
                throw Error(ErrorCode::ParseError, "unknown control '" + kind + "'");
            }
            if (gain_scale != 1.0) {
                control = scale_gain(control, gain_scale);
            }
            const fs::path dir = output_dir(out_dir);
            const PathEnsemble ens = simulate_wealth(cfg.market, control, x, sc);
            if (!no_paths) {
                auto f = open_out(dir / "paths.csv");
                write_ensemble_csv(f, ens);
            }
            {
                auto f = open_out(dir / "summary.json");
                f << ensemble_summary_json(ens) << '\n';
            }
            write_sidecar(dir, "simulate", args, &cfg,
                          {{"utility", utility_name(u)},
                           {"control", kind},
                           {"gain_scale", gain_scale},
                           {"paths", sc.n_paths},
                           {"steps", sc.n_steps},
                           {"seed", sc.seed},
                           {"scheme", scheme_name(sc.scheme)},
                           {"measure", measure_name(sc.measure)},
                           {"antithetic", sc.antithetic},
                           {"x0", x}});
            out << "simulated " << sc.n_paths << " paths x " << ens.n_steps() << " steps\nwrote "
                << (dir / "summary.json").string() << '\n';
            return kOk;
        }
        if (ver->parsed()) {
            const Loaded cfg = load_config(config);
            const json sec = section_of(cfg.raw, "verify");
            const Utility u = parse_utility(pick<std::string>(ver_u, utility_name_flag, cfg.raw, "utility", "quadratic"));
            VerifyOptions vo;
            vo.spike_paths = pick<std::size_t>(ver_paths, paths, sec, "paths", vo.spike_paths);
            vo.n_steps = pick<std::size_t>(ver_steps, steps, sec, "steps", vo.n_steps);
            vo.seed = pick<std::uint64_t>(ver_seed, seed, sec, "seed", cfg.raw.value("seed", vo.seed));
            vo.x0 = pick<double>(ver_x0, x0, sec, "x0", cfg.raw.value("x0", vo.x0));
            vo.mode = parse_mode(pick<std::string>(ver_mode, mode, sec, "mode", "frozen"));
            vo.t = pick<double>(ver_t, t, sec, "t", vo.t);
            if (ver_eps->count() > 0) {
                vo.epsilons = parse_list(eps_list);
            } else if (sec.contains("epsilons")) {
                vo.epsilons = sec.at("epsilons").get<std::vector<double>>();
            }
            vo.target_outer = pick<std::size_t>(ver_outer, target_outer, sec, "target_outer", vo.target_outer);
            vo.target_inner = pick<std::size_t>(ver_inner, target_inner, sec, "target_inner", vo.target_inner);
            vo.adjoint_paths = pick<std::size_t>(ver_adj, adjoint_paths, sec, "adjoint_paths", vo.adjoint_paths);
            vo.second_order_paths = sec.value("second_order_paths", vo.second_order_paths);
            vo.negative_part_paths = sec.value("negative_part_paths", vo.negative_part_paths);
            vo.workers = pick<unsigned>(ver_workers, workers, sec, "workers", 0);

            std::optional<CoefficientCurves> curves;
            if (!curves_path.empty()) {
                std::ifstream in(curves_path);
                curves = attach_market(read_coefficients_csv(in, u).curves, cfg.market);
            }
            const fs::path dir = output_dir(out_dir);
            const EquilibriumReport report = run_verification(cfg.market, u, vo, curves ? &*curves : nullptr);
            {
                auto f = open_out(dir / "report.json");
                f << report_to_json(report) << '\n';
            }
            write_sidecar(dir, "verify", args, &cfg,
                          {{"utility", utility_name(u)},
                           {"paths", vo.spike_paths},
                           {"steps", vo.n_steps},
                           {"seed", vo.seed},
                           {"x0", vo.x0},
                           {"mode", mode_name(vo.mode)},
                           {"t", vo.t},
                           {"epsilons", vo.epsilons},
                           {"target_outer", vo.target_outer},
                           {"target_inner", vo.target_inner},
                           {"adjoint_paths", vo.adjoint_paths},
                           {"curves", curves_path}});
            out << "verdict " << (report.pass ? "PASS" : "FAIL");
            for (const auto& r : report.reasons) {
                out << ' ' << r;
            }
            if (report.negative_part) {
                out << " (x^- condition " << tri_state_name(report.negative_part->analytic) << ")";
            } else {
                out << " (residual sup " << report.residual_sup << ")";
            }
            out << "\nwrote " << (dir / "report.json").string() << '\n';
            return report.pass ? kOk : kVerifyFail;
        }
        if (rep->parsed()) {
            const fs::path dir = in_dir;
            std::ifstream in(dir / "report.json");
            if (!in) {
                throw Error(ErrorCode::ParseError, "no report.json in " + dir.string());
            }
            json r;
            try {
                in >> r;
            } catch (const json::exception& e) {
                throw Error(ErrorCode::ParseError, std::string("report.json: ") + e.what());
            }
            render_report(r, out);
            write_report_csvs(r, dir);
            return kOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_for(e.code());
    } catch (const json::exception& e) {
        err << "error: config: " << e.what() << '\n';
        return kConfigError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}

int run(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args, std::cout, std::cerr);
}

} // namespace eqport::cli
