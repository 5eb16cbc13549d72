#include "homoglab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "homoglab/cell.hpp"
#include "homoglab/common.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/evolve.hpp"
#include "homoglab/study.hpp"
#include "homoglab/twoscale.hpp"

namespace homoglab::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// HOMOGLAB_OUT reroutes relative output locations
std::filesystem::path out_path(const std::string& path) {
    std::filesystem::path p(path);
    const char* base = std::getenv("HOMOGLAB_OUT");
    if (base != nullptr && *base != '\0' && p.is_relative())
        return std::filesystem::path(base) / p;
    return p;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "'");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return in;
}

std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 2) throw ConfigError("table grids need at least 2 nodes");
    if (!(lo < hi)) throw ConfigError("table ranges must be increasing");
    std::vector<double> g(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    return g;
}

// [problem] section shared by solve / homogenize / certify
struct ProblemSection {
    convex::Potential phi = convex::Potential::quadratic(1.0);
    convex::Potential gamma = convex::Potential::quadratic(1.0);
    evolve::SourceSpec source = evolve::SourceSpec::zero();
    evolve::InitialSpec initial = evolve::InitialSpec::zero();
    double T = 0.25;
    int m = 16;
};

ProblemSection load_problem(const std::string& config_path) {
    auto cfg = study::ConfigFile::parse_file(config_path);
    ProblemSection p;
    p.phi = study::parse_potential(cfg.get("problem", "phi"));
    p.gamma = study::parse_potential(cfg.get("problem", "gamma"));
    p.source = study::parse_source(cfg.get_or("problem", "source", "zero"));
    p.initial = study::parse_initial(cfg.get_or("problem", "initial", "zero"));
    p.T = cfg.get_double_or("problem", "T", p.T);
    p.m = cfg.get_int_or("problem", "m", p.m);
    return p;
}

void print_certificate(const evolve::CertificateReport& cert) {
    std::cout << "certificate: alpha = " << fmt17(cert.alpha_part)
              << ", gamma = " << fmt17(cert.gamma_part) << ", total = " << fmt17(cert.total)
              << ", scale = " << fmt17(cert.scale) << "\n";
}

struct TabulateArgs {
    std::string preset = "two-phase";
    double a = 1.0, a1 = 1.0, a2 = 4.0, theta = 0.5, p = 2.0, c = 0.5;
    double xi_min = -4.0, xi_max = 4.0, eta_min = -6.4, eta_max = 6.4;
    int xi_count = 129, eta_count = 129, cell_m = 64;
    bool with_f0 = false;
    std::string out;
};

int cmd_cell_tabulate(const TabulateArgs& args) {
    convex::Potential pot = convex::Potential::quadratic(1.0);
    if (args.preset == "quadratic") {
        pot = convex::Potential::quadratic(args.a);
    } else if (args.preset == "power") {
        pot = convex::Potential::power(args.a, args.p);
    } else if (args.preset == "two-phase") {
        pot = args.p == 2.0 ? convex::Potential::two_phase(args.a1, args.a2, args.theta)
                            : convex::Potential::power_two_phase(args.a1, args.a2, args.theta,
                                                                 args.p);
    } else if (args.preset == "kinked") {
        pot = convex::Potential::kinked(args.c, args.a);
    } else {
        throw ConfigError("unknown tabulation preset '" + args.preset + "'");
    }

    cell::TabulateOptions opts;
    opts.with_f0 = args.with_f0;
    auto law = cell::tabulate_effective_law(pot, linspace(args.xi_min, args.xi_max, args.xi_count),
                                            linspace(args.eta_min, args.eta_max, args.eta_count),
                                            cell::CellGrid::make(1, args.cell_m), opts);
    auto path = out_path(args.out);
    auto out = open_out(path);
    cell::write_effective_law(law, out);
    if (!out) throw IoError("short write to '" + path.string() + "'");
    std::cout << "tabulated " << law.preset << ": conjugacy_gap = " << fmt17(law.conjugacy_gap)
              << ", wrote " << path.string() << "\n";
    return kExitOk;
}

struct SolveArgs {
    std::string config;
    std::string eps = "1/8";
    int mesh_factor = 16;
    std::string out;
};

int cmd_solve(const SolveArgs& args) {
    ProblemSection p = load_problem(args.config);
    double eps = study::parse_fraction(args.eps);
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    double Jreal = args.mesh_factor / eps;
    if (std::abs(Jreal - std::round(Jreal)) > 1e-9)
        throw ConfigError("eps does not give an integer element count under the mesh factor");

    evolve::ProblemData data;
    data.mode = evolve::ProblemData::Mode::Eps;
    data.eps = eps;
    data.T = p.T;
    data.m = p.m;
    data.J = static_cast<int>(std::round(Jreal));
    data.phi = p.phi;
    data.jflux = p.gamma;
    data.source = p.source;
    data.initial = p.initial;

    auto traj = evolve::solve_parabolic(data);
    auto cert = evolve::phi_certificate(traj, data);
    auto path = out_path(args.out);
    auto out = open_out(path);
    evolve::write_trajectory_csv(traj, out);
    if (!out) throw IoError("short write to '" + path.string() + "'");
    std::cout << "solved eps = " << fmt17(eps) << " on " << data.J << " elements, wrote "
              << path.string() << "\n";
    print_certificate(cert);
    return kExitOk;
}

struct HomogenizeArgs {
    std::string config;
    std::string law;
    int elements = 512;
    std::string out;
};

int cmd_homogenize(const HomogenizeArgs& args) {
    ProblemSection p = load_problem(args.config);
    auto in = open_in(args.law);
    auto law = cell::read_effective_law(in);

    evolve::ProblemData data;
    data.mode = evolve::ProblemData::Mode::Homogenized;
    data.law = &law;
    data.T = p.T;
    data.m = p.m;
    data.J = args.elements;
    data.phi = p.phi;
    data.jflux = p.gamma;
    data.source = p.source;
    data.initial = p.initial;

    auto traj = evolve::solve_parabolic(data);
    auto cert = evolve::phi_certificate(traj, data);
    auto path = out_path(args.out);
    auto out = open_out(path);
    evolve::write_trajectory_csv(traj, out);
    if (!out) throw IoError("short write to '" + path.string() + "'");
    std::cout << "homogenized solve on " << data.J << " elements, wrote " << path.string()
              << "\n";
    print_certificate(cert);
    return kExitOk;
}

struct CertifyArgs {
    std::string traj;
    std::string config;
    std::string data_preset;
    std::string eps = "1/8";
};

int cmd_certify(const CertifyArgs& args) {
    auto in = open_in(args.traj);
    auto traj = evolve::read_trajectory_csv(in);

    evolve::ProblemData data;
    data.mode = evolve::ProblemData::Mode::Eps;
    data.T = traj.T;
    data.m = traj.m;
    data.J = traj.J;
    if (!args.data_preset.empty() && !args.config.empty())
        throw ConfigError("certify takes --config or --data, not both");
    if (!args.data_preset.empty()) {
        if (args.data_preset != "zero")
            throw ConfigError("unknown data preset '" + args.data_preset + "'");
        data.phi = convex::Potential::quadratic(1.0);
        data.jflux = convex::Potential::quadratic(1.0);
        data.source = evolve::SourceSpec::zero();
        data.initial = evolve::InitialSpec::zero();
        data.eps = 16.0 / traj.J;
    } else {
        if (args.config.empty())
            throw ConfigError("certify needs --config or --data");
        ProblemSection p = load_problem(args.config);
        data.phi = p.phi;
        data.jflux = p.gamma;
        data.source = p.source;
        data.initial = p.initial;
        data.eps = study::parse_fraction(args.eps);
    }
    auto cert = evolve::phi_certificate(traj, data);
    print_certificate(cert);
    return kExitOk;
}

struct TwoScaleArgs {
    std::string sequence = "weaktwo";
    std::vector<std::string> eps = {"1/16", "1/32", "1/64"};
    std::string out;
};

int cmd_twoscale_check(const TwoScaleArgs& args) {
    std::vector<twoscale::EpsField> seq;
    twoscale::TwoScaleField limit = twoscale::TwoScaleField::zero(1, 1);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;

    if (args.sequence == "weaktwo") {
        for (const std::string& tok : args.eps) {
            double eps = study::parse_fraction(tok);
            if (!(eps > 0.0) || eps > 0.5)
                throw ConfigError("weaktwo sequence needs eps in (0, 1/2]");
            // resolution improves relative to the period as eps shrinks
            int J = static_cast<int>(std::lround(16.0 / (eps * eps)));
            std::vector<double> v(static_cast<std::size_t>(J) + 1);
            for (int i = 0; i <= J; ++i) {
                double x = static_cast<double>(i) / J;
                v[static_cast<std::size_t>(i)] = x * std::sin(kTwoPi * x / eps);
            }
            seq.push_back({eps, std::move(v)});
        }
        limit = twoscale::TwoScaleField::tabulate(
            2048, 32, [&](double x, double y) { return x * std::sin(kTwoPi * y); });
    } else if (args.sequence == "constant") {
        for (const std::string& tok : args.eps) {
            double eps = study::parse_fraction(tok);
            if (!(eps > 0.0) || eps > 1.0)
                throw ConfigError("constant sequence needs eps in (0, 1]");
            int J = static_cast<int>(std::lround(64.0 / eps));
            seq.push_back({eps, std::vector<double>(static_cast<std::size_t>(J) + 1, 1.0)});
        }
        limit = twoscale::TwoScaleField::tabulate(512, 16, [](double, double) { return 1.0; });
    } else {
        throw ConfigError("unknown sequence preset '" + args.sequence + "'");
    }

    auto family = twoscale::default_test_family();
    auto rows = twoscale::twoscale_gap(seq, limit, family);
    auto path = out_path(args.out);
    auto out = open_out(path);
    twoscale::write_gap_table(rows, out);
    if (!out) throw IoError("short write to '" + path.string() + "'");
    std::cout << "wrote " << rows.size() << " gap rows to " << path.string() << "\n";
    return kExitOk;
}

int cmd_study(const std::string& config_path) {
    auto cfg_file = study::ConfigFile::parse_file(config_path);
    auto cfg = study::StudyConfig::from_config(cfg_file);
    const char* base = std::getenv("HOMOGLAB_OUT");
    if (base != nullptr && *base != '\0') cfg.out_dir = base;

    auto report = study::run_convergence_study(cfg);
    auto path = std::filesystem::path(cfg.out_dir) / "report.csv";
    auto out = open_out(path);
    study::write_study_report(report, out);
    if (!out) throw IoError("short write to '" + path.string() + "'");

    std::cout << "study " << report.run_id << " wrote " << path.string() << "\n";
    std::cout << "partial = " << (report.partial ? 1 : 0) << "\n";
    for (const auto& row : report.rows)
        std::cout << "eps = " << fmt17(row.eps) << ", l2_error = " << fmt17(row.l2_error)
                  << ", status = " << row.status << "\n";
    return kExitOk;
}

std::string quote_escape(const std::string& msg) {
    std::string out;
    for (char c : msg) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "; ";
            continue;
        }
        out.push_back(c);
    }
    return out;
}

int fail(const char* kind, const std::string& msg, int code) {
    std::cerr << "homoglab-error: kind=" << kind << " message=\"" << quote_escape(msg) << "\"\n";
    return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"numerical homogenization toolkit for doubly-nonlinear parabolic systems"};
    app.require_subcommand(1);

    TabulateArgs tab;
    auto* tab_cmd = app.add_subcommand("cell-tabulate", "tabulate an effective law from a preset");
    tab_cmd->add_option("--preset", tab.preset, "quadratic | power | two-phase | kinked");
    tab_cmd->add_option("--a", tab.a, "coefficient for quadratic/power/kinked");
    tab_cmd->add_option("--a1", tab.a1, "first phase coefficient");
    tab_cmd->add_option("--a2", tab.a2, "second phase coefficient");
    tab_cmd->add_option("--theta", tab.theta, "volume fraction of the first phase");
    tab_cmd->add_option("--p", tab.p, "growth exponent");
    tab_cmd->add_option("--c", tab.c, "kink magnitude");
    tab_cmd->add_option("--xi-min", tab.xi_min);
    tab_cmd->add_option("--xi-max", tab.xi_max);
    tab_cmd->add_option("--xi-count", tab.xi_count);
    tab_cmd->add_option("--eta-min", tab.eta_min);
    tab_cmd->add_option("--eta-max", tab.eta_max);
    tab_cmd->add_option("--eta-count", tab.eta_count);
    tab_cmd->add_option("--cell-m", tab.cell_m, "cell grid resolution");
    tab_cmd->add_flag("--f0", tab.with_f0, "also tabulate the representative table");
    tab_cmd->add_option("--out", tab.out, "law file to write")->required();

    SolveArgs solve;
    auto* solve_cmd = app.add_subcommand("solve", "solve one eps-problem");
    solve_cmd->add_option("--config", solve.config, "problem config file")->required();
    solve_cmd->add_option("--eps", solve.eps, "period, e.g. 1/8");
    solve_cmd->add_option("--mesh-factor", solve.mesh_factor, "elements per period");
    solve_cmd->add_option("--out", solve.out, "trajectory file to write")->required();

    HomogenizeArgs hom;
    auto* hom_cmd = app.add_subcommand("homogenize", "solve the homogenized problem from a law");
    hom_cmd->add_option("--config", hom.config, "problem config file")->required();
    hom_cmd->add_option("--law", hom.law, "effective law file")->required();
    hom_cmd->add_option("--elements", hom.elements, "mesh elements");
    hom_cmd->add_option("--out", hom.out, "trajectory file to write")->required();

    CertifyArgs cert;
    auto* cert_cmd = app.add_subcommand("certify", "recompute the certificate of a trajectory");
    cert_cmd->add_option("--traj", cert.traj, "trajectory file")->required();
    cert_cmd->add_option("--config", cert.config, "problem config file");
    cert_cmd->add_option("--data", cert.data_preset, "built-in data preset (zero)");
    cert_cmd->add_option("--eps", cert.eps, "period for config-based data");

    TwoScaleArgs ts;
    auto* ts_cmd = app.add_subcommand("twoscale-check", "gap table for a prototype sequence");
    ts_cmd->add_option("--sequence", ts.sequence, "weaktwo | constant");
    ts_cmd->add_option("--eps", ts.eps, "eps values, e.g. 1/16 1/32 1/64");
    ts_cmd->add_option("--out", ts.out, "gap table file to write")->required();

    std::string study_config;
    auto* study_cmd = app.add_subcommand("study", "run a full convergence study");
    study_cmd->add_option("--config", study_config, "study config file")->required();

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        if (code == 0) return kExitOk;  // --help and friends
        std::cerr << "homoglab-error: kind=config message=\"argument parsing failed\"\n";
        return kExitConfig;
    }

    try {
        if (tab_cmd->parsed()) return cmd_cell_tabulate(tab);
        if (solve_cmd->parsed()) return cmd_solve(solve);
        if (hom_cmd->parsed()) return cmd_homogenize(hom);
        if (cert_cmd->parsed()) return cmd_certify(cert);
        if (ts_cmd->parsed()) return cmd_twoscale_check(ts);
        if (study_cmd->parsed()) return cmd_study(study_config);
        return fail("config", "no subcommand given", kExitConfig);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kExitConfig);
    } catch (const SolverError& e) {
        return fail("solver", e.what(), kExitSolver);
    } catch (const ConsistencyError& e) {
        return fail("solver", e.what(), kExitSolver);
    } catch (const IoError& e) {
        return fail("io", e.what(), kExitIo);
    } catch (const std::exception& e) {
        return fail("io", e.what(), kExitIo);
    }
}

}  // namespace homoglab::cli
