#include "homoglab/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "homoglab/common.hpp"
#include "homoglab/fitz.hpp"
#include "homoglab/twoscale.hpp"

namespace homoglab::study {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + " is not a number: '" + s + "'");
    }
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex16(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> g(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    return g;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
    ConfigFile cfg;
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3)
                throw ConfigError("malformed section header at line " + std::to_string(lineno));
            section = trim(body.substr(1, body.size() - 2));
            cfg.sections[section];
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' at line " + std::to_string(lineno));
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty())
            throw ConfigError("empty key at line " + std::to_string(lineno));
        cfg.sections[section][key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    return parse(in);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s != sections.end()) {
        auto k = s->second.find(key);
        if (k != s->second.end()) return k->second;
    }
    throw ConfigError("missing config key [" + section + "] " + key);
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    return to_double(get(section, key), "[" + section + "] " + key);
}

double ConfigFile::get_double_or(const std::string& section, const std::string& key,
                                 double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

int ConfigFile::get_int_or(const std::string& section, const std::string& key,
                           int fallback) const {
    if (!has(section, key)) return fallback;
    double v = get_double(section, key);
    int n = static_cast<int>(std::lround(v));
    if (std::abs(v - n) > 1e-9)
        throw ConfigError("[" + section + "] " + key + " must be an integer");
    return n;
}

std::string ConfigFile::canonical() const {
    std::string out;
    for (const auto& [section, entries] : sections)
        for (const auto& [key, value] : entries)
            out += section + "." + key + " = " + value + "\n";
    return out;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

convex::Potential parse_potential(const std::string& text) {
    auto tok = split_ws(text);
    if (tok.empty()) throw ConfigError("empty potential preset");
    auto arg = [&](std::size_t i) -> double {
        if (i >= tok.size())
            throw ConfigError("potential preset '" + tok[0] + "' is missing argument " +
                              std::to_string(i));
        return to_double(tok[i], "potential argument");
    };
    auto expect = [&](std::size_t n) {
        if (tok.size() != n + 1)
            throw ConfigError("potential preset '" + tok[0] + "' takes " + std::to_string(n) +
                              " arguments");
    };
    const std::string& name = tok[0];
    if (name == "quadratic") {
        expect(1);
        return convex::Potential::quadratic(arg(1));
    }
    if (name == "power") {
        expect(2);
        return convex::Potential::power(arg(1), arg(2));
    }
    if (name == "absolute") {
        expect(0);
        return convex::Potential::absolute();
    }
    if (name == "two-phase") {
        expect(3);
        return convex::Potential::two_phase(arg(1), arg(2), arg(3));
    }
    if (name == "power-two-phase") {
        expect(4);
        return convex::Potential::power_two_phase(arg(1), arg(2), arg(3), arg(4));
    }
    if (name == "kinked") {
        expect(2);
        return convex::Potential::kinked(arg(1), arg(2));
    }
    if (name == "kinked-two-phase") {
        expect(5);
        return convex::Potential::kinked_two_phase(arg(1), arg(2), arg(3), arg(4), arg(5));
    }
    throw ConfigError("unknown potential preset '" + name + "'");
}

evolve::SourceSpec parse_source(const std::string& text) {
    auto tok = split_ws(text);
    if (tok.empty()) throw ConfigError("empty source preset");
    if (tok[0] == "zero") {
        if (tok.size() != 1) throw ConfigError("source preset 'zero' takes no arguments");
        return evolve::SourceSpec::zero();
    }
    if (tok[0] == "cosine") {
        if (tok.size() != 4 && tok.size() != 5)
            throw ConfigError("source preset 'cosine' takes amp freq decay [ymod]");
        double ymod = tok.size() == 5 ? to_double(tok[4], "source ymod") : 0.0;
        return evolve::SourceSpec::cosine(to_double(tok[1], "source amp"),
                                          to_double(tok[2], "source freq"),
                                          to_double(tok[3], "source decay"), ymod);
    }
    throw ConfigError("unknown source preset '" + tok[0] + "'");
}

evolve::InitialSpec parse_initial(const std::string& text) {
    auto tok = split_ws(text);
    if (tok.empty()) throw ConfigError("empty initial preset");
    if (tok[0] == "zero") {
        if (tok.size() != 1) throw ConfigError("initial preset 'zero' takes no arguments");
        return evolve::InitialSpec::zero();
    }
    if (tok[0] == "sine") {
        if (tok.size() != 3 && tok.size() != 4)
            throw ConfigError("initial preset 'sine' takes amp freq [ymod]");
        double ymod = tok.size() == 4 ? to_double(tok[3], "initial ymod") : 0.0;
        return evolve::InitialSpec::sine(to_double(tok[1], "initial amp"),
                                         to_double(tok[2], "initial freq"), ymod);
    }
    throw ConfigError("unknown initial preset '" + tok[0] + "'");
}

double parse_fraction(const std::string& text) {
    std::size_t slash = text.find('/');
    if (slash == std::string::npos) return to_double(text, "eps value");
    double num = to_double(text.substr(0, slash), "eps numerator");
    double den = to_double(text.substr(slash + 1), "eps denominator");
    if (den == 0.0) throw ConfigError("eps denominator is zero");
    return num / den;
}

StudyConfig StudyConfig::from_config(const ConfigFile& cfg) {
    StudyConfig sc;
    sc.phi = parse_potential(cfg.get("problem", "phi"));
    sc.gamma = parse_potential(cfg.get("problem", "gamma"));
    sc.source = parse_source(cfg.get_or("problem", "source", "zero"));
    sc.initial = parse_initial(cfg.get_or("problem", "initial", "zero"));
    sc.T = cfg.get_double_or("problem", "T", sc.T);
    sc.m = cfg.get_int_or("problem", "m", sc.m);

    for (const std::string& tok : split_ws(cfg.get("study", "eps")))
        sc.eps.push_back(parse_fraction(tok));
    sc.mesh_factor = cfg.get_int_or("study", "mesh_factor", sc.mesh_factor);
    sc.hom_elements = cfg.get_int_or("study", "hom_elements", sc.hom_elements);
    double seed = cfg.get_double_or("study", "seed", 0.0);
    if (seed < 0.0 || std::abs(seed - std::floor(seed)) > 0.0)
        throw ConfigError("[study] seed must be a nonnegative integer");
    sc.seed = static_cast<std::uint64_t>(seed);

    sc.xi_min = cfg.get_double_or("law", "xi_min", sc.xi_min);
    sc.xi_max = cfg.get_double_or("law", "xi_max", sc.xi_max);
    sc.xi_count = cfg.get_int_or("law", "xi_count", sc.xi_count);
    sc.eta_min = cfg.get_double_or("law", "eta_min", sc.eta_min);
    sc.eta_max = cfg.get_double_or("law", "eta_max", sc.eta_max);
    sc.eta_count = cfg.get_int_or("law", "eta_count", sc.eta_count);
    sc.cell_m = cfg.get_int_or("law", "cell_m", sc.cell_m);
    sc.law_file = cfg.get_or("law", "file", "");

    sc.out_dir = cfg.get_or("output", "dir", sc.out_dir);
    sc.tol = cfg.get_double_or("output", "tol", sc.tol);
    sc.validate();
    return sc;
}

void StudyConfig::validate() const {
    if (!(T > 0.0)) throw ConfigError("T must be positive");
    if (m < 1) throw ConfigError("m must be at least 1");
    if (!(tol > 0.0)) throw ConfigError("tolerances must be positive");
    if (mesh_factor < 16)
        throw ConfigError("mesh factor must be at least 16 elements per period");
    if (hom_elements < 2) throw ConfigError("homogenized mesh needs at least 2 elements");
    if (eps.empty()) throw ConfigError("eps list is empty");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        double e = eps[i];
        if (!(e > 0.0) || e > 1.0) throw ConfigError("eps values must lie in (0, 1]");
        for (std::size_t j = i + 1; j < eps.size(); ++j)
            if (std::abs(e - eps[j]) <= 1e-15) throw ConfigError("eps values must be distinct");
        double J = mesh_factor / e;
        if (std::abs(J - std::round(J)) > 1e-9)
            throw ConfigError("eps = " + fmt17(e) +
                              " does not give an integer element count under the mesh factor");
        int Je = static_cast<int>(std::round(J));
        int lo = std::min(Je, hom_elements), hi = std::max(Je, hom_elements);
        if (hi % lo != 0)
            throw ConfigError("eps mesh and homogenized mesh must nest for the error norm");
    }
    if (xi_count < 2 || eta_count < 2) throw ConfigError("law tables need at least 2 nodes");
    if (!(xi_min < xi_max) || !(eta_min < eta_max))
        throw ConfigError("law table ranges must be increasing");
    if (cell_m < 2) throw ConfigError("cell resolution must be at least 2");
}

int StudyConfig::eps_elements(double eps_value) const {
    return static_cast<int>(std::round(mesh_factor / eps_value));
}

std::uint64_t StudyConfig::config_hash() const {
    std::string text;
    text += "phi = " + phi.describe() + "\n";
    text += "gamma = " + gamma.describe() + "\n";
    text += "source = " + source.describe() + "\n";
    text += "initial = " + initial.describe() + "\n";
    text += "T = " + fmt17(T) + "\n";
    text += "m = " + std::to_string(m) + "\n";
    text += "eps =";
    for (double e : eps) text += " " + fmt17(e);
    text += "\n";
    text += "mesh_factor = " + std::to_string(mesh_factor) + "\n";
    text += "hom_elements = " + std::to_string(hom_elements) + "\n";
    text += "seed = " + std::to_string(seed) + "\n";
    text += "xi = " + fmt17(xi_min) + " " + fmt17(xi_max) + " " + std::to_string(xi_count) + "\n";
    text += "eta = " + fmt17(eta_min) + " " + fmt17(eta_max) + " " + std::to_string(eta_count) +
            "\n";
    text += "cell_m = " + std::to_string(cell_m) + "\n";
    text += "law_file = " + law_file + "\n";
    text += "tol = " + fmt17(tol) + "\n";
    return fnv1a64(text);
}

namespace {

// pw-constant-in-time trapezoid-in-space space-time norm on the coarser of
// the two meshes; nodal restriction is exact for the mesh interpolants
double l2_spacetime_gap(const evolve::Trajectory& a, const evolve::Trajectory& b) {
    int Jc = std::min(a.J, b.J);
    int sa = a.J / Jc, sb = b.J / Jc;
    double h = 1.0 / Jc;
    double k = a.kstep();
    double acc = 0.0;
    for (int n = 1; n <= a.m; ++n) {
        const auto& ua = a.u[static_cast<std::size_t>(n)];
        const auto& ub = b.u[static_cast<std::size_t>(n)];
        for (int i = 0; i <= Jc; ++i) {
            double w = (i == 0 || i == Jc) ? 0.5 * h : h;
            double d = ua[static_cast<std::size_t>(i) * sa] - ub[static_cast<std::size_t>(i) * sb];
            acc += k * w * d * d;
        }
    }
    return std::sqrt(std::max(0.0, acc));
}

double l2_spacetime(const evolve::Trajectory& t) {
    double h = t.hmesh();
    double k = t.kstep();
    double acc = 0.0;
    for (int n = 1; n <= t.m; ++n)
        for (int i = 0; i <= t.J; ++i) {
            double w = (i == 0 || i == t.J) ? 0.5 * h : h;
            double u = t.u[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)];
            acc += k * w * u * u;
        }
    return std::sqrt(std::max(0.0, acc));
}

std::string sanitize(const std::string& msg) {
    std::string out = msg;
    for (char& c : out)
        if (c == ',' || c == '\n') c = ';';
    return out;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

StudyReport run_convergence_study(const StudyConfig& cfg) {
    cfg.validate();

    cell::EffectiveLaw law;
    if (!cfg.law_file.empty()) {
        std::ifstream in(cfg.law_file);
        if (!in) throw IoError("cannot open law file '" + cfg.law_file + "'");
        law = cell::read_effective_law(in);
    } else {
        law = cell::tabulate_effective_law(cfg.gamma, linspace(cfg.xi_min, cfg.xi_max, cfg.xi_count),
                                           linspace(cfg.eta_min, cfg.eta_max, cfg.eta_count),
                                           cell::CellGrid::make(1, cfg.cell_m));
    }

    evolve::ProblemData hom;
    hom.mode = evolve::ProblemData::Mode::Homogenized;
    hom.law = &law;
    hom.T = cfg.T;
    hom.m = cfg.m;
    hom.J = cfg.hom_elements;
    hom.phi = cfg.phi;
    hom.jflux = cfg.gamma;
    hom.source = cfg.source;
    hom.initial = cfg.initial;
    evolve::Trajectory hom_traj = evolve::solve_parabolic(hom);

    StudyReport report;
    report.config_hash = cfg.config_hash();
    report.run_id = "study-" + hex16(report.config_hash);
    report.seed = cfg.seed;
    report.hom_l2 = l2_spacetime(hom_traj);
    report.law_conjugacy_gap = law.conjugacy_gap;
    report.law_origin = law.preset;

    auto family = twoscale::default_test_family();
    for (const auto& test : family) {
        if (!report.family.empty()) report.family += ", ";
        report.family += test.id();
    }
    // candidate two-scale limit of u_eps: the homogenized solution itself,
    // constant in the cell variable
    auto limit = twoscale::TwoScaleField::tabulate(
        cfg.hom_elements, 16, [&](double x, double) {
            auto i = static_cast<std::size_t>(std::lround(x * cfg.hom_elements));
            return hom_traj.u[static_cast<std::size_t>(cfg.m)][i];
        });
    std::vector<double> limit_pairings;
    limit_pairings.reserve(family.size());
    for (const auto& test : family) limit_pairings.push_back(limit.pair(test));

    for (double eps : cfg.eps) {
        StudyRow row;
        row.eps = eps;
        try {
            evolve::ProblemData data;
            data.mode = evolve::ProblemData::Mode::Eps;
            data.eps = eps;
            data.T = cfg.T;
            data.m = cfg.m;
            data.J = cfg.eps_elements(eps);
            data.phi = cfg.phi;
            data.jflux = cfg.gamma;
            data.source = cfg.source;
            data.initial = cfg.initial;
            evolve::Trajectory traj = evolve::solve_parabolic(data);

            auto cert = evolve::phi_certificate(traj, data);
            row.cert_total = cert.total;

            // reproducible single-node bump: the certificate must strictly
            // penalize leaving the solved trajectory
            std::mt19937_64 rng(cfg.seed);
            int node = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(data.J - 1));
            evolve::Trajectory bumped = traj;
            for (int n = 1; n <= bumped.m; ++n)
                bumped.u[static_cast<std::size_t>(n)][static_cast<std::size_t>(node)] += 0.1;
            row.cert_perturbed = evolve::phi_certificate(bumped, data).total;

            row.l2_error = l2_spacetime_gap(traj, hom_traj);
            auto norms = evolve::apriori_monitor(traj);
            row.u_grad_l2 = norms.u_grad_l2;
            row.z_l2 = norms.z_l2;
            row.w_linf_l2 = norms.w_linf_l2;
            row.dtw_dual = norms.dtw_dual;

            double worst = 0.0;
            for (std::size_t t = 0; t < family.size(); ++t) {
                double p = twoscale::pairing(traj.u[static_cast<std::size_t>(cfg.m)], family[t],
                                             eps);
                worst = std::max(worst, std::abs(p - limit_pairings[t]));
            }
            row.twoscale_gap = worst;
            row.corrector_err =
                twoscale::corrector_error(traj, hom_traj, cfg.gamma, law, eps, cfg.cell_m);
            row.ok = true;
            row.status = "ok";
        } catch (const std::runtime_error& e) {
            row.ok = false;
            row.status = "failed: " + sanitize(e.what());
            row.l2_error = row.cert_total = row.cert_perturbed = kNaN;
            row.u_grad_l2 = row.z_l2 = row.w_linf_l2 = row.dtw_dual = kNaN;
            row.twoscale_gap = row.corrector_err = kNaN;
            report.partial = true;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_study_report(const StudyReport& report, std::ostream& out) {
    out << "# homoglab-study\n";
    out << "# run_id = " << report.run_id << "\n";
    out << "# config_hash = " << hex16(report.config_hash) << "\n";
    out << "# seed = " << report.seed << "\n";
    out << "# partial = " << (report.partial ? 1 : 0) << "\n";
    out << "# hom_l2 = " << fmt17(report.hom_l2) << "\n";
    out << "# law_conjugacy_gap = " << fmt17(report.law_conjugacy_gap) << "\n";
    out << "# law_origin = " << report.law_origin << "\n";
    out << "# family = " << report.family << "\n";
    out << "eps, status, l2_error, cert_total, cert_perturbed, u_grad_l2, z_l2, w_linf_l2, "
           "dtw_dual, twoscale_gap, corrector_error\n";
    for (const StudyRow& row : report.rows) {
        out << fmt17(row.eps) << ", " << row.status << ", " << fmt17(row.l2_error) << ", "
            << fmt17(row.cert_total) << ", " << fmt17(row.cert_perturbed) << ", "
            << fmt17(row.u_grad_l2) << ", " << fmt17(row.z_l2) << ", " << fmt17(row.w_linf_l2)
            << ", " << fmt17(row.dtw_dual) << ", " << fmt17(row.twoscale_gap) << ", "
            << fmt17(row.corrector_err) << "\n";
    }
}

StudyReport read_study_report(std::istream& in) {
    StudyReport report;
    std::string line;
    bool tagged = false, header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '#') {
            std::string meta = trim(body.substr(1));
            if (meta == "homoglab-study") {
                tagged = true;
                continue;
            }
            std::size_t eq = meta.find('=');
            if (eq == std::string::npos) continue;
            std::string key = trim(meta.substr(0, eq));
            std::string value = trim(meta.substr(eq + 1));
            try {
                if (key == "config_hash") report.config_hash = std::stoull(value, nullptr, 16);
                else if (key == "seed") report.seed = std::stoull(value);
            } catch (const std::exception&) {
                throw IoError("study report metadata '" + key + "' is malformed");
            }
            if (key == "run_id") report.run_id = value;
            else if (key == "partial") report.partial = value == "1";
            else if (key == "hom_l2") report.hom_l2 = to_double(value, "hom_l2");
            else if (key == "law_conjugacy_gap")
                report.law_conjugacy_gap = to_double(value, "law_conjugacy_gap");
            else if (key == "law_origin") report.law_origin = value;
            else if (key == "family") report.family = value;
            continue;
        }
        if (!tagged) throw IoError("study report is missing its format tag");
        if (!header_seen) {
            if (body.rfind("eps,", 0) != 0)
                throw IoError("study report data began before the column header at line " +
                              std::to_string(lineno));
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = body.find(',', start);
            fields.push_back(trim(body.substr(start, comma - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 11)
            throw IoError("study report row at line " + std::to_string(lineno) +
                          " does not have 11 columns");
        StudyRow row;
        row.eps = to_double(fields[0], "eps");
        row.status = fields[1];
        row.ok = row.status == "ok";
        auto cell_value = [&](std::size_t i) {
            if (fields[i] == "nan" || fields[i] == "-nan") return kNaN;
            return to_double(fields[i], "report cell");
        };
        row.l2_error = cell_value(2);
        row.cert_total = cell_value(3);
        row.cert_perturbed = cell_value(4);
        row.u_grad_l2 = cell_value(5);
        row.z_l2 = cell_value(6);
        row.w_linf_l2 = cell_value(7);
        row.dtw_dual = cell_value(8);
        row.twoscale_gap = cell_value(9);
        row.corrector_err = cell_value(10);
        report.rows.push_back(std::move(row));
    }
    if (!tagged) throw IoError("study report stream carries no data");
    return report;
}

}  // namespace homoglab::study
