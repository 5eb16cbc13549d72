#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/cell.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/evolve.hpp"

namespace homoglab::study {

// Line-oriented `key = value` text grouped by [section]; '#' starts a comment.
struct ConfigFile {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static ConfigFile parse(std::istream& in);
    static ConfigFile parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    int get_int_or(const std::string& section, const std::string& key, int fallback) const;

    // sorted section.key = value lines; basis of the config hash
    std::string canonical() const;
};

std::uint64_t fnv1a64(const std::string& text);

// Preset strings like "quadratic 1.0", "two-phase 1 4 0.5",
// "power-two-phase 1 16 0.5 4", "kinked 0.5 1".
convex::Potential parse_potential(const std::string& text);
evolve::SourceSpec parse_source(const std::string& text);   // "zero", "cosine amp freq decay [ymod]"
evolve::InitialSpec parse_initial(const std::string& text);  // "zero", "sine amp freq [ymod]"
double parse_fraction(const std::string& text);              // "1/8" or "0.125"

struct StudyConfig {
    convex::Potential phi;
    convex::Potential gamma;
    evolve::SourceSpec source;
    evolve::InitialSpec initial;
    double T = 0.25;
    int m = 64;
    std::vector<double> eps;  // solved in the listed order
    int mesh_factor = 16;     // elements per period
    int hom_elements = 512;
    std::uint64_t seed = 0;
    double xi_min = -4.0, xi_max = 4.0;
    int xi_count = 129;
    double eta_min = -6.4, eta_max = 6.4;
    int eta_count = 129;
    int cell_m = 64;
    std::string out_dir = ".";
    std::string law_file;  // load instead of tabulating when set
    double tol = 1e-6;     // certificate reporting tolerance, must be positive

    static StudyConfig from_config(const ConfigFile& cfg);
    void validate() const;
    int eps_elements(double eps_value) const;
    // hashes the semantic fields, not the config file bytes, so formatting
    // and comments do not change the hash
    std::uint64_t config_hash() const;
};

struct StudyRow {
    double eps = 0.0;
    bool ok = false;
    std::string status;  // "ok" or the failure message
    double l2_error = 0.0;
    double cert_total = 0.0;
    double cert_perturbed = 0.0;
    double u_grad_l2 = 0.0;
    double z_l2 = 0.0;
    double w_linf_l2 = 0.0;
    double dtw_dual = 0.0;
    double twoscale_gap = 0.0;
    double corrector_err = 0.0;
};

struct StudyReport {
    std::string run_id;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    bool partial = false;
    double hom_l2 = 0.0;           // reference norm of the homogenized solution
    double law_conjugacy_gap = 0.0;
    std::string law_origin;        // medium description behind the tables
    std::string family;            // two-scale test ids, comma separated
    std::vector<StudyRow> rows;
};

// Tabulates (or loads) the effective law, solves the homogenized problem
// once, then every eps-problem with full diagnostics. Failures are recorded
// per row and the report is marked partial. Deterministic for a fixed config.
StudyReport run_convergence_study(const StudyConfig& cfg);

void write_study_report(const StudyReport& report, std::ostream& out);
StudyReport read_study_report(std::istream& in);

}  // namespace homoglab::study
