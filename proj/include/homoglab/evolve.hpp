#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "homoglab/cell.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/fitz.hpp"

namespace homoglab::evolve {

// Flux-type source: enters the weak equation paired with the gradient of the
// test function, so the strong form reads  D_t w = (z + source)_x.
struct SourceSpec {
    enum class Kind { Zero, Cosine };
    Kind kind = Kind::Zero;
    double amp = 0.0;
    double freq = 1.0;   // spatial frequency in multiples of pi
    double decay = 0.0;  // exponential decay rate in t
    double ymod = 0.0;   // relative cos(2 pi y) modulation

    static SourceSpec zero();
    static SourceSpec cosine(double amp, double freq, double decay, double ymod = 0.0);

    double value(double x, double t, double y) const;
    double mean_value(double x, double t) const;  // cell average in y
    std::string describe() const;
};

struct InitialSpec {
    enum class Kind { Zero, Sine };
    Kind kind = Kind::Zero;
    double amp = 0.0;
    double freq = 1.0;
    double ymod = 0.0;

    static InitialSpec zero();
    static InitialSpec sine(double amp, double freq, double ymod = 0.0);

    double value(double x, double y) const;
    double mean_value(double x) const;
    std::string describe() const;
};

struct EvolveOptions {
    double newton_tol = 1e-10;   // gradient stop, relative to data scale
    int max_iter = 80;           // Newton iterations per smoothing stage
    double lambda_init = 1e-2;   // smoothing continuation start
    double lambda_final = 1e-6;  // smoothing continuation end
    double lambda_factor = 0.1;
    double inclusion_tol = 1e-5;  // dual recovery must stay this close to the subdifferential
};

struct ProblemData {
    enum class Mode { Eps, Homogenized };
    Mode mode = Mode::Eps;
    double eps = 0.125;
    double T = 1.0;
    int m = 16;  // time steps, k = T / m
    int J = 64;  // mesh elements on (0,1), h = 1 / J
    convex::Potential phi;    // zero-order potential, quadratic growth
    convex::Potential jflux;  // flux potential (solver path needs a cyclic flux)
    const cell::EffectiveLaw* law = nullptr;  // tables for homogenized mode
    SourceSpec source;
    InitialSpec initial;
    EvolveOptions opts;

    double hmesh() const { return 1.0 / J; }
    double kstep() const { return T / m; }
    void validate() const;
};

struct StepDiag {
    int iterations = 0;
    double grad_norm = 0.0;
    double inclusion_residual = 0.0;
};

// u, w nodal on m+1 time levels; z per element (flux quadrature points).
struct Trajectory {
    double T = 0.0;
    int m = 0;
    int J = 0;
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> z;
    std::vector<StepDiag> diag;

    double hmesh() const { return 1.0 / J; }
    double kstep() const { return T / m; }
};

struct StepState {
    std::vector<double> u, w, z;
    StepDiag diag;
};

// One implicit Euler step at time level n (t_n = n k), warm-started at uguess.
StepState step(const ProblemData& data, const std::vector<double>& wprev,
               const std::vector<double>& uguess, int n);

// The raw (unsmoothed) step functional the minimizer descends.
double step_energy(const ProblemData& data, const std::vector<double>& wprev,
                   const std::vector<double>& u, int n);

Trajectory solve_parabolic(const ProblemData& data);

struct CertificateReport {
    double alpha_part = 0.0;  // integral of phi(u) + phi*(w) - w u
    double gamma_part = 0.0;  // integral of f(u_x, z) - u_x z
    double total = 0.0;
    double scale = 1.0;  // 1 + accumulated absolute integrand mass
    double slack = 0.0;  // allowed negativity of the gamma part
    std::vector<double> step_alpha;
    std::vector<double> step_gamma;
};

CertificateReport phi_certificate(const Trajectory& traj, const ProblemData& data);
// Certificates accept any flux representative (graphs included); only the
// solver path requires a cyclic flux.
CertificateReport phi_certificate(const Trajectory& traj, const ProblemData& data,
                                  const fitz::RepresentativeFn& rep);

struct NormRecord {
    double u_grad_l2 = 0.0;   // || grad u || over space-time
    double z_l2 = 0.0;        // || z || over space-time
    double w_linf_l2 = 0.0;   // max over time levels of || w ||
    double dtw_dual = 0.0;    // difference quotients of w in the discrete dual norm
};

NormRecord apriori_monitor(const Trajectory& traj);

// Space-time test function: hat at a mesh node times a piecewise-linear time
// profile theta over t_0..t_m with theta[m] == 0.
struct WeakTest {
    int node = 1;
    std::vector<double> theta;
};

double weak_residual(const Trajectory& traj, const ProblemData& data,
                     std::span<const WeakTest> tests);
std::vector<WeakTest> default_weak_tests(const ProblemData& data);

void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace homoglab::evolve
