#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "homoglab/cell.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/evolve.hpp"

namespace homoglab::twoscale {

// Oscillatory test function psi(x) rho(x / eps) theta(t): monomial macroscopic
// factor, trigonometric or constant microscopic factor, optional time ramp.
struct TwoScaleTest {
    enum class Trig { One, Sin, Cos };
    int degree = 0;  // psi(x) = x^degree, 0..3
    Trig trig = Trig::One;
    int k = 1;           // microscopic frequency, 1..4
    int time_degree = 0;  // theta(t) = t^time_degree, 0..1

    void validate() const;
    double psi(double x) const;
    double rho(double y) const;
    double theta(double t) const;
    double value(double x, double y, double t = 0.0) const;
    std::string id() const;
};

// Monomials up to degree 3 crossed with {1, sin, cos} up to frequency 4.
std::vector<TwoScaleTest> default_test_family();

// Two-variable field sampled at macroscopic nodes x_i = i/J and cell midpoints
// y_j = (j + 1/2)/M.
struct TwoScaleField {
    int J = 0, M = 0;
    std::vector<double> vals;  // (J+1) x M, row-major in x

    static TwoScaleField zero(int J, int M);
    static TwoScaleField tabulate(int J, int M,
                                  const std::function<double(double, double)>& f);

    double at(int i, int j) const { return vals[static_cast<std::size_t>(i) * M + j]; }
    double& at(int i, int j) { return vals[static_cast<std::size_t>(i) * M + j]; }

    std::vector<double> average() const;  // cell average per node
    TwoScaleField fluctuation() const;    // zero cell average per node
    double l2() const;                    // trapezoid in x, cell average in y
    double pair(const TwoScaleTest& test) const;
};

// Quadrature of field(x) psi(x) rho(x/eps) over the domain: two-point Gauss
// per element on the mesh interpolant. The mesh must resolve the period
// (eps / h a positive integer).
double pairing(std::span<const double> nodal, const TwoScaleTest& test, double eps);

enum class TrajField { U, W, Z };

// Space-time pairing with the interpolates: piecewise constant for u and z,
// piecewise linear for w.
double pairing(const evolve::Trajectory& traj, const TwoScaleTest& test, double eps,
               TrajField which);

struct EpsField {
    double eps = 0.0;
    std::vector<double> values;  // nodal, J + 1 entries
};

struct GapRow {
    double eps = 0.0;
    std::string test;
    double pairing = 0.0;
    double limit = 0.0;
    double gap = 0.0;
};

// Pairing gaps of an eps-indexed family against a candidate two-scale limit,
// sorted by (eps, test id).
std::vector<GapRow> twoscale_gap(std::span<const EpsField> sequence, const TwoScaleField& limit,
                                 std::span<const TwoScaleTest> tests);

// Periodic unfolding U(x, y) = u(eps floor(x/eps) + eps y) evaluated through
// the mesh interpolant; cells cut by the boundary are clamped.
TwoScaleField unfold(std::span<const double> nodal, double eps, int M);

// Cell-wise quadrature norm of an unfolded field (left Riemann in x); matches
// the element-midpoint norm of the source field exactly on whole cells when
// M equals eps/h.
double unfold_norm(const TwoScaleField& f);

double field_l2(std::span<const double> nodal);  // trapezoid
double field_l2_midpoint(std::span<const double> nodal);

// || dx u_eps - (dx u_hom + dy u1(x, x/eps)) || over space-time, where u1 is
// rebuilt from cell correctors of the medium at the law's tabulated gradients.
double corrector_error(const evolve::Trajectory& eps_traj, const evolve::Trajectory& hom_traj,
                       const convex::Potential& medium, const cell::EffectiveLaw& law, double eps,
                       int cell_m = 64);

void write_gap_table(std::span<const GapRow> rows, std::ostream& out);

}  // namespace homoglab::twoscale
