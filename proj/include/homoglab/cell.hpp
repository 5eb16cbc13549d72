// Periodic cell problems on Y = (0,1)^N, N in {1, 2}: effective potentials
// phi_0, dual potentials psi_0, effective flux maps gamma_0, and the
// homogenized representative F_0, tabulated as an EffectiveLaw.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homoglab/common.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/fitz.hpp"

namespace homoglab::cell {

// M cells per side; 1D integrands are sampled at the M cell midpoints, 2D
// fields live on the staggered edge layout below. Quadrature weight per cell
// is 1/M^N so weights sum to |Y| = 1.
struct CellGrid {
    int N = 1;
    int M = 2;
    static CellGrid make(int N, int M);
    std::size_t cells() const;
    double weight() const;
    double midpoint(int j) const { return (j + 0.5) / M; }
};

// A basis field over the discrete flux layout, sparse because every basis
// element touches at most four components.
// 1D layout: M midpoint values. 2D layout: M*M x-edge values (component 0,
// edge from node (i,j) to (i+1,j)) followed by M*M y-edge values (component 1,
// edge from node (i,j) to (i,j+1)); index (i,j) flattens to i + M*j.
struct SparseField {
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
};

// W: discrete gradients of periodic nodal scalars (all zero-mean fields when
// N=1); Z: discrete curls of periodic cell-centered streams (empty when N=1).
// Both bases are exactly zero-mean and exactly mutually orthogonal.
struct WZBases {
    int N = 1;
    int M = 2;
    std::size_t flux_size = 0;
    std::vector<SparseField> W, Z;
};

WZBases build_wz_bases(const CellGrid& grid);
// Quadrature inner product (weight per flux component included).
double field_dot(const SparseField& a, const SparseField& b, double weight);

struct CellOptions {
    double tol = 1e-11;           // stationarity: max flux spread / (1 + |mean flux|)
    int max_iter = 400;           // Newton iterations per smoothing stage
    double lambda_init = 1e-2;    // Moreau continuation start
    double lambda_final = 1e-6;   // halved until below this
    double cg_tol = 1e-13;        // 2D linear solves, relative residual
    int cg_max_iter = 20000;
};

// 1D primal cell solve: minimizes (1/M) sum_j phi(xi + g_j, y_j) over
// zero-mean g. gamma_hat is the cell-averaged flux, constant across cells at
// optimality; flux holds the per-cell selection realizing it.
struct CellSolution {
    double phi0 = 0.0;
    double gamma_hat = 0.0;
    std::vector<double> corrector;  // g_j at midpoints, zero mean
    std::vector<double> flux;       // flux selection at midpoints
    int iterations = 0;
    double residual = 0.0;
};

CellSolution solve_cell_primal(const convex::Potential& pot, double xi, const CellGrid& grid,
                               const CellOptions& opts = {});

// 1D dual value: Z = {0}, so psi_0(eta) is the plain cell average of the dual
// potential (which must already be the conjugate family).
double solve_cell_dual(const convex::Potential& dual_pot, double eta, const CellGrid& grid);

// 2D primal cell solve for quadratic presets phi = a(y_1) |v|^2 / 2: one
// sparse symmetric linear solve. The corrector gradient is returned on the
// edge layout of SparseField.
struct CellSolution2 {
    double phi0 = 0.0;
    std::array<double, 2> gamma_hat{};
    std::vector<double> gx, gy;  // total fields xi + corrector gradient, M*M each
    int iterations = 0;
    double residual = 0.0;
};

CellSolution2 solve_cell_primal_2d(const convex::Potential& pot, std::array<double, 2> xi,
                                   const CellGrid& grid, const CellOptions& opts = {});

// 2D dual value: minimizes the conjugate integrand over divergence-free
// curls; equals the convex conjugate of the discrete phi_0 by exactness of
// the discrete orthogonal decomposition.
double solve_cell_dual_2d(const convex::Potential& pot, std::array<double, 2> eta,
                          const CellGrid& grid, const CellOptions& opts = {});

// Columns are the averaged fluxes of the unit-direction solves; diagonal for
// axis-aligned laminates.
std::array<double, 4> effective_tensor(const convex::Potential& pot, const CellGrid& grid,
                                       const CellOptions& opts = {});

// F_0(xi, eta): joint minimization of the representative integrand over
// W x Z. Fenchel representatives separate into phi_0(xi) + psi_0(eta); graph
// representatives run the constrained minimization on a sampled slice.
double f0_eval(const fitz::RepresentativeFn& rep, double xi, double eta, const CellGrid& grid,
               const CellOptions& opts = {});

// Closed-form laminate coefficients: across layers the p-growth harmonic
// formula, along layers the arithmetic mean.
struct LaminateCoefficients {
    double across = 0.0;
    double along = 0.0;
};
LaminateCoefficients laminate_oracle(double a1, double a2, double theta, double p);

struct EffectiveLaw {
    std::string preset;
    double p = 2.0;
    int N = 1;
    int M = 0;
    double tol = 0.0;
    double conjugacy_gap = 0.0;
    std::vector<double> xi, phi0, gamma0;
    std::vector<double> eta, psi0;
    std::array<double, 4> tensor{};  // row-major, N=2 only
    std::vector<double> f0;          // optional, xi-major on xi x eta
    bool has_f0 = false;

    double phi0_at(double x) const;
    double gamma0_at(double x) const;
    double gamma0_slope_at(double x) const;
    double psi0_at(double e) const;
    double f0_at(std::size_t i, std::size_t j) const;
    double xi_min() const { return xi.front(); }
    double xi_max() const { return xi.back(); }

    // Table invariants: phi0 convex, gamma0 monotone, psi_0 within the
    // recorded gap of conjugate(phi0), F_0 >= xi.eta - 1e-8 where tabulated.
    void validate() const;

  private:
    mutable std::optional<MonotoneCubic> phi0_interp_, gamma0_interp_, psi0_interp_;
};

struct TabulateOptions {
    CellOptions cell;
    bool with_f0 = false;  // also fill the F_0 table from the Fenchel representative
};

EffectiveLaw tabulate_effective_law(const convex::Potential& pot, std::vector<double> xi_grid,
                                    std::vector<double> eta_grid, const CellGrid& grid,
                                    const TabulateOptions& opts = {});

// Text table: '#' metadata lines, then "xi, phi0, gamma0" rows, then a second
// block "eta, psi0". The F_0 table is not persisted.
void write_effective_law(const EffectiveLaw& law, std::ostream& os);
EffectiveLaw read_effective_law(std::istream& is);

}  // namespace homoglab::cell
