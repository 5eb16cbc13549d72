#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "homoglab/cell.hpp"
#include "homoglab/common.hpp"
#include "homoglab/convex.hpp"
#include "homoglab/fitz.hpp"
#include "oracles.hpp"

using namespace homoglab;
using convex::Potential;
using namespace homoglab::cell;

namespace {

std::vector<double> densify(const SparseField& f, std::size_t n) {
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < f.idx.size(); ++k) out[f.idx[k]] += f.val[k];
    return out;
}

std::vector<double> symmetric_grid(double R, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = -R + 2.0 * R * i / (n - 1);
    return g;
}

}  // namespace

TEST_CASE("1D bases: W spans zero-mean fields, Z is empty") {
    auto grid = CellGrid::make(1, 8);
    auto b = build_wz_bases(grid);
    CHECK(b.W.size() == 7);
    CHECK(b.Z.size() == 0);
    for (const auto& f : b.W) {
        auto dense = densify(f, b.flux_size);
        double mean = 0.0;
        for (double x : dense) mean += x;
        CHECK(mean == 0.0);  // exact: entries are +M, -M
    }
}

TEST_CASE("2D bases: orthogonality, zero mean, and divergence-free curls are exact") {
    const int M = 8;
    auto grid = CellGrid::make(2, M);
    auto b = build_wz_bases(grid);
    const std::size_t mm = static_cast<std::size_t>(M) * M;
    CHECK(b.W.size() == mm - 1);
    CHECK(b.Z.size() == mm - 1);
    CHECK(b.flux_size == 2 * mm);
    double w = grid.weight();
    double worst = 0.0;
    for (const auto& wi : b.W)
        for (const auto& zj : b.Z) worst = std::max(worst, std::abs(field_dot(wi, zj, w)));
    CHECK(worst <= 1e-12);
    CHECK(worst == 0.0);  // the cross terms cancel in exact arithmetic
    auto id = [&](int i, int j) {
        return static_cast<std::size_t>((i % M + M) % M) +
               static_cast<std::size_t>(M) * static_cast<std::size_t>((j % M + M) % M);
    };
    for (const auto& zj : b.Z) {
        auto dense = densify(zj, b.flux_size);
        double mean = 0.0;
        for (double x : dense) mean += x;
        CHECK(mean == 0.0);
        for (int j = 0; j < M; ++j)
            for (int i = 0; i < M; ++i) {
                double div = (dense[id(i, j)] - dense[id(i - 1, j)]) +
                             (dense[mm + id(i, j)] - dense[mm + id(i, j - 1)]);
                CHECK(div == 0.0);
            }
    }
    // constants are unreachable: every basis element averages to zero
    for (const auto& wi : b.W) {
        auto dense = densify(wi, b.flux_size);
        double mean = 0.0;
        for (double x : dense) mean += x;
        CHECK(mean == 0.0);
    }
}

TEST_CASE("two-phase quadratic cell solve reproduces the harmonic mean") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(1, 64);
    auto sol = solve_cell_primal(pot, 1.0, grid);
    CHECK(sol.gamma_hat == doctest::Approx(1.6).epsilon(1e-13));
    CHECK(sol.phi0 == doctest::Approx(0.8).epsilon(1e-13));
    CHECK(sol.gamma_hat == doctest::Approx(oracle::laminate_across(1.0, 4.0, 0.5, 2.0)));
    // flux is constant across cells at optimality
    for (double f : sol.flux) CHECK(f == doctest::Approx(1.6).epsilon(1e-13));
    // corrector has zero mean
    double mean = 0.0;
    for (double g : sol.corrector) mean += g;
    CHECK(std::abs(mean) <= 1e-13);
}

TEST_CASE("cell solve against the brute-force projected-gradient oracle") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(1, 8);
    auto sol = solve_cell_primal(pot, 1.0, grid);
    auto g = oracle::brute_cell_minimizer(
        [&](std::size_t j, double s) { return pot.value(s, grid.midpoint(static_cast<int>(j))); },
        1.0, 8, 0.05, 20000);
    double e = 0.0;
    for (std::size_t j = 0; j < 8; ++j)
        e += pot.value(1.0 + g[j], grid.midpoint(static_cast<int>(j)));
    e /= 8.0;
    CHECK(sol.phi0 == doctest::Approx(e).epsilon(1e-6));
    for (std::size_t j = 0; j < 8; ++j)
        CHECK(sol.corrector[j] == doctest::Approx(g[j]).scale(1.0).epsilon(1e-4));
}

TEST_CASE("y-independent potentials need no corrector") {
    auto grid = CellGrid::make(1, 16);
    auto quad = solve_cell_primal(Potential::quadratic(2.0), 0.7, grid);
    for (double g : quad.corrector) CHECK(g == 0.0);
    CHECK(quad.phi0 == doctest::Approx(2.0 * 0.49 / 2.0));
    auto quart = solve_cell_primal(Potential::power(1.0, 4.0), 1.0, grid);
    for (double g : quart.corrector) CHECK(std::abs(g) <= 1e-9);
    CHECK(quart.phi0 == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(quart.gamma_hat == doctest::Approx(1.0).epsilon(1e-9));
    auto zero = solve_cell_primal(Potential::two_phase(1.0, 4.0, 0.5), 0.0, grid);
    CHECK(zero.phi0 == 0.0);
    for (double g : zero.corrector) CHECK(g == 0.0);
}

TEST_CASE("p-growth laminate matches the closed form") {
    auto pot = Potential::power_two_phase(1.0, 16.0, 0.5, 4.0);
    auto grid = CellGrid::make(1, 64);
    auto sol = solve_cell_primal(pot, 1.0, grid);
    double ref = oracle::laminate_across(1.0, 16.0, 0.5, 4.0);
    CHECK(ref == doctest::Approx(2.9355).epsilon(1e-3));
    CHECK(sol.gamma_hat == doctest::Approx(ref).epsilon(1e-8));
    CHECK(sol.phi0 == doctest::Approx(ref / 4.0).epsilon(1e-8));
    double fmin = 1e300, fmax = -1e300;
    for (double f : sol.flux) {
        fmin = std::min(fmin, f);
        fmax = std::max(fmax, f);
    }
    CHECK(fmax - fmin <= 1e-8);
    // brute-force cross check at small M
    auto grid8 = CellGrid::make(1, 8);
    auto sol8 = solve_cell_primal(pot, 1.0, grid8);
    auto g = oracle::brute_cell_minimizer(
        [&](std::size_t j, double s) { return pot.value(s, grid8.midpoint(static_cast<int>(j))); },
        1.0, 8, 0.02, 60000);
    double e = 0.0;
    for (std::size_t j = 0; j < 8; ++j)
        e += pot.value(1.0 + g[j], grid8.midpoint(static_cast<int>(j)));
    CHECK(sol8.phi0 == doctest::Approx(e / 8.0).epsilon(1e-5));
}

TEST_CASE("1D dual value is the plain cell average and conjugate of phi0") {
    auto grid = CellGrid::make(1, 64);
    // conjugate family of the two-phase quadratic: coefficients 1/a
    auto dual = Potential::two_phase(1.0, 0.25, 0.5);
    double psi = solve_cell_dual(dual, 1.6, grid);
    CHECK(psi == doctest::Approx(0.8).epsilon(1e-13));
    // eta = 1.6 pairs with xi = 1: psi0(1.6) = 1.6 * 1 - phi0(1)
    auto prim = solve_cell_primal(Potential::two_phase(1.0, 4.0, 0.5), 1.0, grid);
    CHECK(psi == doctest::Approx(1.6 * 1.0 - prim.phi0).epsilon(1e-12));
}

TEST_CASE("2D laminate tensor is diagonal with harmonic and arithmetic means") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(2, 8);
    auto T = effective_tensor(pot, grid);
    CHECK(T[0] == doctest::Approx(1.6).epsilon(1e-9));
    CHECK(T[3] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(std::abs(T[1]) <= 1e-10);
    CHECK(std::abs(T[2]) <= 1e-10);
    auto lc = laminate_oracle(1.0, 4.0, 0.5, 2.0);
    CHECK(T[0] == doctest::Approx(lc.across).epsilon(1e-9));
    CHECK(T[3] == doctest::Approx(lc.along).epsilon(1e-9));
    // primal energy at e1 matches the tensor quadratic form
    auto sol = solve_cell_primal_2d(pot, {1.0, 0.0}, grid);
    CHECK(sol.phi0 == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("2D dual solve realizes the conjugate of the discrete primal") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(2, 8);
    double psi = solve_cell_dual_2d(pot, {1.0, 0.0}, grid);
    CHECK(psi == doctest::Approx(1.0 / 3.2).epsilon(1e-9));
    double psi2 = solve_cell_dual_2d(pot, {0.0, 1.0}, grid);
    CHECK(psi2 == doctest::Approx(1.0 / 5.0).epsilon(1e-9));
}

TEST_CASE("F0 evaluation certifies effective graph points") {
    auto grid = CellGrid::make(1, 32);
    // y-independent linear flux: the Fenchel representative hits the pairing
    // exactly on the graph eta = 3 xi
    auto rep = fitz::RepresentativeFn::fenchel(Potential::quadratic(3.0));
    double v = f0_eval(rep, 0.5, 1.5, grid);
    CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(v >= 0.75 - 1e-12);
    // two-phase effective graph point (1, 1.6)
    auto tp = fitz::RepresentativeFn::fenchel(Potential::two_phase(1.0, 4.0, 0.5));
    double f = f0_eval(tp, 1.0, 1.6, grid);
    CHECK(f == doctest::Approx(1.6).epsilon(1e-10));
    // off-graph pairs stay above the pairing
    for (double xi : {-1.0, 0.3, 2.0})
        for (double eta : {-2.0, 0.1, 1.0}) CHECK(f0_eval(tp, xi, eta, grid) >= xi * eta - 1e-8);
}

TEST_CASE("F0 for graph representatives reduces to the representative value") {
    auto grid = CellGrid::make(1, 16);
    std::vector<double> v(41), w(41);
    for (int i = 0; i <= 40; ++i) {
        v[static_cast<std::size_t>(i)] = -2.0 + 0.1 * i;
        w[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
    }
    auto rep = fitz::RepresentativeFn::fitzpatrick(fitz::MonotoneGraph::from_samples(v, w));
    CHECK(f0_eval(rep, 0.3, 0.3, grid) == doctest::Approx(0.09).epsilon(1e-9));
    // a representative forced below the pairing beyond tolerance is rejected
    std::vector<double> vc{-1.0, 0.0, 1.0}, wc{-1.0, 0.0, 1.0};
    auto coarse = fitz::RepresentativeFn::fitzpatrick(fitz::MonotoneGraph::from_samples(vc, wc))
                      .with_tolerance(0.0);
    CHECK_THROWS_AS((void)f0_eval(coarse, 0.5, 0.5, grid), ConsistencyError);
}

TEST_CASE("laminate oracle closed forms") {
    auto lc = laminate_oracle(1.0, 4.0, 0.5, 2.0);
    CHECK(lc.across == doctest::Approx(1.6).epsilon(1e-15));
    CHECK(lc.along == doctest::Approx(2.5).epsilon(1e-15));
    auto same = laminate_oracle(3.0, 3.0, 0.25, 4.0);
    CHECK(same.across == doctest::Approx(3.0));
    CHECK(same.along == doctest::Approx(3.0));
    auto p4 = laminate_oracle(1.0, 16.0, 0.5, 4.0);
    CHECK(p4.across == doctest::Approx(oracle::laminate_across(1.0, 16.0, 0.5, 4.0)).epsilon(1e-15));
    CHECK(p4.across == doctest::Approx(2.9355).epsilon(1e-3));
    CHECK_THROWS_AS(laminate_oracle(0.0, 1.0, 0.5, 2.0), ConfigError);
    CHECK_THROWS_AS(laminate_oracle(1.0, 1.0, 1.5, 2.0), ConfigError);
    CHECK_THROWS_AS(laminate_oracle(1.0, 1.0, 0.5, 1.0), ConfigError);
}

TEST_CASE("tabulated law: linear effective flux, conjugacy gap, interpolants") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(1, 64);
    TabulateOptions topts;
    topts.with_f0 = true;
    auto law = tabulate_effective_law(pot, symmetric_grid(2.0, 129), symmetric_grid(2.0, 129),
                                      grid, topts);
    law.validate();
    for (std::size_t i = 0; i < law.xi.size(); ++i)
        CHECK(law.gamma0[i] == doctest::Approx(1.6 * law.xi[i]).scale(1.0).epsilon(1e-10));
    CHECK(law.conjugacy_gap <= 5e-4);
    CHECK(law.conjugacy_gap > 0.0);
    // pchip interpolation is exact on the linear gamma0 data
    for (double x : {-1.77, -0.123, 0.6, 1.99}) {
        CHECK(law.gamma0_at(x) == doctest::Approx(1.6 * x).scale(1.0).epsilon(1e-12));
        CHECK(law.gamma0_slope_at(x) == doctest::Approx(1.6).epsilon(1e-10));
    }
    CHECK(law.phi0_at(1.0) == doctest::Approx(0.8).epsilon(1e-10));
    // 1.6 sits between table nodes: pchip interpolation error ~ delta^3
    CHECK(law.psi0_at(1.6) == doctest::Approx(0.8).epsilon(1e-5));
    CHECK(law.psi0_at(1.5) == doctest::Approx(1.5 * 1.5 * 0.3125).epsilon(1e-12));
    CHECK(law.has_f0);
    for (std::size_t i = 0; i < law.xi.size(); i += 16)
        for (std::size_t j = 0; j < law.eta.size(); j += 16)
            CHECK(law.f0_at(i, j) >= law.xi[i] * law.eta[j] - 1e-8);
}

TEST_CASE("tabulation rejects bad grids and out-of-domain eta") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(1, 8);
    CHECK_THROWS_AS(
        tabulate_effective_law(pot, {0.0, 1.0, 2.0}, symmetric_grid(1.0, 5), grid, {}),
        ConfigError);
    CHECK_THROWS_AS(
        tabulate_effective_law(pot, {{-1.0, 1.0, 0.5}}, symmetric_grid(1.0, 5), grid, {}),
        ConfigError);
    // the conjugate of |v| clips beyond |eta| > 1
    CHECK_THROWS_WITH_AS(tabulate_effective_law(Potential::absolute(), symmetric_grid(1.0, 5),
                                                symmetric_grid(2.0, 5), grid, {}),
                         doctest::Contains("conjugate domain"), ConfigError);
}

TEST_CASE("effective law text round trip") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(1, 16);
    auto law = tabulate_effective_law(pot, symmetric_grid(2.0, 17), symmetric_grid(2.0, 17), grid,
                                      {});
    std::stringstream ss;
    write_effective_law(law, ss);
    auto back = read_effective_law(ss);
    CHECK(back.preset == law.preset);
    CHECK(back.p == law.p);
    CHECK(back.N == law.N);
    CHECK(back.M == law.M);
    CHECK(back.conjugacy_gap == law.conjugacy_gap);
    REQUIRE(back.xi.size() == law.xi.size());
    REQUIRE(back.eta.size() == law.eta.size());
    for (std::size_t i = 0; i < law.xi.size(); ++i) {
        CHECK(back.xi[i] == law.xi[i]);
        CHECK(back.phi0[i] == law.phi0[i]);
        CHECK(back.gamma0[i] == law.gamma0[i]);
    }
    for (std::size_t j = 0; j < law.eta.size(); ++j) {
        CHECK(back.eta[j] == law.eta[j]);
        CHECK(back.psi0[j] == law.psi0[j]);
    }
    // serialize again: byte-identical text
    std::stringstream ss2;
    write_effective_law(back, ss2);
    std::stringstream ss3;
    write_effective_law(law, ss3);
    CHECK(ss2.str() == ss3.str());
}

TEST_CASE("reading a corrupt law fails with the right error") {
    std::stringstream empty("xi, phi0, gamma0\n0, 0, 0\n");
    CHECK_THROWS_AS((void)read_effective_law(empty), ConsistencyError);  // too few rows
    std::stringstream junk("0.5, 1.0\n");
    CHECK_THROWS_AS((void)read_effective_law(junk), IoError);  // row before any block
    std::stringstream nonconvex(
        "xi, phi0, gamma0\n-1, 1, -1\n0, 1.5, 0\n1, 1, 1\neta, psi0\n-1, 1\n1, 1\n");
    CHECK_THROWS_AS((void)read_effective_law(nonconvex), ConsistencyError);
}

TEST_CASE("2D tabulation carries the tensor and dual tables") {
    auto pot = Potential::two_phase(1.0, 4.0, 0.5);
    auto grid = CellGrid::make(2, 8);
    auto law = tabulate_effective_law(pot, symmetric_grid(1.0, 9), symmetric_grid(1.0, 9), grid,
                                      {});
    CHECK(law.N == 2);
    CHECK(law.tensor[0] == doctest::Approx(1.6).epsilon(1e-8));
    CHECK(law.tensor[3] == doctest::Approx(2.5).epsilon(1e-8));
    // slice along e1: phi0 = 1.6 xi^2 / 2, psi0 = eta^2 / 3.2
    CHECK(law.phi0_at(1.0) == doctest::Approx(0.8).epsilon(1e-8));
    CHECK(law.psi0_at(1.0) == doctest::Approx(1.0 / 3.2).epsilon(1e-8));
    CHECK(law.conjugacy_gap <= 2e-2);  // 9-point grids are coarse
    std::stringstream ss;
    write_effective_law(law, ss);
    auto back = read_effective_law(ss);
    CHECK(back.tensor[0] == law.tensor[0]);
    CHECK(back.tensor[3] == law.tensor[3]);
}
