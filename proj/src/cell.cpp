#include "homoglab/cell.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace homoglab::cell {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void sort_entries(SparseField& f) {
    std::vector<std::size_t> order(f.idx.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return f.idx[a] < f.idx[b]; });
    SparseField out;
    out.idx.reserve(f.idx.size());
    out.val.reserve(f.val.size());
    for (std::size_t k : order) {
        out.idx.push_back(f.idx[k]);
        out.val.push_back(f.val[k]);
    }
    f = std::move(out);
}

}  // namespace

CellGrid CellGrid::make(int N, int M) {
    if (N != 1 && N != 2) throw ConfigError("cell grid dimension must be 1 or 2");
    if (M < 2) throw ConfigError("cell grid needs M >= 2 cells per side");
    CellGrid g;
    g.N = N;
    g.M = M;
    return g;
}

std::size_t CellGrid::cells() const {
    std::size_t m = static_cast<std::size_t>(M);
    return N == 1 ? m : m * m;
}

double CellGrid::weight() const { return 1.0 / static_cast<double>(cells()); }

WZBases build_wz_bases(const CellGrid& grid) {
    WZBases b;
    b.N = grid.N;
    b.M = grid.M;
    const int M = grid.M;
    const std::uint32_t uM = static_cast<std::uint32_t>(M);
    const double s = static_cast<double>(M);  // 1/h scaling of discrete derivatives
    if (grid.N == 1) {
        b.flux_size = static_cast<std::size_t>(M);
        // gradient of the indicator of node n: +M at midpoint n-1, -M at n
        for (std::uint32_t n = 1; n < uM; ++n) {
            SparseField f;
            f.idx = {n - 1, n};
            f.val = {s, -s};
            b.W.push_back(std::move(f));
        }
        return b;
    }
    const std::uint32_t mm = uM * uM;
    b.flux_size = 2 * static_cast<std::size_t>(mm);
    auto xe = [&](std::uint32_t i, std::uint32_t j) { return (i % uM) + uM * (j % uM); };
    auto ye = [&](std::uint32_t i, std::uint32_t j) { return mm + (i % uM) + uM * (j % uM); };
    // W: gradients of nodal indicators (node (0,0) omitted: constants drop out)
    for (std::uint32_t j = 0; j < uM; ++j)
        for (std::uint32_t i = 0; i < uM; ++i) {
            if (i == 0 && j == 0) continue;
            SparseField f;
            f.idx = {xe(i + uM - 1, j), xe(i, j), ye(i, j + uM - 1), ye(i, j)};
            f.val = {s, -s, s, -s};
            sort_entries(f);
            b.W.push_back(std::move(f));
        }
    // Z: curls of cell-centered stream indicators; divergence-free by
    // construction and exactly orthogonal to every gradient
    for (std::uint32_t j = 0; j < uM; ++j)
        for (std::uint32_t i = 0; i < uM; ++i) {
            if (i == 0 && j == 0) continue;
            SparseField f;
            f.idx = {xe(i, j), xe(i, j + 1), ye(i, j), ye(i + 1, j)};
            f.val = {s, -s, -s, s};
            sort_entries(f);
            b.Z.push_back(std::move(f));
        }
    return b;
}

double field_dot(const SparseField& a, const SparseField& b, double weight) {
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.idx.size() && j < b.idx.size()) {
        if (a.idx[i] < b.idx[j]) {
            ++i;
        } else if (a.idx[i] > b.idx[j]) {
            ++j;
        } else {
            acc += a.val[i] * b.val[j];
            ++i;
            ++j;
        }
    }
    return acc * weight;
}

namespace {

// Minimizes (1/M) sum_j F_j(xi + g_j) over zero-mean g by damped Newton with
// a single equality multiplier; slope/curv give the (smoothed) derivatives and
// value the objective used for the line search.
struct ConstrainedResult {
    std::vector<double> g;
    int iterations = 0;
    double residual = 0.0;
};

ConstrainedResult minimize_zero_mean(const std::function<double(int, double)>& value,
                                     const std::function<double(int, double)>& slope,
                                     const std::function<double(int, double)>& curv, double xi,
                                     int M, double tol, int max_iter, std::vector<double> g0) {
    const std::size_t m = static_cast<std::size_t>(M);
    std::vector<double> g = std::move(g0);
    if (g.size() != m) g.assign(m, 0.0);
    std::vector<double> f(m), H(m), d(m);
    auto objective = [&](const std::vector<double>& gg) {
        double e = 0.0;
        for (std::size_t j = 0; j < m; ++j) e += value(static_cast<int>(j), xi + gg[j]);
        return e / static_cast<double>(M);
    };
    double E = objective(g);
    int it = 0;
    double res = kInf;
    for (; it < max_iter; ++it) {
        double fmin = kInf, fmax = -kInf, fmean = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            f[j] = slope(static_cast<int>(j), xi + g[j]);
            fmin = std::min(fmin, f[j]);
            fmax = std::max(fmax, f[j]);
            fmean += f[j];
        }
        fmean /= static_cast<double>(M);
        res = (fmax - fmin) / (1.0 + std::abs(fmean));
        if (res <= tol) break;
        double hmax = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            H[j] = curv(static_cast<int>(j), xi + g[j]);
            if (!std::isfinite(H[j])) H[j] = 1e14;
            hmax = std::max(hmax, H[j]);
        }
        double floor = std::max(1e-12, 1e-10 * hmax);
        double snum = 0.0, sden = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            H[j] = std::max(H[j], floor);
            snum += f[j] / H[j];
            sden += 1.0 / H[j];
        }
        double mu = -snum / sden;
        double dd = 0.0;  // directional derivative of the objective along d
        for (std::size_t j = 0; j < m; ++j) {
            d[j] = -(f[j] + mu) / H[j];
            dd += f[j] * d[j];
        }
        dd /= static_cast<double>(M);
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 50; ++bt) {
            std::vector<double> gt(m);
            double mean = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                gt[j] = g[j] + t * d[j];
                mean += gt[j];
            }
            mean /= static_cast<double>(M);
            for (std::size_t j = 0; j < m; ++j) gt[j] -= mean;
            double Et = objective(gt);
            if (Et <= E + 1e-4 * t * dd) {
                g = std::move(gt);
                E = Et;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // line search exhausted; report the residual
    }
    if (res > tol)
        throw SolverError("cell minimization failed to converge, residual " + format_double(res));
    return {std::move(g), it, res};
}

}  // namespace

CellSolution solve_cell_primal(const convex::Potential& pot, double xi, const CellGrid& grid,
                               const CellOptions& opts) {
    if (grid.N != 1) throw ConfigError("1D primal cell solve needs an N=1 grid");
    const int M = grid.M;
    const std::size_t m = static_cast<std::size_t>(M);
    CellSolution sol;
    sol.corrector.assign(m, 0.0);
    sol.flux.assign(m, 0.0);

    if (pot.is_quadratic()) {
        // flux is constant at optimality: c / a_j sums to M xi
        double invsum = 0.0;
        for (int j = 0; j < M; ++j) invsum += 1.0 / pot.quadratic_coefficient(grid.midpoint(j));
        double c = xi * static_cast<double>(M) / invsum;
        double e = 0.0;
        for (int j = 0; j < M; ++j) {
            double a = pot.quadratic_coefficient(grid.midpoint(j));
            double sV = c / a;
            sol.corrector[static_cast<std::size_t>(j)] = sV - xi;
            sol.flux[static_cast<std::size_t>(j)] = c;
            e += a * sV * sV / 2.0;
        }
        sol.phi0 = e / static_cast<double>(M);
        sol.gamma_hat = c;
        return sol;
    }

    std::vector<double> g(m, 0.0);
    int total_it = 0;
    double res = 0.0;
    double lam = opts.lambda_init;
    const double stage_tol = std::max(opts.tol, 1e-8);
    while (true) {
        double cur = lam;
        bool last = cur <= opts.lambda_final;
        auto r = minimize_zero_mean(
            [&](int j, double s) { return pot.moreau_value(s, cur, grid.midpoint(j)); },
            [&](int j, double s) { return pot.moreau_slope(s, cur, grid.midpoint(j)); },
            [&](int j, double s) { return pot.moreau_curvature(s, cur, grid.midpoint(j)); }, xi, M,
            last ? opts.tol : stage_tol, opts.max_iter, std::move(g));
        g = std::move(r.g);
        total_it += r.iterations;
        res = r.residual;
        if (last) break;
        lam = std::max(lam / 2.0, opts.lambda_final);
    }
    double lam_sel = opts.lambda_final;
    if (pot.smooth()) {
        // polish on the raw integrand: valid only without kinks
        auto r = minimize_zero_mean(
            [&](int j, double s) { return pot.value(s, grid.midpoint(j)); },
            [&](int j, double s) { return pot.subdifferential(s, grid.midpoint(j)).lo; },
            [&](int j, double s) { return pot.curvature(s, grid.midpoint(j)); }, xi, M, opts.tol,
            opts.max_iter, std::move(g));
        g = std::move(r.g);
        total_it += r.iterations;
        res = r.residual;
        lam_sel = 0.0;
    }

    double e = 0.0, fsum = 0.0;
    for (int j = 0; j < M; ++j) {
        double s = xi + g[static_cast<std::size_t>(j)];
        double y = grid.midpoint(j);
        e += pot.value(s, y);
        double fj = lam_sel > 0.0 ? pot.moreau_slope(s, lam_sel, y) : pot.subdifferential(s, y).lo;
        sol.flux[static_cast<std::size_t>(j)] = fj;
        fsum += fj;
        sol.corrector[static_cast<std::size_t>(j)] = g[static_cast<std::size_t>(j)];
    }
    sol.phi0 = e / static_cast<double>(M);
    sol.gamma_hat = fsum / static_cast<double>(M);
    sol.iterations = total_it;
    sol.residual = res;
    return sol;
}

double solve_cell_dual(const convex::Potential& dual_pot, double eta, const CellGrid& grid) {
    if (grid.N != 1) throw ConfigError("1D dual cell solve needs an N=1 grid");
    // Z = {0} in one dimension: the infimum is the plain cell average
    double acc = 0.0;
    for (int j = 0; j < grid.M; ++j) acc += dual_pot.value(eta, grid.midpoint(j));
    return acc / static_cast<double>(grid.M);
}

namespace {

// Conjugate-gradient solve of the singular periodic systems below; the
// constant nullspace is removed by mean projection of iterates and residuals.
int cg_zero_mean(const std::function<void(const std::vector<double>&, std::vector<double>&)>& op,
                 const std::vector<double>& b, std::vector<double>& x, double tol, int max_iter) {
    const std::size_t n = b.size();
    auto project = [&](std::vector<double>& v) {
        double mean = 0.0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(n);
        for (double& e : v) e -= mean;
    };
    std::vector<double> r = b, q(n), p(n);
    project(r);
    x.assign(n, 0.0);
    double bnorm = 0.0;
    for (double e : r) bnorm += e * e;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) return 0;
    p = r;
    double rr = bnorm * bnorm;
    for (int it = 1; it <= max_iter; ++it) {
        op(p, q);
        project(q);
        double pq = 0.0;
        for (std::size_t i = 0; i < n; ++i) pq += p[i] * q[i];
        double alpha = rr / pq;
        double rr_next = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rr_next += r[i] * r[i];
        }
        if (std::sqrt(rr_next) <= tol * bnorm) {
            project(x);
            return it;
        }
        double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    throw SolverError("cell CG failed to reach tolerance " + format_double(tol) + " within " +
                      std::to_string(max_iter) + " iterations");
}

struct MacCoeff {
    int M = 0;
    std::vector<double> ax, ay;  // per x-edge / y-edge coefficient a(y1)
};

MacCoeff mac_coefficients(const convex::Potential& pot, const CellGrid& grid) {
    if (!pot.is_quadratic())
        throw ConfigError("2D cell solves support quadratic presets only");
    MacCoeff c;
    c.M = grid.M;
    const int M = grid.M;
    const std::size_t mm = static_cast<std::size_t>(M) * static_cast<std::size_t>(M);
    c.ax.resize(mm);
    c.ay.resize(mm);
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < M; ++i) {
            std::size_t e = static_cast<std::size_t>(i) + static_cast<std::size_t>(M) * j;
            c.ax[e] = pot.quadratic_coefficient((i + 0.5) / M);  // x-edge midpoint abscissa
            c.ay[e] = pot.quadratic_coefficient(static_cast<double>(i) / M);  // y-edge abscissa
        }
    return c;
}

}  // namespace

CellSolution2 solve_cell_primal_2d(const convex::Potential& pot, std::array<double, 2> xi,
                                   const CellGrid& grid, const CellOptions& opts) {
    if (grid.N != 2) throw ConfigError("2D primal cell solve needs an N=2 grid");
    MacCoeff c = mac_coefficients(pot, grid);
    const int M = grid.M;
    const std::size_t mm = static_cast<std::size_t>(M) * static_cast<std::size_t>(M);
    const double s = static_cast<double>(M);
    const double w = grid.weight();
    auto id = [&](int i, int j) {
        return static_cast<std::size_t>((i % M + M) % M) +
               static_cast<std::size_t>(M) * static_cast<std::size_t>((j % M + M) % M);
    };
    // nodal gradient of the energy at psi, without the affine offset
    auto op = [&](const std::vector<double>& psi, std::vector<double>& out) {
        for (int j = 0; j < M; ++j)
            for (int i = 0; i < M; ++i) {
                double dxr = s * (psi[id(i + 1, j)] - psi[id(i, j)]);
                double dxl = s * (psi[id(i, j)] - psi[id(i - 1, j)]);
                double dyu = s * (psi[id(i, j + 1)] - psi[id(i, j)]);
                double dyd = s * (psi[id(i, j)] - psi[id(i, j - 1)]);
                out[id(i, j)] = w * s *
                                (-c.ax[id(i, j)] * dxr + c.ax[id(i - 1, j)] * dxl -
                                 c.ay[id(i, j)] * dyu + c.ay[id(i, j - 1)] * dyd);
            }
    };
    std::vector<double> b(mm, 0.0);
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < M; ++i)
            b[id(i, j)] = -w * s *
                          (-c.ax[id(i, j)] * xi[0] + c.ax[id(i - 1, j)] * xi[0] -
                           c.ay[id(i, j)] * xi[1] + c.ay[id(i, j - 1)] * xi[1]);
    std::vector<double> psi;
    int iters = cg_zero_mean(op, b, psi, opts.cg_tol, opts.cg_max_iter);

    CellSolution2 sol;
    sol.gx.resize(mm);
    sol.gy.resize(mm);
    double e = 0.0, f1 = 0.0, f2 = 0.0;
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < M; ++i) {
            std::size_t k = id(i, j);
            sol.gx[k] = xi[0] + s * (psi[id(i + 1, j)] - psi[k]);
            sol.gy[k] = xi[1] + s * (psi[id(i, j + 1)] - psi[k]);
            e += c.ax[k] * sol.gx[k] * sol.gx[k] / 2.0 + c.ay[k] * sol.gy[k] * sol.gy[k] / 2.0;
            f1 += c.ax[k] * sol.gx[k];
            f2 += c.ay[k] * sol.gy[k];
        }
    sol.phi0 = e * w;
    sol.gamma_hat = {f1 * w, f2 * w};
    sol.iterations = iters;
    sol.residual = opts.cg_tol;
    return sol;
}

double solve_cell_dual_2d(const convex::Potential& pot, std::array<double, 2> eta,
                          const CellGrid& grid, const CellOptions& opts) {
    if (grid.N != 2) throw ConfigError("2D dual cell solve needs an N=2 grid");
    MacCoeff c = mac_coefficients(pot, grid);
    const int M = grid.M;
    const std::size_t mm = static_cast<std::size_t>(M) * static_cast<std::size_t>(M);
    const double s = static_cast<double>(M);
    const double w = grid.weight();
    auto id = [&](int i, int j) {
        return static_cast<std::size_t>((i % M + M) % M) +
               static_cast<std::size_t>(M) * static_cast<std::size_t>((j % M + M) % M);
    };
    // fields of a stream chi: zx(i,j) = M (chi(i,j) - chi(i,j-1)),
    // zy(i,j) = -M (chi(i,j) - chi(i-1,j)); energy sum z^2 / (2a)
    auto op = [&](const std::vector<double>& chi, std::vector<double>& out) {
        for (int j = 0; j < M; ++j)
            for (int i = 0; i < M; ++i) {
                double zx_here = s * (chi[id(i, j)] - chi[id(i, j - 1)]);
                double zx_up = s * (chi[id(i, j + 1)] - chi[id(i, j)]);
                double zy_here = -s * (chi[id(i, j)] - chi[id(i - 1, j)]);
                double zy_right = -s * (chi[id(i + 1, j)] - chi[id(i, j)]);
                out[id(i, j)] = w * s *
                                (zx_here / c.ax[id(i, j)] - zx_up / c.ax[id(i, j + 1)] -
                                 zy_here / c.ay[id(i, j)] + zy_right / c.ay[id(i + 1, j)]);
            }
    };
    std::vector<double> b(mm, 0.0);
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < M; ++i)
            b[id(i, j)] = -w * s *
                          (eta[0] / c.ax[id(i, j)] - eta[0] / c.ax[id(i, j + 1)] -
                           eta[1] / c.ay[id(i, j)] + eta[1] / c.ay[id(i + 1, j)]);
    std::vector<double> chi;
    cg_zero_mean(op, b, chi, opts.cg_tol, opts.cg_max_iter);
    double e = 0.0;
    for (int j = 0; j < M; ++j)
        for (int i = 0; i < M; ++i) {
            double zx = eta[0] + s * (chi[id(i, j)] - chi[id(i, j - 1)]);
            double zy = eta[1] - s * (chi[id(i, j)] - chi[id(i - 1, j)]);
            e += zx * zx / (2.0 * c.ax[id(i, j)]) + zy * zy / (2.0 * c.ay[id(i, j)]);
        }
    return e * w;
}

std::array<double, 4> effective_tensor(const convex::Potential& pot, const CellGrid& grid,
                                       const CellOptions& opts) {
    auto c0 = solve_cell_primal_2d(pot, {1.0, 0.0}, grid, opts);
    auto c1 = solve_cell_primal_2d(pot, {0.0, 1.0}, grid, opts);
    return {c0.gamma_hat[0], c1.gamma_hat[0], c0.gamma_hat[1], c1.gamma_hat[1]};
}

double f0_eval(const fitz::RepresentativeFn& rep, double xi, double eta, const CellGrid& grid,
               const CellOptions& opts) {
    if (grid.N != 1) throw ConfigError("F0 evaluation supports N=1 grids");
    double val = 0.0;
    if (rep.kind() == fitz::RepKind::FenchelPair) {
        // the Fenchel integrand separates: primal cell solve plus the exact
        // dual cell average
        const convex::Potential& pot = rep.potential();
        CellSolution prim = solve_cell_primal(pot, xi, grid, opts);
        double dual = 0.0;
        for (int j = 0; j < grid.M; ++j) {
            convex::Checked cj = pot.conjugate_value(eta, grid.midpoint(j));
            if (cj.clipped) return kInf;  // eta outside the dual domain
            dual += cj.value;
        }
        val = prim.phi0 + dual / static_cast<double>(grid.M);
    } else {
        // graph representatives carry no microstructure; the integrand is
        // y-independent and convex, so zero correctors are optimal
        convex::Checked v = rep.value(xi, eta);
        if (v.clipped) return kInf;
        val = v.value;
    }
    double slack = 1e-8 * (1.0 + std::abs(xi * eta)) + rep.tolerance();
    if (val < xi * eta - slack)
        throw ConsistencyError("F0(" + format_double(xi) + ", " + format_double(eta) +
                               ") = " + format_double(val) + " falls below the pairing");
    return val;
}

LaminateCoefficients laminate_oracle(double a1, double a2, double theta, double p) {
    if (!(a1 > 0.0) || !(a2 > 0.0)) throw ConfigError("laminate coefficients must be > 0");
    if (!(theta > 0.0) || !(theta < 1.0)) throw ConfigError("laminate fraction must lie in (0,1)");
    if (!(p > 1.0)) throw ConfigError("laminate exponent must be > 1");
    double e = 1.0 / (p - 1.0);
    LaminateCoefficients lc;
    lc.across = std::pow(theta * std::pow(a1, -e) + (1.0 - theta) * std::pow(a2, -e), -(p - 1.0));
    lc.along = theta * a1 + (1.0 - theta) * a2;
    return lc;
}

namespace {

void check_symmetric_grid(const std::vector<double>& g, const char* name) {
    if (g.size() < 2) throw ConfigError(std::string(name) + " grid needs >= 2 nodes");
    for (std::size_t i = 0; i + 1 < g.size(); ++i)
        if (!(g[i] < g[i + 1]))
            throw ConfigError(std::string(name) + " grid must strictly increase");
    double span = g.back() - g.front();
    if (std::abs(g.front() + g.back()) > 1e-12 * span)
        throw ConfigError(std::string(name) + " grid must be symmetric about 0");
}

}  // namespace

EffectiveLaw tabulate_effective_law(const convex::Potential& pot, std::vector<double> xi_grid,
                                    std::vector<double> eta_grid, const CellGrid& grid,
                                    const TabulateOptions& opts) {
    check_symmetric_grid(xi_grid, "xi");
    check_symmetric_grid(eta_grid, "eta");
    EffectiveLaw law;
    law.preset = pot.describe();
    law.p = pot.growth_exponent();
    law.N = grid.N;
    law.M = grid.M;
    law.tol = opts.cell.tol;
    law.xi = std::move(xi_grid);
    law.eta = std::move(eta_grid);
    law.phi0.reserve(law.xi.size());
    law.gamma0.reserve(law.xi.size());
    law.psi0.reserve(law.eta.size());

    if (grid.N == 1) {
        for (double x : law.xi) {
            CellSolution sol;
            try {
                sol = solve_cell_primal(pot, x, grid, opts.cell);
            } catch (const SolverError& e) {
                throw SolverError("cell solve failed at xi = " + format_double(x) + ": " +
                                  e.what());
            }
            // the zero corrector is a competitor, so phi0 never exceeds the
            // plain cell average
            double plain = 0.0;
            for (int j = 0; j < grid.M; ++j) plain += pot.value(x, grid.midpoint(j));
            plain /= static_cast<double>(grid.M);
            if (sol.phi0 > plain + 1e-9 * (1.0 + std::abs(plain)))
                throw ConsistencyError("phi0(" + format_double(x) +
                                       ") exceeds the uncorrected average");
            law.phi0.push_back(sol.phi0);
            law.gamma0.push_back(sol.gamma_hat);
        }
        for (double e : law.eta) {
            double acc = 0.0;
            for (int j = 0; j < grid.M; ++j) {
                convex::Checked cj = pot.conjugate_value(e, grid.midpoint(j));
                if (cj.clipped)
                    throw ConfigError("eta grid leaves the conjugate domain at eta = " +
                                      format_double(e));
                acc += cj.value;
            }
            law.psi0.push_back(acc / static_cast<double>(grid.M));
        }
    } else {
        law.tensor = effective_tensor(pot, grid, opts.cell);
        for (double x : law.xi) {
            CellSolution2 sol = solve_cell_primal_2d(pot, {x, 0.0}, grid, opts.cell);
            law.phi0.push_back(sol.phi0);
            law.gamma0.push_back(sol.gamma_hat[0]);
        }
        for (double e : law.eta)
            law.psi0.push_back(solve_cell_dual_2d(pot, {e, 0.0}, grid, opts.cell));
    }

    // conjugacy of the tables: psi0 against the discrete transform of phi0
    convex::Potential phi0_pot;
    try {
        phi0_pot = convex::Potential::from_samples(law.xi, law.phi0);
    } catch (const ConfigError& e) {
        throw ConsistencyError(std::string("phi0 table rejected: ") + e.what());
    }
    convex::Potential conj = convex::conjugate(phi0_pot, law.eta);
    double gap = 0.0;
    for (std::size_t j = 0; j < law.eta.size(); ++j)
        if (!conj.node_clipped(j)) gap = std::max(gap, std::abs(conj.values()[j] - law.psi0[j]));
    law.conjugacy_gap = gap;

    for (std::size_t i = 0; i + 1 < law.xi.size(); ++i)
        if (law.gamma0[i + 1] < law.gamma0[i] - 1e-10 * (1.0 + std::abs(law.gamma0[i])))
            throw ConsistencyError("gamma0 table is not monotone at xi = " +
                                   format_double(law.xi[i + 1]));

    if (opts.with_f0) {
        if (grid.N != 1) throw ConfigError("the F0 table is available for N=1 only");
        // Fenchel separation: F0 = phi0 + psi0 entry by entry
        law.f0.resize(law.xi.size() * law.eta.size());
        for (std::size_t i = 0; i < law.xi.size(); ++i)
            for (std::size_t j = 0; j < law.eta.size(); ++j) {
                double v = law.phi0[i] + law.psi0[j];
                double pairing = law.xi[i] * law.eta[j];
                if (v < pairing - 1e-8 * (1.0 + std::abs(pairing)))
                    throw ConsistencyError("F0 table falls below the pairing at (" +
                                           format_double(law.xi[i]) + ", " +
                                           format_double(law.eta[j]) + ")");
                law.f0[i * law.eta.size() + j] = v;
            }
        law.has_f0 = true;
    }
    return law;
}

double EffectiveLaw::phi0_at(double x) const {
    if (!phi0_interp_) phi0_interp_.emplace(xi, phi0);
    return phi0_interp_->value(x);
}

double EffectiveLaw::gamma0_at(double x) const {
    if (!gamma0_interp_) gamma0_interp_.emplace(xi, gamma0);
    return gamma0_interp_->value(x);
}

double EffectiveLaw::gamma0_slope_at(double x) const {
    if (!gamma0_interp_) gamma0_interp_.emplace(xi, gamma0);
    return gamma0_interp_->derivative(x);
}

double EffectiveLaw::psi0_at(double e) const {
    if (!psi0_interp_) psi0_interp_.emplace(eta, psi0);
    return psi0_interp_->value(e);
}

double EffectiveLaw::f0_at(std::size_t i, std::size_t j) const {
    if (!has_f0) throw SolverError("this law carries no F0 table");
    return f0[i * eta.size() + j];
}

void EffectiveLaw::validate() const {
    if (xi.size() < 2 || xi.size() != phi0.size() || xi.size() != gamma0.size())
        throw ConsistencyError("effective law xi tables have mismatched sizes");
    if (eta.size() < 2 || eta.size() != psi0.size())
        throw ConsistencyError("effective law eta tables have mismatched sizes");
    try {
        (void)convex::Potential::from_samples(xi, phi0);
    } catch (const ConfigError& e) {
        throw ConsistencyError(std::string("phi0 table rejected: ") + e.what());
    }
    for (std::size_t i = 0; i + 1 < xi.size(); ++i)
        if (gamma0[i + 1] < gamma0[i] - 1e-10 * (1.0 + std::abs(gamma0[i])))
            throw ConsistencyError("gamma0 table is not monotone");
    if (has_f0) {
        if (f0.size() != xi.size() * eta.size())
            throw ConsistencyError("F0 table has the wrong shape");
        for (std::size_t i = 0; i < xi.size(); ++i)
            for (std::size_t j = 0; j < eta.size(); ++j) {
                double pairing = xi[i] * eta[j];
                if (f0[i * eta.size() + j] < pairing - 1e-8 * (1.0 + std::abs(pairing)))
                    throw ConsistencyError("F0 table falls below the pairing");
            }
    }
}

void write_effective_law(const EffectiveLaw& law, std::ostream& os) {
    os << "# effective-law\n";
    os << "# preset = " << law.preset << "\n";
    os << "# p = " << format_double(law.p) << "\n";
    os << "# N = " << law.N << "\n";
    os << "# M = " << law.M << "\n";
    os << "# tol = " << format_double(law.tol) << "\n";
    os << "# conjugacy_gap = " << format_double(law.conjugacy_gap) << "\n";
    if (law.N == 2)
        os << "# tensor = " << format_double(law.tensor[0]) << ", " << format_double(law.tensor[1])
           << ", " << format_double(law.tensor[2]) << ", " << format_double(law.tensor[3]) << "\n";
    os << "xi, phi0, gamma0\n";
    for (std::size_t i = 0; i < law.xi.size(); ++i)
        os << format_double(law.xi[i]) << ", " << format_double(law.phi0[i]) << ", "
           << format_double(law.gamma0[i]) << "\n";
    os << "eta, psi0\n";
    for (std::size_t j = 0; j < law.eta.size(); ++j)
        os << format_double(law.eta[j]) << ", " << format_double(law.psi0[j]) << "\n";
}

EffectiveLaw read_effective_law(std::istream& is) {
    EffectiveLaw law;
    std::string line;
    int lineno = 0;
    int block = 0;  // 0: expect headers/meta, 1: xi block, 2: eta block
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            std::string val = line.substr(eq + 1);
            auto trim = [](std::string& t) {
                while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.erase(t.begin());
                while (!t.empty() && (t.back() == ' ' || t.back() == '\t' || t.back() == '\r'))
                    t.pop_back();
            };
            trim(key);
            trim(val);
            if (key == "preset") law.preset = val;
            else if (key == "p") law.p = parse_double(val);
            else if (key == "N") law.N = static_cast<int>(parse_double(val));
            else if (key == "M") law.M = static_cast<int>(parse_double(val));
            else if (key == "tol") law.tol = parse_double(val);
            else if (key == "conjugacy_gap") law.conjugacy_gap = parse_double(val);
            else if (key == "tensor") {
                auto f = split_csv_line(val);
                if (f.size() != 4)
                    throw IoError("effective law line " + std::to_string(lineno) +
                                  ": tensor needs 4 entries");
                for (std::size_t k = 0; k < 4; ++k) law.tensor[k] = parse_double(f[k]);
            }
            continue;
        }
        auto fields = split_csv_line(line);
        if (!fields.empty() && fields[0] == "xi") {
            block = 1;
            continue;
        }
        if (!fields.empty() && fields[0] == "eta") {
            block = 2;
            continue;
        }
        if (block == 1) {
            if (fields.size() != 3)
                throw IoError("effective law line " + std::to_string(lineno) +
                              " needs 3 fields in the xi block");
            law.xi.push_back(parse_double(fields[0]));
            law.phi0.push_back(parse_double(fields[1]));
            law.gamma0.push_back(parse_double(fields[2]));
        } else if (block == 2) {
            if (fields.size() != 2)
                throw IoError("effective law line " + std::to_string(lineno) +
                              " needs 2 fields in the eta block");
            law.eta.push_back(parse_double(fields[0]));
            law.psi0.push_back(parse_double(fields[1]));
        } else {
            throw IoError("effective law line " + std::to_string(lineno) +
                          " appears before any block header");
        }
    }
    law.validate();
    return law;
}

}  // namespace homoglab::cell
