#include "homoglab/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "homoglab/common.hpp"

namespace homoglab::evolve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

double frac(double x) { return x - std::floor(x); }

}  // namespace

SourceSpec SourceSpec::zero() { return {}; }

SourceSpec SourceSpec::cosine(double amp, double freq, double decay, double ymod) {
    SourceSpec s;
    s.kind = Kind::Cosine;
    s.amp = amp;
    s.freq = freq;
    s.decay = decay;
    s.ymod = ymod;
    return s;
}

double SourceSpec::value(double x, double t, double y) const {
    if (kind == Kind::Zero) return 0.0;
    return amp * std::cos(freq * kPi * x) * std::exp(-decay * t) *
           (1.0 + ymod * std::cos(2.0 * kPi * y));
}

double SourceSpec::mean_value(double x, double t) const {
    if (kind == Kind::Zero) return 0.0;
    return amp * std::cos(freq * kPi * x) * std::exp(-decay * t);
}

std::string SourceSpec::describe() const {
    if (kind == Kind::Zero) return "zero";
    std::string s = "cosine(" + format_double(amp) + ", " + format_double(freq) + ", " +
                    format_double(decay);
    if (ymod != 0.0) s += ", " + format_double(ymod);
    return s + ")";
}

InitialSpec InitialSpec::zero() { return {}; }

InitialSpec InitialSpec::sine(double amp, double freq, double ymod) {
    InitialSpec s;
    s.kind = Kind::Sine;
    s.amp = amp;
    s.freq = freq;
    s.ymod = ymod;
    return s;
}

double InitialSpec::value(double x, double y) const {
    if (kind == Kind::Zero) return 0.0;
    return amp * std::sin(freq * kPi * x) * (1.0 + ymod * std::cos(2.0 * kPi * y));
}

double InitialSpec::mean_value(double x) const {
    if (kind == Kind::Zero) return 0.0;
    return amp * std::sin(freq * kPi * x);
}

std::string InitialSpec::describe() const {
    if (kind == Kind::Zero) return "zero";
    std::string s = "sine(" + format_double(amp) + ", " + format_double(freq);
    if (ymod != 0.0) s += ", " + format_double(ymod);
    return s + ")";
}

namespace {

// The evolution needs quadratic growth on both potentials: positive curvature
// away from kinks and p = 2 tails.
void check_quadratic_growth(const convex::Potential& pot, const char* name) {
    if (pot.growth_exponent() != 2.0)
        throw ConfigError(std::string(name) + " must have quadratic growth for the evolution");
    if (!pot.quadratic_growth_constants())
        throw ConfigError(std::string(name) + " must be an analytic quadratic-growth preset");
    double cmin = kInf;
    for (int i = 0; i < 16; ++i) cmin = std::min(cmin, pot.curvature(0.75, (i + 0.5) / 16.0));
    if (!(cmin > 0.0))
        throw ConfigError(std::string(name) + " must be uniformly convex (positive curvature)");
}

}  // namespace

void ProblemData::validate() const {
    if (!(T > 0.0)) throw ConfigError("final time must be positive");
    if (m < 1) throw ConfigError("time step count must be at least 1");
    if (J < 2) throw ConfigError("mesh needs at least 2 elements");
    if (mode == Mode::Eps) {
        if (!(eps > 0.0)) throw ConfigError("period must be positive");
        double R = eps * J;
        if (std::abs(R - std::round(R)) > 1e-9 * J || std::round(R) < 16.0)
            throw ConfigError(
                "mesh must resolve each period by an integer number of elements, at least 16");
        check_quadratic_growth(phi, "phi");
        check_quadratic_growth(jflux, "flux potential");
    } else {
        if (law == nullptr) throw ConfigError("homogenized mode needs an effective law");
        if (law->N != 1) throw ConfigError("the evolution is one-dimensional");
        check_quadratic_growth(phi.y_average(), "phi");
    }
}

namespace {

struct StepContext {
    const ProblemData* d = nullptr;
    int J = 0;
    double h = 0.0, k = 0.0;
    bool hom = false;
    bool fast = false;    // quadratic presets, one direct solve per step
    bool polish = false;  // smooth presets admit a final unsmoothed stage
    convex::Potential alpha;  // phi, y-averaged in homogenized mode
    std::vector<double> ynode, ymid;
    std::vector<double> aq;   // fast path: flux coefficient per element
    std::vector<double> alq;  // fast path: alpha coefficient per node
};

StepContext build_context(const ProblemData& d) {
    StepContext c;
    c.d = &d;
    c.J = d.J;
    c.h = d.hmesh();
    c.k = d.kstep();
    c.hom = d.mode == ProblemData::Mode::Homogenized;
    c.alpha = c.hom ? d.phi.y_average() : d.phi;
    c.ynode.resize(static_cast<std::size_t>(d.J) + 1, 0.0);
    c.ymid.resize(static_cast<std::size_t>(d.J), 0.0);
    if (!c.hom) {
        for (int j = 0; j <= d.J; ++j)
            c.ynode[static_cast<std::size_t>(j)] = frac(j * c.h / d.eps);
        for (int e = 0; e < d.J; ++e)
            c.ymid[static_cast<std::size_t>(e)] = frac((e + 0.5) * c.h / d.eps);
        c.fast = d.phi.is_quadratic() && d.jflux.is_quadratic();
        c.polish = d.phi.smooth() && d.jflux.smooth();
        if (c.fast) {
            c.aq.resize(static_cast<std::size_t>(d.J));
            c.alq.resize(static_cast<std::size_t>(d.J) + 1);
            for (int e = 0; e < d.J; ++e)
                c.aq[static_cast<std::size_t>(e)] =
                    d.jflux.quadratic_coefficient(c.ymid[static_cast<std::size_t>(e)]);
            for (int j = 0; j <= d.J; ++j)
                c.alq[static_cast<std::size_t>(j)] =
                    d.phi.quadratic_coefficient(c.ynode[static_cast<std::size_t>(j)]);
        }
    }
    return c;
}

double alpha_value(const StepContext& c, double v, int j, double lam) {
    if (c.hom) return c.alpha.value(v);
    if (lam > 0.0) return c.d->phi.moreau_value(v, lam, c.ynode[static_cast<std::size_t>(j)]);
    return c.d->phi.value(v, c.ynode[static_cast<std::size_t>(j)]);
}

double alpha_slope(const StepContext& c, double v, int j, double lam) {
    if (c.hom) return c.alpha.subdifferential(v).lo;
    if (lam > 0.0) return c.d->phi.moreau_slope(v, lam, c.ynode[static_cast<std::size_t>(j)]);
    return c.d->phi.subdifferential(v, c.ynode[static_cast<std::size_t>(j)]).lo;
}

double alpha_curv(const StepContext& c, double v, int j, double lam) {
    if (c.hom) return c.alpha.curvature(v);
    if (lam > 0.0) return c.d->phi.moreau_curvature(v, lam, c.ynode[static_cast<std::size_t>(j)]);
    return c.d->phi.curvature(v, c.ynode[static_cast<std::size_t>(j)]);
}

double flux_value(const StepContext& c, double xi, int e, double lam) {
    if (c.hom) return c.d->law->phi0_at(xi);
    if (lam > 0.0) return c.d->jflux.moreau_value(xi, lam, c.ymid[static_cast<std::size_t>(e)]);
    return c.d->jflux.value(xi, c.ymid[static_cast<std::size_t>(e)]);
}

double flux_slope(const StepContext& c, double xi, int e, double lam) {
    if (c.hom) return c.d->law->gamma0_at(xi);
    if (lam > 0.0) return c.d->jflux.moreau_slope(xi, lam, c.ymid[static_cast<std::size_t>(e)]);
    return c.d->jflux.subdifferential(xi, c.ymid[static_cast<std::size_t>(e)]).lo;
}

double flux_curv(const StepContext& c, double xi, int e, double lam) {
    if (c.hom) return std::max(0.0, c.d->law->gamma0_slope_at(xi));
    if (lam > 0.0)
        return c.d->jflux.moreau_curvature(xi, lam, c.ymid[static_cast<std::size_t>(e)]);
    return c.d->jflux.curvature(xi, c.ymid[static_cast<std::size_t>(e)]);
}

// Step functional at smoothing lambda; boundary terms are constants and are
// dropped. Table-range escapes count as infinite energy.
double smoothed_energy(const StepContext& c, const std::vector<double>& u,
                       const std::vector<double>& wprev, const std::vector<double>& S,
                       double lam) {
    try {
        double E = 0.0;
        for (int j = 1; j < c.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            E += c.h * (alpha_value(c, u[sj], j, lam) - wprev[sj] * u[sj]);
        }
        for (int e = 0; e < c.J; ++e) {
            std::size_t se = static_cast<std::size_t>(e);
            double du = (u[se + 1] - u[se]) / c.h;
            E += c.k * c.h * (flux_value(c, du, e, lam) + S[se] * du);
        }
        return E;
    } catch (const SolverError&) {
        return kInf;
    }
}

void smoothed_gradient(const StepContext& c, const std::vector<double>& u,
                       const std::vector<double>& wprev, const std::vector<double>& S, double lam,
                       std::vector<double>& zs, std::vector<double>& g) {
    for (int e = 0; e < c.J; ++e) {
        std::size_t se = static_cast<std::size_t>(e);
        double du = (u[se + 1] - u[se]) / c.h;
        zs[se] = flux_slope(c, du, e, lam) + S[se];
    }
    for (int j = 1; j < c.J; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        g[sj - 1] = c.h * (alpha_slope(c, u[sj], j, lam) - wprev[sj]) - c.k * (zs[sj] - zs[sj - 1]);
    }
}

void thomas_solve(std::vector<double>& lower, std::vector<double>& diag,
                  std::vector<double>& upper, std::vector<double>& rhs) {
    std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        double w = lower[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

int newton_stage(const StepContext& c, std::vector<double>& u, const std::vector<double>& wprev,
                 const std::vector<double>& S, double lam, double tol_abs,
                 std::vector<double>& history, double* grad_out) {
    std::size_t n = static_cast<std::size_t>(c.J) - 1;
    std::vector<double> zs(static_cast<std::size_t>(c.J)), g(n), lower(n - 1 + 1), diag(n),
        upper(n - 1 + 1), d(n);
    std::vector<double> trial(u.size());
    double E = smoothed_energy(c, u, wprev, S, lam);
    if (!std::isfinite(E))
        throw SolverError("step minimization started outside the admissible range");
    int it = 0;
    double dmax = 0.0;
    for (; it <= c.d->opts.max_iter; ++it) {
        smoothed_gradient(c, u, wprev, S, lam, zs, g);
        double gn = 0.0;
        for (double v : g) gn = std::max(gn, std::abs(v));
        history.push_back(gn);
        if (grad_out) *grad_out = gn;
        if (gn <= tol_abs) return it;
        dmax = 0.0;
        for (int j = 1; j < c.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            double du_l = (u[sj] - u[sj - 1]) / c.h;
            double du_r = (u[sj + 1] - u[sj]) / c.h;
            double fl = flux_curv(c, du_l, j - 1, lam);
            double fr = flux_curv(c, du_r, j, lam);
            diag[sj - 1] = c.h * alpha_curv(c, u[sj], j, lam) + (c.k / c.h) * (fl + fr);
            if (sj - 1 + 1 < n) upper[sj - 1] = -(c.k / c.h) * fr;
            if (sj - 1 > 0) lower[sj - 2] = -(c.k / c.h) * fl;
            dmax = std::max(dmax, diag[sj - 1]);
        }
        double floor = std::max(1e-12, 1e-10 * dmax);
        for (auto& v : diag) v = std::max(v, floor);
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        std::vector<double> lo = lower, di = diag, up = upper;
        thomas_solve(lo, di, up, d);
        double dd = 0.0;
        for (std::size_t i = 0; i < n; ++i) dd += g[i] * d[i];
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            trial = u;
            for (std::size_t i = 0; i < n; ++i) trial[i + 1] = u[i + 1] + t * d[i];
            double Et = smoothed_energy(c, trial, wprev, S, lam);
            if (Et <= E + 1e-4 * t * dd) {
                u = trial;
                E = Et;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    // Once the Newton model decrease gn^2 / dmax falls below the roundoff of
    // an energy comparison, eps * |E|, the line search can no longer certify
    // any descent step. A stall at or below that gradient level is convergence
    // to working precision, not failure.
    smoothed_gradient(c, u, wprev, S, lam, zs, g);
    double gn = 0.0;
    for (double v : g) gn = std::max(gn, std::abs(v));
    if (grad_out) *grad_out = gn;
    double eps = std::numeric_limits<double>::epsilon();
    double stall = std::sqrt(64.0 * eps * (1.0 + std::abs(E)) * std::max(dmax, c.h));
    if (gn <= stall) return it;
    std::string hist;
    for (std::size_t i = history.size() > 8 ? history.size() - 8 : 0; i < history.size(); ++i)
        hist += " " + format_double(history[i]);
    throw SolverError("step minimization failed to converge, gradient history:" + hist);
}

double flux_select(const StepContext& c, double du, int e) {
    if (c.hom) return c.d->law->gamma0_at(du);
    if (c.fast) return c.aq[static_cast<std::size_t>(e)] * du;
    if (c.polish) return c.d->jflux.subdifferential(du, c.ymid[static_cast<std::size_t>(e)]).lo;
    return c.d->jflux.moreau_slope(du, c.d->opts.lambda_final,
                                   c.ymid[static_cast<std::size_t>(e)]);
}

convex::Interval alpha_interval(const StepContext& c, double v, int j) {
    if (c.hom) return c.alpha.subdifferential(v);
    return c.d->phi.subdifferential(v, c.ynode[static_cast<std::size_t>(j)]);
}

StepState step_impl(const StepContext& c, const std::vector<double>& wprev,
                    const std::vector<double>& uguess, int n) {
    if (wprev.size() != static_cast<std::size_t>(c.J) + 1 || uguess.size() != wprev.size())
        throw ConfigError("step fields must carry one value per mesh node");
    if (n < 1 || n > c.d->m) throw ConfigError("step index out of range");
    double t = n * c.k;
    std::vector<double> S(static_cast<std::size_t>(c.J));
    for (int e = 0; e < c.J; ++e) {
        double xm = (e + 0.5) * c.h;
        S[static_cast<std::size_t>(e)] = c.hom
                                             ? c.d->source.mean_value(xm, t)
                                             : c.d->source.value(xm, t,
                                                                 c.ymid[static_cast<std::size_t>(e)]);
    }
    StepState st;
    st.u.assign(wprev.size(), 0.0);
    double wmax = 0.0, smax = 0.0;
    for (double v : wprev) wmax = std::max(wmax, std::abs(v));
    for (double v : S) smax = std::max(smax, std::abs(v));
    double tol_abs = c.d->opts.newton_tol * c.h * (1.0 + wmax + c.k * smax);
    std::vector<double> history;
    if (c.fast) {
        std::size_t nn = static_cast<std::size_t>(c.J) - 1;
        std::vector<double> lower(nn), diag(nn), upper(nn), rhs(nn);
        for (int j = 1; j < c.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            double al = c.aq[sj - 1], ar = c.aq[sj];
            diag[sj - 1] = c.h * c.alq[sj] + (c.k / c.h) * (al + ar);
            if (sj < nn) upper[sj - 1] = -(c.k / c.h) * ar;
            if (sj - 1 > 0) lower[sj - 2] = -(c.k / c.h) * al;
            rhs[sj - 1] = c.h * wprev[sj] + c.k * (S[sj] - S[sj - 1]);
        }
        thomas_solve(lower, diag, upper, rhs);
        for (std::size_t i = 0; i < nn; ++i) st.u[i + 1] = rhs[i];
        std::vector<double> zs(static_cast<std::size_t>(c.J)), g(nn);
        smoothed_gradient(c, st.u, wprev, S, 0.0, zs, g);
        for (double v : g) st.diag.grad_norm = std::max(st.diag.grad_norm, std::abs(v));
        st.diag.iterations = 1;
    } else {
        st.u = uguess;
        st.u.front() = 0.0;
        st.u.back() = 0.0;
        if (c.hom) {
            st.diag.iterations = newton_stage(c, st.u, wprev, S, 0.0, tol_abs, history,
                                              &st.diag.grad_norm);
        } else {
            double lam = c.d->opts.lambda_init;
            while (true) {
                bool last = lam <= c.d->opts.lambda_final * (1.0 + 1e-12);
                double tol = last && !c.polish ? tol_abs : tol_abs * 1e3;
                st.diag.iterations += newton_stage(c, st.u, wprev, S, lam, tol, history,
                                                   &st.diag.grad_norm);
                if (last) break;
                lam = std::max(lam * c.d->opts.lambda_factor, c.d->opts.lambda_final);
            }
            if (c.polish)
                st.diag.iterations += newton_stage(c, st.u, wprev, S, 0.0, tol_abs, history,
                                                   &st.diag.grad_norm);
        }
    }
    // flux selection, dual recovery, subdifferential projection
    st.z.resize(static_cast<std::size_t>(c.J));
    for (int e = 0; e < c.J; ++e) {
        std::size_t se = static_cast<std::size_t>(e);
        st.z[se] = flux_select(c, (st.u[se + 1] - st.u[se]) / c.h, e);
    }
    st.w.assign(wprev.size(), 0.0);
    // The smoothed minimizer resolves a node sitting at a kink of phi only to
    // within the prox window |u| <= lambda |dphi|, so the recovery interval is
    // the subdifferential hull over that halo. Exact paths need no halo.
    double halo = (c.fast || c.polish || c.hom)
                      ? 0.0
                      : c.d->opts.lambda_final * (1.0 + wmax + smax);
    double resid = 0.0;
    for (int j = 1; j < c.J; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        double recovered =
            wprev[sj] + (c.k / c.h) * ((st.z[sj] + S[sj]) - (st.z[sj - 1] + S[sj - 1]));
        auto I = alpha_interval(c, st.u[sj], j);
        if (halo > 0.0) {
            I.lo = alpha_interval(c, st.u[sj] - halo, j).lo;
            I.hi = alpha_interval(c, st.u[sj] + halo, j).hi;
        }
        st.w[sj] = I.project(recovered);
        resid = std::max(resid, I.distance(recovered));
    }
    st.w.front() = alpha_interval(c, 0.0, 0).project(wprev.front());
    st.w.back() = alpha_interval(c, 0.0, c.J).project(wprev.back());
    st.diag.inclusion_residual = resid;
    if (resid > c.d->opts.inclusion_tol * (1.0 + wmax))
        throw SolverError("step rejected: recovered dual variable leaves the subdifferential by " +
                          format_double(resid));
    return st;
}

double invert_subdifferential(const convex::Potential& pot, double w, double y) {
    if (pot.is_quadratic()) return w / pot.quadratic_coefficient(y);
    double lo = -1.0, hi = 1.0;
    int guard = 0;
    while (pot.subdifferential(hi, y).hi < w && guard++ < 80) hi = 2.0 * hi + 1.0;
    while (pot.subdifferential(lo, y).lo > w && guard++ < 160) lo = 2.0 * lo - 1.0;
    if (guard >= 160) throw SolverError("initial datum lies outside the range of the potential");
    for (int it = 0; it < 160; ++it) {
        double mid = 0.5 * (lo + hi);
        auto I = pot.subdifferential(mid, y);
        if (I.contains(w)) return mid;
        if (w < I.lo)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

StepState step(const ProblemData& data, const std::vector<double>& wprev,
               const std::vector<double>& uguess, int n) {
    data.validate();
    auto c = build_context(data);
    return step_impl(c, wprev, uguess, n);
}

double step_energy(const ProblemData& data, const std::vector<double>& wprev,
                   const std::vector<double>& u, int n) {
    data.validate();
    auto c = build_context(data);
    if (wprev.size() != u.size() || u.size() != static_cast<std::size_t>(c.J) + 1)
        throw ConfigError("step fields must carry one value per mesh node");
    double t = n * c.k;
    std::vector<double> S(static_cast<std::size_t>(c.J));
    for (int e = 0; e < c.J; ++e) {
        double xm = (e + 0.5) * c.h;
        S[static_cast<std::size_t>(e)] = c.hom
                                             ? data.source.mean_value(xm, t)
                                             : data.source.value(xm, t,
                                                                 c.ymid[static_cast<std::size_t>(e)]);
    }
    double E = 0.0;
    for (int j = 1; j < c.J; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        E += c.h * (alpha_value(c, u[sj], j, 0.0) - wprev[sj] * u[sj]);
    }
    for (int e = 0; e < c.J; ++e) {
        std::size_t se = static_cast<std::size_t>(e);
        double du = (u[se + 1] - u[se]) / c.h;
        E += c.k * c.h * (flux_value(c, du, e, 0.0) + S[se] * du);
    }
    return E;
}

Trajectory solve_parabolic(const ProblemData& data) {
    data.validate();
    auto c = build_context(data);
    Trajectory traj;
    traj.T = data.T;
    traj.m = data.m;
    traj.J = data.J;
    std::size_t nodes = static_cast<std::size_t>(data.J) + 1;
    traj.u.assign(static_cast<std::size_t>(data.m) + 1, std::vector<double>(nodes, 0.0));
    traj.w = traj.u;
    traj.z.assign(static_cast<std::size_t>(data.m) + 1,
                  std::vector<double>(static_cast<std::size_t>(data.J), 0.0));
    for (int j = 0; j <= data.J; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        double x = j * c.h;
        traj.w[0][sj] = c.hom ? data.initial.mean_value(x) : data.initial.value(x, c.ynode[sj]);
    }
    for (int j = 1; j < data.J; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        traj.u[0][sj] = c.fast ? traj.w[0][sj] / c.alq[sj]
                               : invert_subdifferential(c.hom ? c.alpha : data.phi, traj.w[0][sj],
                                                        c.ynode[sj]);
    }
    for (int e = 0; e < data.J; ++e) {
        std::size_t se = static_cast<std::size_t>(e);
        traj.z[0][se] = flux_select(c, (traj.u[0][se + 1] - traj.u[0][se]) / c.h, e);
    }
    for (int n = 1; n <= data.m; ++n) {
        auto st = step_impl(c, traj.w[static_cast<std::size_t>(n) - 1],
                            traj.u[static_cast<std::size_t>(n) - 1], n);
        traj.u[static_cast<std::size_t>(n)] = std::move(st.u);
        traj.w[static_cast<std::size_t>(n)] = std::move(st.w);
        traj.z[static_cast<std::size_t>(n)] = std::move(st.z);
        traj.diag.push_back(st.diag);
    }
    return traj;
}

namespace {

void check_match(const Trajectory& traj, const ProblemData& data) {
    if (traj.m != data.m || traj.J != data.J || std::abs(traj.T - data.T) > 1e-12 * (1.0 + data.T))
        throw ConfigError("trajectory shape does not match the problem data");
    if (traj.u.size() != static_cast<std::size_t>(traj.m) + 1 || traj.w.size() != traj.u.size() ||
        traj.z.size() != traj.u.size())
        throw ConfigError("trajectory is missing time levels");
}

CertificateReport certificate_impl(const Trajectory& traj, const ProblemData& data,
                                   const fitz::RepresentativeFn* rep, bool use_law_pair) {
    check_match(traj, data);
    auto c = build_context(data);
    CertificateReport rpt;
    rpt.step_alpha.resize(static_cast<std::size_t>(data.m), 0.0);
    rpt.step_gamma.resize(static_cast<std::size_t>(data.m), 0.0);
    double mass = 0.0;
    for (int n = 1; n <= data.m; ++n) {
        std::size_t sn = static_cast<std::size_t>(n);
        double an = 0.0, gn = 0.0;
        for (int j = 0; j <= data.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            double wq = (j == 0 || j == data.J) ? 0.5 * c.h : c.h;
            double uu = traj.u[sn][sj], ww = traj.w[sn][sj];
            double y = c.ynode[sj];
            double phv = c.hom ? c.alpha.value(uu) : data.phi.value(uu, y);
            auto conj = c.hom ? c.alpha.conjugate_value(ww) : data.phi.conjugate_value(ww, y);
            double gap = conj.clipped ? kInf : phv + conj.value - ww * uu;
            an += wq * gap;
            if (std::isfinite(gap)) mass += c.k * wq * (std::abs(phv) + std::abs(conj.value) +
                                                        std::abs(ww * uu));
        }
        for (int e = 0; e < data.J; ++e) {
            std::size_t se = static_cast<std::size_t>(e);
            double du = (traj.u[sn][se + 1] - traj.u[sn][se]) / c.h;
            double zz = traj.z[sn][se];
            double fv;
            if (use_law_pair) {
                try {
                    fv = data.law->phi0_at(du) + data.law->psi0_at(zz);
                } catch (const SolverError&) {
                    fv = kInf;
                }
            } else {
                auto val = rep->value(du, zz, c.ymid[se]);
                fv = val.clipped ? kInf : val.value;
            }
            double gap = fv - du * zz;
            gn += c.h * gap;
            if (std::isfinite(gap)) mass += c.k * c.h * (std::abs(fv) + std::abs(du * zz));
        }
        rpt.step_alpha[sn - 1] = c.k * an;
        rpt.step_gamma[sn - 1] = c.k * gn;
        rpt.alpha_part += c.k * an;
        rpt.gamma_part += c.k * gn;
    }
    rpt.total = rpt.alpha_part + rpt.gamma_part;
    rpt.scale = 1.0 + mass;
    double gap_tol = use_law_pair ? data.law->conjugacy_gap : rep->tolerance();
    rpt.slack = 1e-8 * rpt.scale + data.T * gap_tol;
    if (rpt.alpha_part < -1e-8 * rpt.scale)
        throw ConsistencyError("certificate alpha part is negative beyond tolerance: " +
                               format_double(rpt.alpha_part));
    if (rpt.gamma_part < -rpt.slack)
        throw ConsistencyError("certificate gamma part is negative beyond tolerance: " +
                               format_double(rpt.gamma_part));
    return rpt;
}

}  // namespace

CertificateReport phi_certificate(const Trajectory& traj, const ProblemData& data) {
    if (data.mode == ProblemData::Mode::Homogenized)
        return certificate_impl(traj, data, nullptr, true);
    auto rep = fitz::RepresentativeFn::fenchel(data.jflux);
    return certificate_impl(traj, data, &rep, false);
}

CertificateReport phi_certificate(const Trajectory& traj, const ProblemData& data,
                                  const fitz::RepresentativeFn& rep) {
    return certificate_impl(traj, data, &rep, false);
}

NormRecord apriori_monitor(const Trajectory& traj) {
    NormRecord r;
    if (traj.m < 1 || traj.J < 2) return r;
    double h = traj.hmesh(), k = traj.kstep();
    double ug = 0.0, zl = 0.0, dtw = 0.0;
    for (int n = 0; n <= traj.m; ++n) {
        std::size_t sn = static_cast<std::size_t>(n);
        double wl = 0.0;
        for (int j = 0; j <= traj.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            double wq = (j == 0 || j == traj.J) ? 0.5 * h : h;
            wl += wq * traj.w[sn][sj] * traj.w[sn][sj];
        }
        r.w_linf_l2 = std::max(r.w_linf_l2, std::sqrt(wl));
        if (n == 0) continue;
        for (int e = 0; e < traj.J; ++e) {
            std::size_t se = static_cast<std::size_t>(e);
            double du = (traj.u[sn][se + 1] - traj.u[sn][se]) / h;
            ug += k * h * du * du;
            zl += k * h * traj.z[sn][se] * traj.z[sn][se];
        }
        // discrete dual norm of the difference quotient: one stiffness solve
        std::size_t nn = static_cast<std::size_t>(traj.J) - 1;
        std::vector<double> lower(nn, -1.0 / h), diag(nn, 2.0 / h), upper(nn, -1.0 / h), rhs(nn);
        for (std::size_t i = 0; i < nn; ++i)
            rhs[i] = h * (traj.w[sn][i + 1] - traj.w[sn - 1][i + 1]) / k;
        std::vector<double> d2 = rhs;
        thomas_solve(lower, diag, upper, d2);
        double nrm = 0.0;
        for (std::size_t i = 0; i < nn; ++i)
            nrm += h * ((traj.w[sn][i + 1] - traj.w[sn - 1][i + 1]) / k) * d2[i];
        dtw += k * std::max(0.0, nrm);
    }
    r.u_grad_l2 = std::sqrt(ug);
    r.z_l2 = std::sqrt(zl);
    r.dtw_dual = std::sqrt(dtw);
    return r;
}

double weak_residual(const Trajectory& traj, const ProblemData& data,
                     std::span<const WeakTest> tests) {
    check_match(traj, data);
    auto c = build_context(data);
    double worst = 0.0;
    for (const auto& tst : tests) {
        if (tst.node < 1 || tst.node >= data.J)
            throw ConfigError("weak test node must be interior");
        if (tst.theta.size() != static_cast<std::size_t>(data.m) + 1)
            throw ConfigError("weak test profile needs one value per time level");
        if (tst.theta.back() != 0.0)
            throw ConfigError("weak test profiles must vanish at the final time");
        std::size_t i = static_cast<std::size_t>(tst.node);
        double R = 0.0;
        for (int n = 1; n <= data.m; ++n) {
            std::size_t sn = static_cast<std::size_t>(n);
            double t = n * c.k;
            double xl = (tst.node - 0.5) * c.h, xr = (tst.node + 0.5) * c.h;
            double Sl = c.hom ? data.source.mean_value(xl, t)
                              : data.source.value(xl, t, c.ymid[i - 1]);
            double Sr = c.hom ? data.source.mean_value(xr, t)
                              : data.source.value(xr, t, c.ymid[i]);
            double rho = c.h * (traj.w[sn][i] - traj.w[sn - 1][i]) / c.k +
                         (traj.z[sn][i - 1] + Sl) - (traj.z[sn][i] + Sr);
            R += c.k * tst.theta[sn] * rho;
        }
        worst = std::max(worst, std::abs(R));
    }
    return worst;
}

std::vector<WeakTest> default_weak_tests(const ProblemData& data) {
    std::vector<int> nodes{1, data.J / 2, data.J - 1};
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::vector<WeakTest> tests;
    int m = data.m;
    for (int node : nodes) {
        if (node < 1 || node >= data.J) continue;
        // ramp supported near t = 0 (recovers the initial datum)
        WeakTest ramp;
        ramp.node = node;
        ramp.theta.resize(static_cast<std::size_t>(m) + 1, 0.0);
        int nz = std::min(4, m);
        for (int n = 0; n <= m; ++n)
            ramp.theta[static_cast<std::size_t>(n)] = std::max(0.0, 1.0 - double(n) / nz);
        ramp.theta.back() = 0.0;
        tests.push_back(ramp);
        // hat centered mid-run
        WeakTest hat;
        hat.node = node;
        hat.theta.resize(static_cast<std::size_t>(m) + 1, 0.0);
        int n0 = m / 2, wdt = std::max(1, m / 4);
        for (int n = 0; n <= m; ++n)
            hat.theta[static_cast<std::size_t>(n)] =
                std::max(0.0, 1.0 - std::abs(n - n0) / double(wdt));
        hat.theta.back() = 0.0;
        tests.push_back(hat);
        // plateau covering all but the final level
        WeakTest all;
        all.node = node;
        all.theta.assign(static_cast<std::size_t>(m) + 1, 1.0);
        all.theta.back() = 0.0;
        tests.push_back(all);
    }
    return tests;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
    out << "# trajectory\n";
    out << "# T = " << format_double(traj.T) << "\n";
    out << "# m = " << traj.m << "\n";
    out << "# J = " << traj.J << "\n";
    out << "t, x, u, w, z\n";
    double h = traj.hmesh(), k = traj.kstep();
    for (int n = 0; n <= traj.m; ++n) {
        std::size_t sn = static_cast<std::size_t>(n);
        for (int j = 0; j <= traj.J; ++j) {
            std::size_t sj = static_cast<std::size_t>(j);
            std::size_t se = static_cast<std::size_t>(j < traj.J ? j : traj.J - 1);
            out << format_double(n * k) << ", " << format_double(j * h) << ", "
                << format_double(traj.u[sn][sj]) << ", " << format_double(traj.w[sn][sj]) << ", "
                << format_double(traj.z[sn][se]) << "\n";
        }
    }
}

Trajectory read_trajectory_csv(std::istream& in) {
    Trajectory traj;
    std::string line;
    bool have_t = false, have_m = false, have_j = false, header = false;
    int n = 0, j = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            std::string val = line.substr(eq + 1);
            auto trim = [](std::string& s) {
                while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
                while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                    s.pop_back();
            };
            trim(key);
            trim(val);
            if (key == "T") {
                traj.T = parse_double(val);
                have_t = true;
            } else if (key == "m") {
                traj.m = static_cast<int>(parse_double(val));
                have_m = true;
            } else if (key == "J") {
                traj.J = static_cast<int>(parse_double(val));
                have_j = true;
            }
            continue;
        }
        auto fields = split_csv_line(line);
        if (!header) {
            if (fields.size() == 5 && fields[0] == "t" && fields[1] == "x") {
                if (!have_t || !have_m || !have_j)
                    throw IoError("trajectory header is missing T, m, or J metadata");
                if (traj.m < 1 || traj.J < 2 || !(traj.T > 0.0))
                    throw IoError("trajectory metadata out of range");
                std::size_t nodes = static_cast<std::size_t>(traj.J) + 1;
                traj.u.assign(static_cast<std::size_t>(traj.m) + 1,
                              std::vector<double>(nodes, 0.0));
                traj.w = traj.u;
                traj.z.assign(static_cast<std::size_t>(traj.m) + 1,
                              std::vector<double>(static_cast<std::size_t>(traj.J), 0.0));
                header = true;
                continue;
            }
            throw IoError("trajectory data began before the column header at line " +
                          std::to_string(lineno));
        }
        if (fields.size() != 5)
            throw IoError("trajectory row at line " + std::to_string(lineno) + " has " +
                          std::to_string(fields.size()) + " fields, expected 5");
        if (n > traj.m)
            throw IoError("trajectory has more rows than the metadata admits at line " +
                          std::to_string(lineno));
        double t = parse_double(fields[0]), x = parse_double(fields[1]);
        if (t != n * traj.kstep() || x != j * traj.hmesh())
            throw IoError("trajectory row at line " + std::to_string(lineno) +
                          " is out of order");
        std::size_t sn = static_cast<std::size_t>(n), sj = static_cast<std::size_t>(j);
        traj.u[sn][sj] = parse_double(fields[2]);
        traj.w[sn][sj] = parse_double(fields[3]);
        if (j < traj.J) traj.z[sn][sj] = parse_double(fields[4]);
        if (++j > traj.J) {
            j = 0;
            ++n;
        }
    }
    if (!header) throw IoError("trajectory stream carries no data");
    if (n != traj.m + 1 || j != 0) throw IoError("trajectory ended mid-grid");
    return traj;
}

}  // namespace homoglab::evolve
