#include "homoglab/twoscale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "homoglab/common.hpp"

namespace homoglab::twoscale {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double frac(double x) {
    double f = x - std::floor(x);
    if (f >= 1.0) f = 0.0;
    return f;
}

// eps / h must be a positive integer so every element sits inside one period.
int period_elements(double eps, int J) {
    if (!(eps > 0.0)) throw ConfigError("two-scale pairing needs a positive eps");
    double ratio = eps * J;
    double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * J || rounded < 1.0)
        throw ConfigError("mesh spacing does not divide the period eps");
    return static_cast<int>(rounded);
}

double interp_nodal(std::span<const double> nodal, double x) {
    int J = static_cast<int>(nodal.size()) - 1;
    double s = std::clamp(x, 0.0, 1.0) * J;
    int e = std::min(static_cast<int>(s), J - 1);
    double t = s - e;
    return (1.0 - t) * nodal[e] + t * nodal[e + 1];
}

std::string format_poly(int degree) {
    return "x^" + std::to_string(degree);
}

}  // namespace

void TwoScaleTest::validate() const {
    if (degree < 0 || degree > 3)
        throw ConfigError("two-scale test macroscopic degree must lie in 0..3");
    if (trig != Trig::One && (k < 1 || k > 4))
        throw ConfigError("two-scale test frequency must lie in 1..4");
    if (time_degree < 0 || time_degree > 1)
        throw ConfigError("two-scale test time degree must lie in 0..1");
}

double TwoScaleTest::psi(double x) const {
    double p = 1.0;
    for (int i = 0; i < degree; ++i) p *= x;
    return p;
}

double TwoScaleTest::rho(double y) const {
    switch (trig) {
        case Trig::One: return 1.0;
        case Trig::Sin: return std::sin(kTwoPi * k * y);
        case Trig::Cos: return std::cos(kTwoPi * k * y);
    }
    return 1.0;
}

double TwoScaleTest::theta(double t) const {
    return time_degree == 0 ? 1.0 : t;
}

double TwoScaleTest::value(double x, double y, double t) const {
    return psi(x) * rho(y) * theta(t);
}

std::string TwoScaleTest::id() const {
    std::string micro;
    switch (trig) {
        case Trig::One: micro = "1"; break;
        case Trig::Sin: micro = "sin(2pi*" + std::to_string(k) + "*y)"; break;
        case Trig::Cos: micro = "cos(2pi*" + std::to_string(k) + "*y)"; break;
    }
    std::string s = format_poly(degree) + "*" + micro;
    if (time_degree > 0) s += "*t";
    return s;
}

std::vector<TwoScaleTest> default_test_family() {
    std::vector<TwoScaleTest> family;
    for (int d = 0; d <= 3; ++d) {
        family.push_back({d, TwoScaleTest::Trig::One, 1, 0});
        for (int k = 1; k <= 4; ++k) {
            family.push_back({d, TwoScaleTest::Trig::Sin, k, 0});
            family.push_back({d, TwoScaleTest::Trig::Cos, k, 0});
        }
    }
    return family;
}

TwoScaleField TwoScaleField::zero(int J, int M) {
    if (J < 1 || M < 1) throw ConfigError("two-scale field needs J >= 1 and M >= 1");
    TwoScaleField f;
    f.J = J;
    f.M = M;
    f.vals.assign(static_cast<std::size_t>(J + 1) * M, 0.0);
    return f;
}

TwoScaleField TwoScaleField::tabulate(int J, int M,
                                      const std::function<double(double, double)>& f) {
    TwoScaleField out = zero(J, M);
    for (int i = 0; i <= J; ++i) {
        double x = static_cast<double>(i) / J;
        for (int j = 0; j < M; ++j) out.at(i, j) = f(x, (j + 0.5) / M);
    }
    return out;
}

std::vector<double> TwoScaleField::average() const {
    std::vector<double> hat(static_cast<std::size_t>(J) + 1, 0.0);
    for (int i = 0; i <= J; ++i) {
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += at(i, j);
        hat[static_cast<std::size_t>(i)] = s / M;
    }
    return hat;
}

TwoScaleField TwoScaleField::fluctuation() const {
    TwoScaleField tilde = *this;
    std::vector<double> hat = average();
    for (int i = 0; i <= J; ++i)
        for (int j = 0; j < M; ++j) tilde.at(i, j) -= hat[static_cast<std::size_t>(i)];
    return tilde;
}

double TwoScaleField::l2() const {
    double acc = 0.0;
    double h = 1.0 / J;
    for (int i = 0; i <= J; ++i) {
        double cell = 0.0;
        for (int j = 0; j < M; ++j) cell += at(i, j) * at(i, j);
        double w = (i == 0 || i == J) ? 0.5 * h : h;
        acc += w * cell / M;
    }
    return std::sqrt(std::max(0.0, acc));
}

double TwoScaleField::pair(const TwoScaleTest& test) const {
    test.validate();
    double acc = 0.0;
    double h = 1.0 / J;
    for (int i = 0; i <= J; ++i) {
        double x = static_cast<double>(i) / J;
        double cell = 0.0;
        for (int j = 0; j < M; ++j) cell += at(i, j) * test.rho((j + 0.5) / M);
        double w = (i == 0 || i == J) ? 0.5 * h : h;
        acc += w * test.psi(x) * cell / M;
    }
    return acc;
}

namespace {

// Two-point Gauss rule per element on the mesh interpolant. Node-aligned
// Newton-Cotes rules are superconvergent on period-aligned trig data (the
// pairing error collapses below roundoff and gap decrease is unobservable);
// interior Gauss points keep the genuine resolution error visible while
// integrating constant * psi exactly through cubic psi.
constexpr double kGaussOffset = 0.28867513459481288;  // 1 / (2 sqrt 3)

template <typename F>
double gauss_elements(int J, F&& element_value) {
    double h = 1.0 / J;
    double acc = 0.0;
    for (int e = 0; e < J; ++e) {
        for (double s : {0.5 - kGaussOffset, 0.5 + kGaussOffset})
            acc += 0.5 * h * element_value(e, s, (e + s) * h);
    }
    return acc;
}

}  // namespace

double pairing(std::span<const double> nodal, const TwoScaleTest& test, double eps) {
    test.validate();
    if (nodal.size() < 2) throw ConfigError("two-scale pairing needs at least two nodes");
    int J = static_cast<int>(nodal.size()) - 1;
    period_elements(eps, J);
    return gauss_elements(J, [&](int e, double s, double x) {
        double u = (1.0 - s) * nodal[static_cast<std::size_t>(e)] +
                   s * nodal[static_cast<std::size_t>(e) + 1];
        return u * test.psi(x) * test.rho(frac(x / eps));
    });
}

double pairing(const evolve::Trajectory& traj, const TwoScaleTest& test, double eps,
               TrajField which) {
    test.validate();
    if (traj.m < 1 || traj.J < 2) throw ConfigError("two-scale pairing needs a populated trajectory");
    period_elements(eps, traj.J);
    double k = traj.kstep();

    auto space_nodal = [&](const std::vector<double>& row) {
        return gauss_elements(traj.J, [&](int e, double s, double x) {
            double u = (1.0 - s) * row[static_cast<std::size_t>(e)] +
                       s * row[static_cast<std::size_t>(e) + 1];
            return u * test.psi(x) * test.rho(frac(x / eps));
        });
    };
    auto space_element = [&](const std::vector<double>& row) {
        return gauss_elements(traj.J, [&](int e, double, double x) {
            return row[static_cast<std::size_t>(e)] * test.psi(x) * test.rho(frac(x / eps));
        });
    };

    double total = 0.0;
    if (which == TrajField::W) {
        // piecewise linear in time: trapezoid per step
        for (int n = 1; n <= traj.m; ++n) {
            double a = test.theta((n - 1) * k) * space_nodal(traj.w[static_cast<std::size_t>(n) - 1]);
            double b = test.theta(n * k) * space_nodal(traj.w[static_cast<std::size_t>(n)]);
            total += 0.5 * k * (a + b);
        }
        return total;
    }
    // piecewise constant in time on (t_{n-1}, t_n]
    for (int n = 1; n <= traj.m; ++n) {
        double tmid = (n - 0.5) * k;
        double s = which == TrajField::U ? space_nodal(traj.u[static_cast<std::size_t>(n)])
                                         : space_element(traj.z[static_cast<std::size_t>(n)]);
        total += k * test.theta(tmid) * s;
    }
    return total;
}

std::vector<GapRow> twoscale_gap(std::span<const EpsField> sequence, const TwoScaleField& limit,
                                 std::span<const TwoScaleTest> tests) {
    if (sequence.empty()) throw ConfigError("two-scale gap table needs a nonempty sequence");
    if (tests.empty()) throw ConfigError("two-scale gap table needs a nonempty test family");
    std::vector<GapRow> rows;
    rows.reserve(sequence.size() * tests.size());
    for (const EpsField& member : sequence) {
        for (const TwoScaleTest& test : tests) {
            GapRow row;
            row.eps = member.eps;
            row.test = test.id();
            row.pairing = pairing(member.values, test, member.eps);
            row.limit = limit.pair(test);
            row.gap = std::abs(row.pairing - row.limit);
            rows.push_back(std::move(row));
        }
    }
    std::sort(rows.begin(), rows.end(), [](const GapRow& a, const GapRow& b) {
        if (a.eps != b.eps) return a.eps < b.eps;
        return a.test < b.test;
    });
    return rows;
}

TwoScaleField unfold(std::span<const double> nodal, double eps, int M) {
    if (nodal.size() < 2) throw ConfigError("unfolding needs at least two nodes");
    if (M < 1) throw ConfigError("unfolding needs a positive cell resolution");
    int J = static_cast<int>(nodal.size()) - 1;
    period_elements(eps, J);

    int last_cell = std::max(0, static_cast<int>(std::ceil(1.0 / eps)) - 1);
    TwoScaleField out = TwoScaleField::zero(J, M);
    double umax = 0.0;
    for (double v : nodal) umax = std::max(umax, std::abs(v));
    for (int i = 0; i <= J; ++i) {
        double x = static_cast<double>(i) / J;
        int c = std::min(static_cast<int>(std::floor(x / eps)), last_cell);
        for (int j = 0; j < M; ++j) {
            double p = eps * (c + (j + 0.5) / M);
            out.at(i, j) = interp_nodal(nodal, p);
        }
    }

    // mass bookkeeping: cell-wise norm of the image against the
    // element-midpoint norm of the source, slack for cut boundary cells and
    // quadrature resolution
    double src = field_l2_midpoint(nodal);
    double img = unfold_norm(out);
    double h = 1.0 / J;
    double allowance = 4.0 * (eps + h + 1.0 / M) * (1.0 + umax) * (1.0 + umax);
    if (std::abs(src * src - img * img) > allowance)
        throw ConsistencyError("unfolding lost mass beyond the boundary-cell allowance");
    return out;
}

double unfold_norm(const TwoScaleField& f) {
    double acc = 0.0;
    double h = 1.0 / f.J;
    for (int i = 0; i < f.J; ++i) {
        double cell = 0.0;
        for (int j = 0; j < f.M; ++j) cell += f.at(i, j) * f.at(i, j);
        acc += h * cell / f.M;
    }
    return std::sqrt(std::max(0.0, acc));
}

double field_l2(std::span<const double> nodal) {
    if (nodal.size() < 2) throw ConfigError("field norm needs at least two nodes");
    int J = static_cast<int>(nodal.size()) - 1;
    double h = 1.0 / J;
    double acc = 0.0;
    for (int i = 0; i <= J; ++i) {
        double w = (i == 0 || i == J) ? 0.5 * h : h;
        acc += w * nodal[static_cast<std::size_t>(i)] * nodal[static_cast<std::size_t>(i)];
    }
    return std::sqrt(std::max(0.0, acc));
}

double field_l2_midpoint(std::span<const double> nodal) {
    if (nodal.size() < 2) throw ConfigError("field norm needs at least two nodes");
    int J = static_cast<int>(nodal.size()) - 1;
    double h = 1.0 / J;
    double acc = 0.0;
    for (int e = 0; e < J; ++e) {
        double mid = 0.5 * (nodal[static_cast<std::size_t>(e)] + nodal[static_cast<std::size_t>(e) + 1]);
        acc += h * mid * mid;
    }
    return std::sqrt(std::max(0.0, acc));
}

namespace {

// Correctors rebuilt at the law's tabulated gradients; the persisted law only
// carries scalar tables. Linear blending between nodes is exact for quadratic
// media, where the corrector gradient is linear in xi.
class CorrectorTable {
  public:
    CorrectorTable(const convex::Potential& medium, const cell::EffectiveLaw& law, int cell_m)
        : medium_(medium), law_(law), grid_(cell::CellGrid::make(1, cell_m)) {}

    // dy u1 at cell midpoint index jy for macroscopic gradient xi
    double slope(double xi, int jy) {
        if (xi < law_.xi_min() - 1e-12 || xi > law_.xi_max() + 1e-12)
            throw SolverError("homogenized gradient leaves the tabulated range at xi = " +
                              std::to_string(xi));
        if (!medium_.y_dependent()) return 0.0;
        double clamped = std::clamp(xi, law_.xi_min(), law_.xi_max());
        std::size_t hi = 1;
        while (hi + 1 < law_.xi.size() && law_.xi[hi] < clamped) ++hi;
        std::size_t lo = hi - 1;
        double width = law_.xi[hi] - law_.xi[lo];
        double t = width > 0.0 ? (clamped - law_.xi[lo]) / width : 0.0;
        const std::vector<double>& a = node(lo);
        const std::vector<double>& b = node(hi);
        std::size_t j = static_cast<std::size_t>(jy);
        return (1.0 - t) * a[j] + t * b[j];
    }

  private:
    const std::vector<double>& node(std::size_t idx) {
        auto it = cache_.find(idx);
        if (it != cache_.end()) return it->second;
        cell::CellSolution sol = cell::solve_cell_primal(medium_, law_.xi[idx], grid_);
        return cache_.emplace(idx, std::move(sol.corrector)).first->second;
    }

    const convex::Potential& medium_;
    const cell::EffectiveLaw& law_;
    cell::CellGrid grid_;
    std::map<std::size_t, std::vector<double>> cache_;
};

}  // namespace

double corrector_error(const evolve::Trajectory& eps_traj, const evolve::Trajectory& hom_traj,
                       const convex::Potential& medium, const cell::EffectiveLaw& law, double eps,
                       int cell_m) {
    if (eps_traj.m != hom_traj.m || std::abs(eps_traj.T - hom_traj.T) > 1e-12 * (1.0 + hom_traj.T))
        throw ConfigError("corrector comparison needs matching time grids");
    if (eps_traj.m < 1) throw ConfigError("corrector comparison needs at least one time step");
    if (cell_m < 2) throw ConfigError("corrector comparison needs a cell resolution of at least 2");
    if (law.N != 1) throw ConfigError("corrector comparison is one-dimensional");
    period_elements(eps, eps_traj.J);

    int Jf = std::max(eps_traj.J, hom_traj.J);
    if (Jf % eps_traj.J != 0 || Jf % hom_traj.J != 0)
        throw ConfigError("corrector comparison needs nested meshes");
    int se = Jf / eps_traj.J;
    int sh = Jf / hom_traj.J;
    double hf = 1.0 / Jf;
    double k = eps_traj.kstep();

    CorrectorTable table(medium, law, cell_m);
    double acc = 0.0;
    for (int n = 1; n <= eps_traj.m; ++n) {
        const std::vector<double>& ue = eps_traj.u[static_cast<std::size_t>(n)];
        const std::vector<double>& uh = hom_traj.u[static_cast<std::size_t>(n)];
        for (int f = 0; f < Jf; ++f) {
            int ce = f / se;
            int ch = f / sh;
            double due = (ue[static_cast<std::size_t>(ce) + 1] - ue[static_cast<std::size_t>(ce)]) *
                         eps_traj.J;
            double duh = (uh[static_cast<std::size_t>(ch) + 1] - uh[static_cast<std::size_t>(ch)]) *
                         hom_traj.J;
            double y = frac((f + 0.5) * hf / eps);
            int jy = std::min(cell_m - 1, static_cast<int>(y * cell_m));
            double diff = due - duh - table.slope(duh, jy);
            acc += k * hf * diff * diff;
        }
    }
    return std::sqrt(std::max(0.0, acc));
}

void write_gap_table(std::span<const GapRow> rows, std::ostream& out) {
    out << "# twoscale-gap\n";
    std::map<std::string, bool> seen;
    std::string family;
    for (const GapRow& row : rows) {
        if (seen.emplace(row.test, true).second) {
            if (!family.empty()) family += ", ";
            family += row.test;
        }
    }
    out << "# family = " << family << "\n";
    out << "eps, test, pairing, limit, gap\n";
    char buf[128];
    for (const GapRow& row : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", row.eps);
        out << buf << ", " << row.test;
        std::snprintf(buf, sizeof buf, "%.17g", row.pairing);
        out << ", " << buf;
        std::snprintf(buf, sizeof buf, "%.17g", row.limit);
        out << ", " << buf;
        std::snprintf(buf, sizeof buf, "%.17g", row.gap);
        out << ", " << buf << "\n";
    }
}

}  // namespace homoglab::twoscale
