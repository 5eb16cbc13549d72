#include "homoglab/convex.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "homoglab/common.hpp"

namespace homoglab::convex {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_unit(double y) {
    double f = y - std::floor(y);
    return f < 1.0 ? f : 0.0;
}
}  // namespace

double PhaseCoeff::at(double y) const {
    if (theta <= 0.0) return a2;
    if (theta >= 1.0) return a1;
    return wrap_unit(y) < theta ? a1 : a2;
}

Potential Potential::quadratic(double a) {
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {0.0, 0.0, 0.5};
    p.amp_ = {a, a, 0.5};
    p.p_ = 2.0;
    if (!(a >= 0.0)) throw ConfigError("quadratic coefficient must be >= 0");
    return p;
}

Potential Potential::power(double a, double pw) {
    if (!(a > 0.0)) throw ConfigError("power coefficient must be > 0");
    if (!(pw > 1.0)) throw ConfigError("power exponent must be > 1");
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {0.0, 0.0, 0.5};
    p.amp_ = {a, a, 0.5};
    p.p_ = pw;
    return p;
}

Potential Potential::absolute() {
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {1.0, 1.0, 0.5};
    p.amp_ = {0.0, 0.0, 0.5};
    p.p_ = 2.0;
    return p;
}

Potential Potential::two_phase(double a1, double a2, double theta) {
    if (!(a1 > 0.0) || !(a2 > 0.0)) throw ConfigError("two-phase coefficients must be > 0");
    if (!(theta > 0.0) || !(theta < 1.0)) throw ConfigError("two-phase fraction must lie in (0,1)");
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {0.0, 0.0, theta};
    p.amp_ = {a1, a2, theta};
    p.p_ = 2.0;
    return p;
}

Potential Potential::power_two_phase(double a1, double a2, double theta, double pw) {
    if (!(a1 > 0.0) || !(a2 > 0.0)) throw ConfigError("two-phase coefficients must be > 0");
    if (!(theta > 0.0) || !(theta < 1.0)) throw ConfigError("two-phase fraction must lie in (0,1)");
    if (!(pw > 1.0)) throw ConfigError("power exponent must be > 1");
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {0.0, 0.0, theta};
    p.amp_ = {a1, a2, theta};
    p.p_ = pw;
    return p;
}

Potential Potential::kinked(double c, double a) {
    if (!(c >= 0.0) || !(a >= 0.0)) throw ConfigError("kinked coefficients must be >= 0");
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {c, c, 0.5};
    p.amp_ = {a, a, 0.5};
    p.p_ = 2.0;
    return p;
}

Potential Potential::kinked_two_phase(double c1, double c2, double a1, double a2, double theta) {
    if (!(c1 >= 0.0) || !(c2 >= 0.0)) throw ConfigError("kink coefficients must be >= 0");
    if (!(a1 >= 0.0) || !(a2 >= 0.0)) throw ConfigError("quadratic coefficients must be >= 0");
    if (!(theta > 0.0) || !(theta < 1.0)) throw ConfigError("phase fraction must lie in (0,1)");
    Potential p;
    p.kind_ = Kind::Analytic;
    p.kink_ = {c1, c2, theta};
    p.amp_ = {a1, a2, theta};
    p.p_ = 2.0;
    return p;
}

Potential Potential::from_samples(std::vector<double> v, std::vector<double> phi) {
    return from_samples(std::move(v), std::move(phi), {});
}

Potential Potential::from_samples(std::vector<double> v, std::vector<double> phi,
                                  std::vector<char> clipped) {
    const std::size_t n = v.size();
    if (n < 2 || phi.size() != n) throw ConfigError("potential sample needs >= 2 matched rows");
    if (!clipped.empty() && clipped.size() != n)
        throw ConfigError("clipped flags must match sample count");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(v[i]) || !std::isfinite(phi[i]))
            throw ConfigError("potential sample has non-finite entry at row " + std::to_string(i));
        if (i + 1 < n && !(v[i] < v[i + 1]))
            throw ConfigError("potential sample grid must strictly increase at row " +
                              std::to_string(i + 1));
    }
    std::vector<double> slopes(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) slopes[i] = (phi[i + 1] - phi[i]) / (v[i + 1] - v[i]);
    for (std::size_t i = 0; i + 2 < n; ++i) {
        double tol = 1e-12 * (1.0 + std::max(std::abs(slopes[i]), std::abs(slopes[i + 1])));
        if (slopes[i + 1] < slopes[i] - tol)
            throw ConfigError("potential sample not convex at indices (" + std::to_string(i) + ", " +
                              std::to_string(i + 1) + ", " + std::to_string(i + 2) + ")");
    }
    Potential p;
    p.kind_ = Kind::Sampled;
    p.sv_ = std::move(v);
    p.sphi_ = std::move(phi);
    p.sclip_ = clipped.empty() ? std::vector<char>(n, 0) : std::move(clipped);
    p.slopes_ = std::move(slopes);
    return p;
}

double Potential::value(double v, double y) const { return value_checked(v, y).value; }

Checked Potential::value_checked(double v, double y) const {
    switch (kind_) {
        case Kind::Analytic: {
            double c = kink_.at(y), a = amp_.at(y);
            double av = std::abs(v);
            double val = c * av;
            if (a != 0.0) val += (p_ == 2.0) ? a * v * v / 2.0 : a * std::pow(av, p_) / p_;
            return {val, false};
        }
        case Kind::Sampled: {
            const std::size_t n = sv_.size();
            if (v <= sv_.front())
                return {sphi_.front() + slopes_.front() * (v - sv_.front()),
                        v < sv_.front() || sclip_.front() != 0};
            if (v >= sv_.back())
                return {sphi_.back() + slopes_.back() * (v - sv_.back()),
                        v > sv_.back() || sclip_.back() != 0};
            auto it = std::upper_bound(sv_.begin(), sv_.end(), v);
            std::size_t i = static_cast<std::size_t>(it - sv_.begin()) - 1;
            if (i + 1 >= n) i = n - 2;
            bool clip = sclip_[i] != 0 || sclip_[i + 1] != 0;
            return {sphi_[i] + slopes_[i] * (v - sv_[i]), clip};
        }
        case Kind::Moreau:
            return {base_->moreau_value(v, lambda_, y), false};
    }
    return {};
}

Interval Potential::subdifferential(double v, double y) const {
    switch (kind_) {
        case Kind::Analytic: {
            double c = kink_.at(y), a = amp_.at(y);
            if (v == 0.0) return {-c, c};
            double s = v > 0.0 ? 1.0 : -1.0;
            double g = c * s;
            if (a != 0.0) g += (p_ == 2.0) ? a * v : a * std::pow(std::abs(v), p_ - 1.0) * s;
            return {g, g};
        }
        case Kind::Sampled: {
            const std::size_t n = sv_.size();
            if (v < sv_.front() || v > sv_.back())
                throw SolverError("subdifferential query outside sample hull [" +
                                  format_double(sv_.front()) + ", " + format_double(sv_.back()) +
                                  "] at v = " + format_double(v));
            auto it = std::lower_bound(sv_.begin(), sv_.end(), v);
            std::size_t i = static_cast<std::size_t>(it - sv_.begin());
            if (i < n && sv_[i] == v) {  // exactly at a node
                double lo = (i == 0) ? slopes_.front() : slopes_[i - 1];
                double hi = (i + 1 == n) ? slopes_.back() : slopes_[i];
                return {lo, hi};
            }
            return {slopes_[i - 1], slopes_[i - 1]};
        }
        case Kind::Moreau: {
            double g = base_->moreau_slope(v, lambda_, y);
            return {g, g};
        }
    }
    return {};
}

double Potential::curvature(double v, double y) const {
    switch (kind_) {
        case Kind::Analytic: {
            double c = kink_.at(y), a = amp_.at(y);
            if (v == 0.0) {
                if (c > 0.0) return kInf;
                if (a == 0.0) return 0.0;
                if (p_ == 2.0) return a;
                return p_ > 2.0 ? 0.0 : kInf;
            }
            if (a == 0.0) return 0.0;
            return (p_ == 2.0) ? a : a * (p_ - 1.0) * std::pow(std::abs(v), p_ - 2.0);
        }
        case Kind::Sampled: {
            auto it = std::lower_bound(sv_.begin(), sv_.end(), v);
            std::size_t i = static_cast<std::size_t>(it - sv_.begin());
            if (i < sv_.size() && sv_[i] == v && i > 0 && i + 1 < sv_.size() &&
                slopes_[i] > slopes_[i - 1])
                return kInf;
            return 0.0;
        }
        case Kind::Moreau:
            return base_->moreau_curvature(v, lambda_, y);
    }
    return 0.0;
}

double Potential::prox_analytic(double v, double lambda, double y) const {
    double c = kink_.at(y), a = amp_.at(y);
    double m = std::abs(v) - lambda * c;
    if (m <= 0.0) return 0.0;
    double s = v > 0.0 ? 1.0 : -1.0;
    if (a == 0.0) return s * m;
    if (p_ == 2.0) return s * m / (1.0 + lambda * a);
    // Root of r + lambda a r^(p-1) = m on (0, m]; Newton with bisection guard.
    double lo = 0.0, hi = m;
    double r = std::min(m, std::pow(m / (lambda * a), 1.0 / (p_ - 1.0)));
    if (!(r > 0.0) || !(r < m)) r = 0.5 * m;
    for (int it = 0; it < 100; ++it) {
        double rp = std::pow(r, p_ - 1.0);
        double g = r + lambda * a * rp - m;
        if (g > 0.0)
            hi = r;
        else
            lo = r;
        double dg = 1.0 + lambda * a * (p_ - 1.0) * (rp / r);
        double step = g / dg;
        double rn = r - step;
        if (!(rn > lo) || !(rn < hi)) rn = 0.5 * (lo + hi);
        if (std::abs(rn - r) <= 1e-16 * (1.0 + std::abs(r))) {
            r = rn;
            break;
        }
        r = rn;
    }
    return s * r;
}

double Potential::prox_sampled(double v, double lambda) const {
    const std::size_t n = sv_.size();
    // Node i absorbs v whenever v - lambda * slope brackets it; keys are the
    // monotone breakpoints v_i + lambda * s_{i-1}.
    if (v <= sv_.front() + lambda * slopes_.front()) return sv_.front();
    if (v >= sv_.back() + lambda * slopes_.back()) return sv_.back();
    std::size_t lo = 1, hi = n - 1, i = 1;
    while (lo <= hi) {  // last node with key <= v
        std::size_t mid = (lo + hi) / 2;
        if (sv_[mid] + lambda * slopes_[mid - 1] <= v) {
            i = mid;
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    if (i + 1 == n || v <= sv_[i] + lambda * slopes_[i]) return sv_[i];
    return v - lambda * slopes_[i];
}

double Potential::prox(double v, double lambda, double y) const {
    if (!(lambda > 0.0)) throw SolverError("prox needs lambda > 0");
    switch (kind_) {
        case Kind::Analytic:
            return prox_analytic(v, lambda, y);
        case Kind::Sampled:
            return prox_sampled(v, lambda);
        case Kind::Moreau: {
            // prox of a Moreau envelope: shift by the deeper envelope's slope.
            double g = base_->moreau_slope(v, lambda_ + lambda, y);
            return v - lambda * g;
        }
    }
    return v;
}

double Potential::moreau_value(double v, double lambda, double y) const {
    if (kind_ == Kind::Moreau) return base_->moreau_value(v, lambda_ + lambda, y);
    double u = prox(v, lambda, y);
    double d = v - u;
    return value(u, y) + d * d / (2.0 * lambda);
}

double Potential::moreau_slope(double v, double lambda, double y) const {
    if (kind_ == Kind::Moreau) return base_->moreau_slope(v, lambda_ + lambda, y);
    return (v - prox(v, lambda, y)) / lambda;
}

double Potential::moreau_curvature(double v, double lambda, double y) const {
    if (kind_ == Kind::Moreau) return base_->moreau_curvature(v, lambda_ + lambda, y);
    double c = curvature(prox(v, lambda, y), y);
    if (c == 0.0) return 0.0;
    return 1.0 / (1.0 / c + lambda);  // equals 1/lambda when c is infinite
}

Checked Potential::conjugate_value(double w, double y) const {
    switch (kind_) {
        case Kind::Analytic: {
            double c = kink_.at(y), a = amp_.at(y);
            double s = std::abs(w) - c;
            if (s <= 0.0) return {0.0, false};
            if (a == 0.0) return {0.0, true};  // indicator: finite domain ends at |w| = c
            if (p_ == 2.0) return {s * s / (2.0 * a), false};
            double q = p_ / (p_ - 1.0);
            return {std::pow(a, -1.0 / (p_ - 1.0)) * std::pow(s, q) / q, false};
        }
        case Kind::Sampled: {
            const std::size_t n = sv_.size();
            // First slope >= w marks the smallest maximizing node.
            std::size_t i = static_cast<std::size_t>(
                std::lower_bound(slopes_.begin(), slopes_.end(), w) - slopes_.begin());
            bool clip = (i == 0 && w < slopes_.front()) || (i == n - 1 && w > slopes_.back()) ||
                        sclip_[i] != 0;
            return {w * sv_[i] - sphi_[i], clip};
        }
        case Kind::Moreau: {
            Checked b = base_->conjugate_value(w, y);
            return {b.value + lambda_ * w * w / 2.0, b.clipped};
        }
    }
    return {};
}

bool Potential::y_dependent() const {
    switch (kind_) {
        case Kind::Analytic:
            return !kink_.uniform() || !amp_.uniform();
        case Kind::Sampled:
            return false;
        case Kind::Moreau:
            return base_->y_dependent();
    }
    return false;
}

bool Potential::smooth() const {
    switch (kind_) {
        case Kind::Analytic:
            return kink_.zero() && (amp_.zero() || p_ >= 2.0);
        case Kind::Sampled:
            return false;
        case Kind::Moreau:
            return true;
    }
    return false;
}

bool Potential::is_quadratic() const {
    return kind_ == Kind::Analytic && kink_.zero() && p_ == 2.0 && !amp_.zero();
}

bool Potential::is_sampled() const { return kind_ == Kind::Sampled; }

double Potential::growth_exponent() const {
    switch (kind_) {
        case Kind::Analytic:
            return amp_.zero() ? 1.0 : p_;
        case Kind::Sampled:
            return 1.0;
        case Kind::Moreau:
            return std::min(2.0, base_->growth_exponent());
    }
    return 2.0;
}

double Potential::quadratic_coefficient(double y) const {
    if (!is_quadratic()) throw SolverError("quadratic coefficient requested from a non-quadratic potential");
    return amp_.at(y);
}

double Potential::quadratic_coefficient_max() const {
    if (!is_quadratic()) throw SolverError("quadratic coefficient requested from a non-quadratic potential");
    return amp_.max();
}

std::optional<std::pair<double, double>> Potential::quadratic_growth_constants() const {
    if (kind_ == Kind::Analytic && (amp_.zero() || p_ == 2.0)) {
        double cm = kink_.max(), am = amp_.max();
        return std::make_pair(am / 2.0 + cm / 2.0, cm / 2.0);
    }
    return std::nullopt;
}

std::vector<double> Potential::grid() const {
    if (kind_ == Kind::Sampled) return sv_;
    if (kind_ == Kind::Moreau) return base_->grid();
    std::vector<double> g(static_cast<std::size_t>(grid_nodes_));
    double R = grid_radius_;
    for (int i = 0; i < grid_nodes_; ++i)
        g[static_cast<std::size_t>(i)] = -R + 2.0 * R * i / (grid_nodes_ - 1);
    return g;
}

Potential Potential::with_grid(double radius, int nodes) const {
    if (!(radius > 0.0) || nodes < 3) throw ConfigError("grid needs radius > 0 and >= 3 nodes");
    if (kind_ == Kind::Sampled) throw ConfigError("cannot regrid a sampled potential");
    if (kind_ == Kind::Moreau) {
        Potential p = *this;
        auto b = std::make_shared<Potential>(base_->with_grid(radius, nodes));
        p.base_ = std::move(b);
        return p;
    }
    Potential p = *this;
    p.grid_radius_ = radius;
    p.grid_nodes_ = nodes;
    return p;
}

Potential Potential::sampled(std::span<const double> grid, double y) const {
    std::vector<double> v(grid.begin(), grid.end());
    std::vector<double> phi(v.size());
    std::vector<char> clip(v.size(), 0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        Checked c = value_checked(v[i], y);
        phi[i] = c.value;
        clip[i] = c.clipped ? 1 : 0;
    }
    return from_samples(std::move(v), std::move(phi), std::move(clip));
}

Potential Potential::y_average() const {
    switch (kind_) {
        case Kind::Analytic: {
            Potential p = *this;
            double c = kink_.mean(), a = amp_.mean();
            p.kink_ = {c, c, 0.5};
            p.amp_ = {a, a, 0.5};
            return p;
        }
        case Kind::Sampled:
            return *this;
        case Kind::Moreau: {
            Potential p = *this;
            p.base_ = std::make_shared<Potential>(base_->y_average());
            return p;
        }
    }
    return *this;
}

std::span<const double> Potential::nodes() const {
    if (kind_ != Kind::Sampled) throw SolverError("nodes() requires a sampled potential");
    return sv_;
}

std::span<const double> Potential::values() const {
    if (kind_ != Kind::Sampled) throw SolverError("values() requires a sampled potential");
    return sphi_;
}

bool Potential::node_clipped(std::size_t i) const {
    if (kind_ != Kind::Sampled) throw SolverError("node_clipped() requires a sampled potential");
    return sclip_.at(i) != 0;
}

std::string Potential::describe() const {
    switch (kind_) {
        case Kind::Analytic: {
            if (kink_.zero() && amp_.zero()) return "zero";
            if (kink_.zero()) {
                if (p_ != 2.0) {
                    if (amp_.uniform())
                        return "power(" + format_double(amp_.a1) + "," + format_double(p_) + ")";
                    return "power-two-phase(" + format_double(amp_.a1) + "," +
                           format_double(amp_.a2) + "," + format_double(amp_.theta) + "," +
                           format_double(p_) + ")";
                }
                if (amp_.uniform()) return "quadratic(" + format_double(amp_.a1) + ")";
                return "two-phase(" + format_double(amp_.a1) + "," + format_double(amp_.a2) + "," +
                       format_double(amp_.theta) + ")";
            }
            if (amp_.zero() && kink_.uniform() && kink_.a1 == 1.0) return "abs";
            if (kink_.uniform() && amp_.uniform())
                return "kinked(" + format_double(kink_.a1) + "," + format_double(amp_.a1) + ")";
            return "kinked-two-phase(" + format_double(kink_.a1) + "," + format_double(kink_.a2) +
                   "," + format_double(amp_.a1) + "," + format_double(amp_.a2) + "," +
                   format_double(amp_.theta) + ")";
        }
        case Kind::Sampled:
            return "sampled(n=" + std::to_string(sv_.size()) + ")";
        case Kind::Moreau:
            return "moreau(" + base_->describe() + "," + format_double(lambda_) + ")";
    }
    return "";
}

Potential conjugate(const Potential& pot, std::span<const double> dual_grid, double y) {
    if (dual_grid.size() < 2) throw ConfigError("dual grid needs >= 2 nodes");
    for (std::size_t j = 0; j + 1 < dual_grid.size(); ++j)
        if (!(dual_grid[j] < dual_grid[j + 1]))
            throw ConfigError("dual grid must strictly increase at index " + std::to_string(j + 1));

    Potential src = pot.is_sampled() ? pot : pot.sampled(pot.grid(), y);
    auto v = src.nodes();
    auto phi = src.values();
    const std::size_t n = v.size();
    std::vector<double> slopes(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) slopes[i] = (phi[i + 1] - phi[i]) / (v[i + 1] - v[i]);

    std::vector<double> out(dual_grid.size());
    std::vector<char> clip(dual_grid.size(), 0);
    std::size_t i = 0;  // maximizer index sweeps monotonically with w
    for (std::size_t j = 0; j < dual_grid.size(); ++j) {
        double w = dual_grid[j];
        while (i + 1 < n && w * v[i + 1] - phi[i + 1] > w * v[i] - phi[i]) ++i;
        out[j] = w * v[i] - phi[i];
        bool boundary = (i == 0 && w < slopes.front()) || (i == n - 1 && w > slopes.back());
        clip[j] = (boundary || src.node_clipped(i)) ? 1 : 0;
    }
    return Potential::from_samples(std::vector<double>(dual_grid.begin(), dual_grid.end()),
                                   std::move(out), std::move(clip));
}

Interval subdifferential_interval(const Potential& pot, double v, double y) {
    return pot.subdifferential(v, y);
}

Potential moreau_smooth(const Potential& pot, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("moreau smoothing needs lambda > 0");
    Potential p;
    p.kind_ = Potential::Kind::Moreau;
    p.base_ = std::make_shared<Potential>(pot);
    p.lambda_ = lambda;
    return p;
}

ConjugatePair make_conjugate_pair(const Potential& pot, std::span<const double> dual_grid,
                                  double y) {
    ConjugatePair pair;
    pair.primal = pot;
    pair.dual = conjugate(pot, dual_grid, y);
    pair.y = y;
    auto vals = pair.dual.values();
    auto ws = pair.dual.nodes();
    if (!pot.is_sampled() && pot.is_quadratic()) {
        pair.L = 1.0 / (2.0 * pot.quadratic_coefficient_max());
        pair.M = 0.0;
        return pair;
    }
    double mn = kInf, mx = 0.0;
    for (double x : vals) {
        mn = std::min(mn, x);
        mx = std::max(mx, std::abs(x));
    }
    pair.M = std::max(0.0, -mn) + std::max(1e-12, 1e-3 * mx);
    double L = kInf;
    for (std::size_t j = 0; j < ws.size(); ++j)
        if (ws[j] != 0.0) L = std::min(L, (vals[j] + pair.M) / (ws[j] * ws[j]));
    pair.L = (L == kInf) ? 0.0 : L;
    return pair;
}

void write_samples_csv(const Potential& pot, std::ostream& os) {
    Potential src = pot.is_sampled() ? pot : pot.sampled(pot.grid());
    auto v = src.nodes();
    auto phi = src.values();
    os << "v,phi\n";
    for (std::size_t i = 0; i < v.size(); ++i)
        os << format_double(v[i]) << "," << format_double(phi[i]) << "\n";
}

Potential read_samples_csv(std::istream& is) {
    std::string line;
    std::vector<double> v, phi;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (!header_seen) {
            header_seen = true;
            if (fields.size() >= 2 && fields[0] == "v" && fields[1] == "phi") continue;
        }
        if (fields.size() < 2) throw IoError("potential CSV line " + std::to_string(lineno) +
                                             " needs columns v, phi");
        v.push_back(parse_double(fields[0]));
        phi.push_back(parse_double(fields[1]));
    }
    try {
        return Potential::from_samples(std::move(v), std::move(phi));
    } catch (const ConfigError& e) {
        throw IoError(std::string("potential CSV rejected: ") + e.what());
    }
}

}  // namespace homoglab::convex
