#include "homoglab/fitz.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "homoglab/common.hpp"

namespace homoglab::fitz {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
}  // namespace

MonotoneGraph MonotoneGraph::from_samples(std::vector<double> v, std::vector<double> w, int dim) {
    if (dim != 1 && dim != 2) throw ConfigError("monotone graph dimension must be 1 or 2");
    const std::size_t d = static_cast<std::size_t>(dim);
    if (v.empty() || v.size() != w.size() || v.size() % d != 0)
        throw ConfigError("monotone graph needs matched v, w samples");
    const std::size_t n = v.size() / d;
    for (double x : v)
        if (!std::isfinite(x)) throw ConfigError("monotone graph has non-finite v entry");
    for (double x : w)
        if (!std::isfinite(x)) throw ConfigError("monotone graph has non-finite w entry");

    MonotoneGraph g;
    g.dim_ = dim;
    if (dim == 1) {
        // Sort samples lexicographically; monotonicity is then w nondecreasing.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return v[a] != v[b] ? v[a] < v[b] : w[a] < w[b];
        });
        g.v_.resize(n);
        g.w_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            g.v_[i] = v[idx[i]];
            g.w_[i] = w[idx[i]];
        }
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (g.w_[i + 1] < g.w_[i])
                throw ConfigError("graph samples " + std::to_string(i) + " and " +
                                  std::to_string(i + 1) + " violate monotonicity");
    } else {
        g.v_ = std::move(v);
        g.w_ = std::move(w);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k)
                    s += (g.w_[j * d + k] - g.w_[i * d + k]) * (g.v_[j * d + k] - g.v_[i * d + k]);
                if (s < 0.0)
                    throw ConfigError("graph samples " + std::to_string(i) + " and " +
                                      std::to_string(j) + " violate monotonicity");
            }
    }
    g.record_constants();
    return g;
}

MonotoneGraph MonotoneGraph::from_potential(const convex::Potential& pot,
                                            std::span<const double> grid, double y) {
    std::vector<double> v, w;
    for (double x : grid) {
        convex::Interval s = pot.subdifferential(x, y);
        v.push_back(x);
        w.push_back(s.lo);
        if (s.hi > s.lo) {  // kink: keep both one-sided slopes
            v.push_back(x);
            w.push_back(s.hi);
        }
    }
    return from_samples(std::move(v), std::move(w), 1);
}

std::span<const double> MonotoneGraph::v(std::size_t i) const {
    const std::size_t d = static_cast<std::size_t>(dim_);
    return {v_.data() + i * d, d};
}

std::span<const double> MonotoneGraph::w(std::size_t i) const {
    const std::size_t d = static_cast<std::size_t>(dim_);
    return {w_.data() + i * d, d};
}

void MonotoneGraph::record_constants() {
    const std::size_t d = static_cast<std::size_t>(dim_);
    const std::size_t n = size();
    double k = 0.0, amin = kInf;
    std::vector<double> q(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
        double nv = 0.0, nw = 0.0, qi = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            nv += v_[i * d + c] * v_[i * d + c];
            nw += w_[i * d + c] * w_[i * d + c];
            qi += v_[i * d + c] * w_[i * d + c];
        }
        k = std::max(k, std::sqrt(nw) / (1.0 + std::sqrt(nv)));
        q[i] = qi;
        s[i] = nv + nw;
        amin = std::min(amin, (qi + 1.0) / (s[i] + 1.0));
    }
    growth_k_ = k;
    coerc_a_ = std::max(1e-9, 0.5 * amin);
    double b = 0.0;
    for (std::size_t i = 0; i < n; ++i) b = std::max(b, coerc_a_ * s[i] - q[i]);
    coerc_b_ = std::max(0.0, b);
}

double fitzpatrick_eval(const MonotoneGraph& g, std::span<const double> v,
                        std::span<const double> vp) {
    const std::size_t d = static_cast<std::size_t>(g.dim());
    if (v.size() != d || vp.size() != d)
        throw SolverError("fitzpatrick evaluation dimension mismatch");
    // <v',v> + max_i <v' - w_i, v_i - v>: the i-term vanishes identically at
    // sample i itself, which keeps graph-point residuals exactly zero.
    double best = -kInf;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto vi = g.v(i);
        auto wi = g.w(i);
        double t = 0.0;
        for (std::size_t c = 0; c < d; ++c) t += (vp[c] - wi[c]) * (vi[c] - v[c]);
        best = std::max(best, t);
    }
    return dot(vp, v) + best;
}

double fitzpatrick_eval(const MonotoneGraph& g, double v, double vp) {
    return fitzpatrick_eval(g, std::span<const double>(&v, 1), std::span<const double>(&vp, 1));
}

RepresentativeFn RepresentativeFn::fitzpatrick(MonotoneGraph graph) {
    RepresentativeFn r;
    r.kind_ = RepKind::FitzpatrickOverGraph;
    r.graph_ = std::move(graph);
    // Between adjacent scalar samples the discrete sup can dip below the
    // pairing by at most dv * dw / 4; that bounds legitimate negativity.
    double tol = 1e-12;
    if (r.graph_.dim() == 1) {
        auto v = r.graph_.flat_v();
        auto w = r.graph_.flat_w();
        for (std::size_t i = 0; i + 1 < v.size(); ++i)
            tol = std::max(tol, (v[i + 1] - v[i]) * (w[i + 1] - w[i]) / 4.0);
    } else {
        tol = 1e-9;
    }
    r.tol_ = tol;
    return r;
}

RepresentativeFn RepresentativeFn::fenchel(convex::Potential pot) {
    RepresentativeFn r;
    r.kind_ = RepKind::FenchelPair;
    r.pot_ = std::move(pot);
    r.tol_ = 1e-12;
    return r;
}

RepresentativeFn RepresentativeFn::with_tolerance(double tol) const {
    if (!(tol >= 0.0)) throw ConfigError("representative tolerance must be >= 0");
    RepresentativeFn r = *this;
    r.tol_ = tol;
    return r;
}

const MonotoneGraph& RepresentativeFn::graph() const {
    if (kind_ != RepKind::FitzpatrickOverGraph)
        throw SolverError("representative holds no graph");
    return graph_;
}

const convex::Potential& RepresentativeFn::potential() const {
    if (kind_ != RepKind::FenchelPair) throw SolverError("representative holds no potential");
    return pot_;
}

convex::Checked RepresentativeFn::value(double v, double vp, double y) const {
    if (kind_ == RepKind::FitzpatrickOverGraph) {
        if (graph_.dim() != 1) throw SolverError("scalar evaluation of a vector graph");
        return {fitzpatrick_eval(graph_, v, vp), false};
    }
    convex::Checked a = pot_.value_checked(v, y);
    convex::Checked b = pot_.conjugate_value(vp, y);
    return {a.value + b.value, a.clipped || b.clipped};
}

convex::Checked fenchel_rep_eval(const convex::ConjugatePair& pair, double v, double vp) {
    convex::Checked a = pair.primal.value_checked(v, pair.y);
    convex::Checked b = pair.dual.value_checked(vp, pair.y);
    return {a.value + b.value, a.clipped || b.clipped};
}

double nullmin_residual(const RepresentativeFn& rep, double v, double vp, double y) {
    convex::Checked val = rep.value(v, vp, y);
    if (val.clipped) return kInf;  // value is only a lower bound: cannot certify
    double r = val.value - v * vp;
    if (r < -rep.tolerance())
        throw ConsistencyError("representative dips " + format_double(-r) +
                               " below the pairing at (v, v') = (" + format_double(v) + ", " +
                               format_double(vp) + "); sampling too coarse (tolerance " +
                               format_double(rep.tolerance()) + ")");
    return r > 0.0 ? r : 0.0;
}

double representativeness_scan(const RepresentativeFn& rep, std::span<const ScanPair> pairs,
                               double y) {
    double worst = -kInf;
    for (const ScanPair& p : pairs) {
        convex::Checked val = rep.value(p.v, p.vp, y);
        worst = std::max(worst, p.v * p.vp - val.value);
    }
    return worst;
}

void write_graph_csv(const MonotoneGraph& g, std::ostream& os) {
    const std::size_t d = static_cast<std::size_t>(g.dim());
    os << (d == 1 ? "v,w" : "v1,v2,w1,w2") << "\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto vi = g.v(i);
        auto wi = g.w(i);
        for (std::size_t c = 0; c < d; ++c) os << format_double(vi[c]) << ",";
        for (std::size_t c = 0; c < d; ++c)
            os << format_double(wi[c]) << (c + 1 < d ? "," : "\n");
    }
}

MonotoneGraph read_graph_csv(std::istream& is) {
    std::string line;
    std::vector<double> v, w;
    int dim = 0;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto f = split_csv_line(line);
        if (dim == 0) {  // header decides the dimension
            if (f.size() >= 4 && f[0] == "v1") {
                dim = 2;
                continue;
            }
            if (f.size() >= 2 && f[0] == "v") {
                dim = 1;
                continue;
            }
            dim = (f.size() >= 4) ? 2 : 1;  // headerless: infer from arity
        }
        const std::size_t need = static_cast<std::size_t>(2 * dim);
        if (f.size() < need)
            throw IoError("graph CSV line " + std::to_string(lineno) + " needs " +
                          std::to_string(need) + " columns");
        for (int c = 0; c < dim; ++c) v.push_back(parse_double(f[static_cast<std::size_t>(c)]));
        for (int c = 0; c < dim; ++c)
            w.push_back(parse_double(f[static_cast<std::size_t>(dim + c)]));
    }
    if (dim == 0) throw IoError("graph CSV is empty");
    try {
        return MonotoneGraph::from_samples(std::move(v), std::move(w), dim);
    } catch (const ConfigError& e) {
        throw IoError(std::string("graph CSV rejected: ") + e.what());
    }
}

}  // namespace homoglab::fitz
