// Sampled maximal monotone graphs and representative functions for the
// null-minimization certificate: a representative f satisfies f(v,v') >= <v',v>
// with equality exactly on the graph, so the inclusion v' in alpha(v) is
// certified by a vanishing residual f(v,v') - <v',v>.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "homoglab/convex.hpp"

namespace homoglab::fitz {

// Finite sample (v_i, w_i) of a monotone graph in R^N x R^N, N in {1, 2}.
// Stored flat: sample i occupies components [N*i, N*i+N).
class MonotoneGraph {
  public:
    static MonotoneGraph from_samples(std::vector<double> v, std::vector<double> w, int dim = 1);
    // Samples w in the subdifferential of pot along the given grid; kinks
    // contribute both one-sided slopes.
    static MonotoneGraph from_potential(const convex::Potential& pot, std::span<const double> grid,
                                        double y = 0.0);

    int dim() const { return dim_; }
    std::size_t size() const { return v_.size() / static_cast<std::size_t>(dim_); }
    std::span<const double> v(std::size_t i) const;
    std::span<const double> w(std::size_t i) const;
    std::span<const double> flat_v() const { return v_; }
    std::span<const double> flat_w() const { return w_; }

    double growth_k() const { return growth_k_; }       // |w_i| <= k (1 + |v_i|)
    double coercivity_a() const { return coerc_a_; }    // <w,v> >= a(|w|^2+|v|^2) - b on samples
    double coercivity_b() const { return coerc_b_; }

  private:
    MonotoneGraph() = default;
    void record_constants();
    int dim_ = 1;
    std::vector<double> v_, w_;
    double growth_k_ = 0.0, coerc_a_ = 0.0, coerc_b_ = 0.0;
};

// f(v, v') = <v',v> + max_i <v' - w_i, v_i - v>; exact at sampled graph points,
// an inner approximation elsewhere.
double fitzpatrick_eval(const MonotoneGraph& g, std::span<const double> v,
                        std::span<const double> vp);
double fitzpatrick_eval(const MonotoneGraph& g, double v, double vp);  // scalar case

enum class RepKind { FitzpatrickOverGraph, FenchelPair };

// Either the discrete Fitzpatrick function of a sampled graph or the Fenchel
// sum phi(v) + phi*(v') of a potential; both certify inclusions through the
// null-minimization residual. The tolerance bounds how far below <v',v> a
// coarse sampling may legitimately dip.
class RepresentativeFn {
  public:
    static RepresentativeFn fitzpatrick(MonotoneGraph graph);
    static RepresentativeFn fenchel(convex::Potential pot);

    RepKind kind() const { return kind_; }
    double tolerance() const { return tol_; }
    RepresentativeFn with_tolerance(double tol) const;
    const MonotoneGraph& graph() const;
    const convex::Potential& potential() const;

    convex::Checked value(double v, double vp, double y = 0.0) const;

  private:
    RepresentativeFn() = default;
    RepKind kind_ = RepKind::FenchelPair;
    MonotoneGraph graph_ = MonotoneGraph::from_samples({0.0}, {0.0});
    convex::Potential pot_;
    double tol_ = 1e-12;
};

// phi(v) + phi*(v') for a conjugate pair; clip flags propagate from the dual.
convex::Checked fenchel_rep_eval(const convex::ConjugatePair& pair, double v, double vp);

// value(v,v') - <v',v>, clamped at zero from below; dips beyond -tolerance
// raise ConsistencyError (the sampling is too coarse to certify).
double nullmin_residual(const RepresentativeFn& rep, double v, double vp, double y = 0.0);

// max over the scan pairs of <v',v> - value; <= 0 certifies representativeness
// on the scanned set.
struct ScanPair {
    double v = 0.0, vp = 0.0;
};
double representativeness_scan(const RepresentativeFn& rep, std::span<const ScanPair> pairs,
                               double y = 0.0);

// CSV columns v, w (dim 1) or v1, v2, w1, w2 (dim 2).
void write_graph_csv(const MonotoneGraph& g, std::ostream& os);
MonotoneGraph read_graph_csv(std::istream& is);

}  // namespace homoglab::fitz
