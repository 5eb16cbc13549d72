// Scalar convex potentials phi(v, y) with a microstructure coordinate y, their
// discrete Legendre transforms, subdifferential intervals, and Moreau envelopes.
// Analytic presets have the form  phi(v,y) = c(y)|v| + a(y)|v|^p / p  with a two-
// phase laminate coefficient; sampled potentials are piecewise linear on a grid.
#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace homoglab::convex {

struct Interval {
    double lo = 0.0, hi = 0.0;
    bool contains(double w, double tol = 0.0) const { return w >= lo - tol && w <= hi + tol; }
    double project(double w) const { return w < lo ? lo : (w > hi ? hi : w); }
    double distance(double w) const { return w < lo ? lo - w : (w > hi ? w - hi : 0.0); }
};

// A value that may have been clipped at the sampled domain boundary. Clipped
// results bound the true quantity from below; there is no sentinel float.
struct Checked {
    double value = 0.0;
    bool clipped = false;
};

// Piecewise-constant two-phase coefficient on the unit cell: value a1 on
// [0, theta), a2 on [theta, 1), extended 1-periodically.
struct PhaseCoeff {
    double a1 = 0.0, a2 = 0.0, theta = 0.5;
    double at(double y) const;
    double max() const { return a1 > a2 ? a1 : a2; }
    double min() const { return a1 < a2 ? a1 : a2; }
    double mean() const { return theta * a1 + (1.0 - theta) * a2; }
    bool uniform() const { return a1 == a2 || theta <= 0.0 || theta >= 1.0; }
    bool zero() const { return a1 == 0.0 && a2 == 0.0; }
};

class Potential {
  public:
    Potential() = default;  // quadratic(1.0)

    // Analytic presets.
    static Potential quadratic(double a);
    static Potential power(double a, double p);       // a|v|^p / p, p > 1
    static Potential absolute();                      // |v|
    static Potential two_phase(double a1, double a2, double theta);
    static Potential power_two_phase(double a1, double a2, double theta, double p);
    static Potential kinked(double c, double a);      // c|v| + a v^2 / 2
    static Potential kinked_two_phase(double c1, double c2, double a1, double a2, double theta);
    // Sampled potential; validates strict v ordering and convexity.
    static Potential from_samples(std::vector<double> v, std::vector<double> phi);
    static Potential from_samples(std::vector<double> v, std::vector<double> phi,
                                  std::vector<char> clipped);

    double value(double v, double y = 0.0) const;
    Checked value_checked(double v, double y = 0.0) const;
    // One-sided slopes [phi'(v-), phi'(v+)]; sampled potentials report the
    // inward slope at their hull endpoints.
    Interval subdifferential(double v, double y = 0.0) const;
    // Second derivative where it exists; 0 on the flat parts of sampled
    // potentials, and at a kink the Moreau helpers below take over.
    double curvature(double v, double y = 0.0) const;

    // prox_{lambda}(v) = argmin_u phi(u) + (u - v)^2 / (2 lambda), lambda > 0.
    double prox(double v, double lambda, double y = 0.0) const;
    double moreau_value(double v, double lambda, double y = 0.0) const;
    double moreau_slope(double v, double lambda, double y = 0.0) const;   // 1/lambda-Lipschitz
    double moreau_curvature(double v, double lambda, double y = 0.0) const;

    // Exact conjugate value sup_u (w u - phi(u, y)); clipped when the sup is
    // infinite (indicator case) or escapes a sampled hull.
    Checked conjugate_value(double w, double y = 0.0) const;

    bool y_dependent() const;
    bool smooth() const;          // C1 in v with locally bounded curvature
    bool is_quadratic() const;    // pure a(y) v^2 / 2
    bool is_sampled() const;
    double growth_exponent() const;  // p for analytic kinds, 1 for sampled tails
    double quadratic_coefficient(double y = 0.0) const;  // only for is_quadratic()
    double quadratic_coefficient_max() const;
    // c1, c2 with |phi(v,y)| <= c1 v^2 + c2 for quadratic-growth kinds.
    std::optional<std::pair<double, double>> quadratic_growth_constants() const;

    // Evaluation grid used by the discrete transform: sample nodes, or the
    // default symmetric grid [-R, R] for analytic kinds.
    std::vector<double> grid() const;
    Potential with_grid(double radius, int nodes) const;  // analytic kinds only
    Potential sampled(std::span<const double> grid, double y = 0.0) const;
    Potential y_average() const;  // integrates the coefficients over the cell

    // Sample accessors (sampled kind only).
    std::span<const double> nodes() const;
    std::span<const double> values() const;
    bool node_clipped(std::size_t i) const;

    std::string describe() const;

  private:
    friend Potential moreau_smooth(const Potential&, double);
    enum class Kind { Analytic, Sampled, Moreau };
    Kind kind_ = Kind::Analytic;
    // Analytic: c(y)|v| + a(y)|v|^p / p.
    PhaseCoeff kink_{};
    PhaseCoeff amp_{1.0, 1.0, 0.5};
    double p_ = 2.0;
    double grid_radius_ = 8.0;
    int grid_nodes_ = 1025;
    // Sampled.
    std::vector<double> sv_, sphi_;
    std::vector<char> sclip_;
    std::vector<double> slopes_;  // cached segment slopes
    // Moreau.
    std::shared_ptr<const Potential> base_;
    double lambda_ = 0.0;

    double segment_slope(std::size_t i) const { return slopes_[i]; }
    double prox_analytic(double v, double lambda, double y) const;
    double prox_sampled(double v, double lambda) const;
};

// Discrete Legendre transform of pot (sampled on its grid) onto dual_grid,
// by the monotone-slope sweep; ties resolve to the smallest maximizing index.
Potential conjugate(const Potential& pot, std::span<const double> dual_grid, double y = 0.0);

Interval subdifferential_interval(const Potential& pot, double v, double y = 0.0);

Potential moreau_smooth(const Potential& pot, double lambda);

// A primal potential with its tabulated conjugate and recorded coercivity
// constants: dual(w) >= L w^2 - M on the tabulated range, L > 0.
struct ConjugatePair {
    Potential primal;
    Potential dual;
    double L = 0.0, M = 0.0;
    double y = 0.0;
};
ConjugatePair make_conjugate_pair(const Potential& pot, std::span<const double> dual_grid,
                                  double y = 0.0);

// CSV with columns v, phi (sampled kind; analytic kinds are sampled first).
void write_samples_csv(const Potential& pot, std::ostream& os);
Potential read_samples_csv(std::istream& is);

}  // namespace homoglab::convex
