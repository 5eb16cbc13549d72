// Independent reference computations for the test suite. These deliberately
// avoid the library's algorithms: conjugates by brute-force sup on a fine grid,
// linear systems by dense Gaussian elimination, cell minimizers by projected
// gradient descent. Expected values frozen in the tests come from these.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

// sup_v (w v - phi(v)) over a fine uniform grid on [-R, R].
inline double brute_conjugate(const std::function<double(double)>& phi, double w, double R,
                              std::size_t n = 400001) {
    double best = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
        double v = -R + 2.0 * R * static_cast<double>(i) / static_cast<double>(n - 1);
        best = std::max(best, w * v - phi(v));
    }
    return best;
}

// inf_u (phi(u) + (v-u)^2 / (2 lambda)) over a fine grid.
inline double brute_moreau(const std::function<double(double)>& phi, double v, double lambda,
                           double R, std::size_t n = 400001) {
    double best = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
        double u = -R + 2.0 * R * static_cast<double>(i) / static_cast<double>(n - 1);
        best = std::min(best, phi(u) + (v - u) * (v - u) / (2.0 * lambda));
    }
    return best;
}

// Dense Gaussian elimination with partial pivoting; A is row-major n x n.
inline std::vector<double> dense_solve(std::vector<double> A, std::vector<double> b) {
    const std::size_t n = b.size();
    if (A.size() != n * n) throw std::invalid_argument("dense_solve shape");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(A[i * n + k]) > std::abs(A[p * n + k])) p = i;
        if (A[p * n + k] == 0.0) throw std::runtime_error("dense_solve singular");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(A[p * n + j], A[k * n + j]);
            std::swap(b[p], b[k]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            double m = A[i * n + k] / A[k * n + k];
            if (m == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) A[i * n + j] -= m * A[k * n + j];
            b[i] -= m * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= A[ii * n + j] * x[j];
        x[ii] = s / A[ii * n + ii];
    }
    return x;
}

// Minimizes (1/M) sum_j F_j(xi + g_j) subject to sum_j g_j = 0 by projected
// gradient descent with a fixed small step; slow but independent of the
// library's Newton path. F provides values only.
inline std::vector<double> brute_cell_minimizer(const std::function<double(std::size_t, double)>& F,
                                                double xi, std::size_t M, double step,
                                                std::size_t iters) {
    std::vector<double> g(M, 0.0);
    const double eps = 1e-6;
    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<double> grad(M);
        double mean = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            grad[j] = (F(j, xi + g[j] + eps) - F(j, xi + g[j] - eps)) / (2.0 * eps);
            mean += grad[j];
        }
        mean /= static_cast<double>(M);
        for (std::size_t j = 0; j < M; ++j) g[j] -= step * (grad[j] - mean);
    }
    return g;
}

// Closed-form 1D laminate effective coefficient for a |x|^p/p layered medium.
inline double laminate_across(double a1, double a2, double theta, double p) {
    double e = 1.0 / (p - 1.0);
    double m = theta * std::pow(a1, -e) + (1.0 - theta) * std::pow(a2, -e);
    return std::pow(m, -(p - 1.0));
}

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace oracle
