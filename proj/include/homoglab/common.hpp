// Shared utilities: error taxonomy, float text round-trip, CSV helpers, hashing,
// and a monotone cubic interpolant used by the table-backed flux law.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace homoglab {

// Error taxonomy maps onto CLI exit codes: config -> 2, solver -> 3, io -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
// Raised when a certified quantity violates its own invariant (e.g. a residual
// more negative than the representative's tolerance allows).
struct ConsistencyError : std::runtime_error {
    explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shortest text form of a double that parses back to the identical bits.
std::string format_double(double x);
double parse_double(std::string_view s);  // throws IoError on junk

// Splits one CSV line; trims surrounding blanks from each field.
std::vector<std::string> split_csv_line(std::string_view line);

// FNV-1a over bytes; used to stamp config identity into artifacts.
std::uint64_t fnv1a(std::string_view bytes);
std::string to_hex(std::uint64_t v);

// Fritsch-Carlson monotone cubic through (x_i, f_i); x strictly increasing.
// Preserves monotone data and never overshoots; evaluation outside the hull
// throws SolverError (callers pin their table ranges up front).
class MonotoneCubic {
  public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> f);
    double value(double x) const;
    double derivative(double x) const;
    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }
    bool empty() const { return x_.empty(); }

  private:
    std::size_t interval(double x) const;
    std::vector<double> x_, f_, d_;  // nodes, values, node slopes
};

}  // namespace homoglab
