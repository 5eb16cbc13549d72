#include "homoglab/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

namespace homoglab {

std::string format_double(double x) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
    // Tolerate leading blanks; from_chars itself does not.
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) throw IoError("empty numeric field");
    std::size_t e = s.find_last_not_of(" \t\r");
    s = s.substr(b, e - b + 1);
    double x = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw IoError("bad numeric field '" + std::string(s) + "'");
    return x;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t c = line.find(',', pos);
        std::string_view f = (c == std::string_view::npos) ? line.substr(pos) : line.substr(pos, c - pos);
        std::size_t b = f.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) {
            out.emplace_back();
        } else {
            std::size_t e = f.find_last_not_of(" \t\r");
            out.emplace_back(f.substr(b, e - b + 1));
        }
        if (c == std::string_view::npos) break;
        pos = c + 1;
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> f)
    : x_(std::move(x)), f_(std::move(f)) {
    const std::size_t n = x_.size();
    if (n < 2 || f_.size() != n) throw SolverError("monotone cubic needs >= 2 matched nodes");
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (!(x_[i] < x_[i + 1])) throw SolverError("monotone cubic nodes must increase");

    std::vector<double> h(n - 1), s(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        s[i] = (f_[i + 1] - f_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (s[i - 1] * s[i] <= 0.0) {
            d_[i] = 0.0;  // local extremum of the data
        } else {
            double w1 = 2.0 * h[i] + h[i - 1];
            double w2 = h[i] + 2.0 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
        }
    }
    // Shape-preserving one-sided end slopes.
    auto end_slope = [](double h0, double h1, double s0, double s1) {
        double d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
        if (d * s0 <= 0.0) return 0.0;
        if (s0 * s1 <= 0.0 && std::abs(d) > 3.0 * std::abs(s0)) return 3.0 * s0;
        return d;
    };
    if (n == 2) {
        d_[0] = d_[1] = s[0];
    } else {
        d_[0] = end_slope(h[0], h[1], s[0], s[1]);
        d_[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
    }
}

std::size_t MonotoneCubic::interval(double x) const {
    if (x < x_.front() || x > x_.back())
        throw SolverError("monotone cubic evaluated outside table range [" + format_double(x_.front()) +
                          ", " + format_double(x_.back()) + "] at " + format_double(x));
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - x_.begin());
    if (i > 0) --i;
    if (i + 1 >= x_.size()) i = x_.size() - 2;
    return i;
}

double MonotoneCubic::value(double x) const {
    std::size_t i = interval(x);
    double h = x_[i + 1] - x_[i];
    double t = (x - x_[i]) / h;
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * f_[i] + h * h10 * d_[i] + h01 * f_[i + 1] + h * h11 * d_[i + 1];
}

double MonotoneCubic::derivative(double x) const {
    std::size_t i = interval(x);
    double h = x_[i + 1] - x_[i];
    double t = (x - x_[i]) / h;
    double t2 = t * t;
    double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
    double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
    return g00 * f_[i] + g10 * d_[i] + g01 * f_[i + 1] + g11 * d_[i + 1];
}

}  // namespace homoglab
