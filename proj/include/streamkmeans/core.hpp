#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "streamkmeans/errors.hpp"

namespace streamkm {

// Operations below refuse tuples closer together than this: the moment
// oracles return garbage on nearly coincident centers, and the engine never
// produces such states.
inline constexpr double kMinUsableSeparation = 1e-9;

/// A tuple of k centers in R^d, stored row-major.
struct Centers {
    int k = 0;
    int d = 0;
    std::vector<double> x; // k*d values

    Centers() = default;
    Centers(int k_, int d_) : k(k_), d(d_), x(std::size_t(k_) * d_, 0.0) {
        if (k_ < 1 || d_ < 1) throw input_error("Centers: k and d must be >= 1");
    }

    std::span<const double> point(int i) const {
        return {x.data() + std::size_t(i) * d, std::size_t(d)};
    }
    std::span<double> point(int i) {
        return {x.data() + std::size_t(i) * d, std::size_t(d)};
    }
};

struct Assignment {
    int index = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

inline double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

namespace detail {

// Returns (index, tie). Ties are exact float equality of squared distances;
// the lowest index wins so runs are reproducible. No tolerance: boundaries
// carry no mass under a density, so the rule only affects reproducibility.
inline std::pair<int, bool> nearest_center_impl(const Centers& w, std::span<const double> x) {
    if (int(x.size()) != w.d)
        throw input_error("nearest_center: point dimension does not match centers");
    int best = 0;
    bool tie = false;
    double best_d2 = squared_distance(w.point(0), x);
    for (int i = 1; i < w.k; ++i) {
        const double d2 = squared_distance(w.point(i), x);
        if (d2 < best_d2) {
            best = i;
            best_d2 = d2;
            tie = false;
        } else if (d2 == best_d2) {
            tie = true;
        }
    }
    return {best, tie};
}

} // namespace detail

inline Assignment nearest_center(const Centers& w, std::span<const double> x) {
    return Assignment{detail::nearest_center_impl(w, x).first};
}

struct Separation {
    double value = 0.0;
    bool degenerate = false; // some pair coincides exactly
};

inline Separation min_separation(const Centers& w) {
    if (w.k < 2) throw input_error("min_separation: needs k >= 2 (no pairs)");
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < w.k; ++i)
        for (int j = i + 1; j < w.k; ++j)
            best = std::min(best, squared_distance(w.point(i), w.point(j)));
    const double v = std::sqrt(best);
    return Separation{v, v == 0.0};
}

inline bool in_support_ball(const Centers& w, double R) {
    if (!(R > 0.0)) throw input_error("in_support_ball: R must be positive");
    for (int i = 0; i < w.k; ++i)
        if (norm(w.point(i)) > R) return false;
    return true;
}

inline void require_usable(const Centers& w, const char* who) {
    if (w.k >= 2 && min_separation(w).value < kMinUsableSeparation)
        throw input_error(std::string(who) + ": centers are (near-)degenerate");
}

// ---- plain-text row format: "k d v11 v12 ... vkd" --------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_centers_row(const Centers& w) {
    std::string out = std::to_string(w.k) + " " + std::to_string(w.d);
    for (double v : w.x) {
        out += ' ';
        out += format_double(v);
    }
    return out;
}

inline Centers parse_centers_row(const std::string& row) {
    std::istringstream in(row);
    int k = 0, d = 0;
    if (!(in >> k >> d) || k < 1 || d < 1)
        throw input_error("parse_centers_row: expected 'k d v11 ... vkd'");
    Centers w(k, d);
    for (auto& v : w.x)
        if (!(in >> v)) throw input_error("parse_centers_row: too few coordinates");
    double extra;
    if (in >> extra) throw input_error("parse_centers_row: trailing values");
    return w;
}

} // namespace streamkm
