#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "streamkmeans/core.hpp"
#include "streamkmeans/distributions.hpp"

namespace streamkm {

struct CostValue {
    double value = 0.0;
    bool monte_carlo = false;
    std::optional<double> stderr_; // MC only
};

struct GradientValue {
    int k = 0;
    int d = 0;
    std::vector<double> g; // k*d, per-center blocks
    std::vector<double> norms;
    double total_norm = 0.0;

    std::span<const double> block(int i) const {
        return {g.data() + std::size_t(i) * d, std::size_t(d)};
    }
};

namespace detail {

// cost with cells frozen at the tuple the moments were computed from,
// evaluated at w: (1/2) sum_i ||w_i||^2 P_i - 2 <w_i, f1_i> + s2_i
inline double quadratic_cost_from_moments(const Moments& mom, const Centers& w) {
    double f = 0.0;
    for (int i = 0; i < w.k; ++i) {
        const auto wi = w.point(i);
        const auto f1 = mom.first_of(i);
        double wi2 = 0.0, dot = 0.0;
        for (int j = 0; j < w.d; ++j) {
            wi2 += wi[j] * wi[j];
            dot += wi[j] * f1[j];
        }
        f += wi2 * mom.mass[i] - 2.0 * dot + mom.second[i];
    }
    return 0.5 * f;
}

inline GradientValue gradient_from_moments(const Moments& mom, const Centers& w) {
    GradientValue gv;
    gv.k = w.k;
    gv.d = w.d;
    gv.g.assign(std::size_t(w.k) * w.d, 0.0);
    gv.norms.assign(w.k, 0.0);
    double tot = 0.0;
    for (int i = 0; i < w.k; ++i) {
        const auto wi = w.point(i);
        const auto f1 = mom.first_of(i);
        double n2 = 0.0;
        for (int j = 0; j < w.d; ++j) {
            // P_i * (w_i - M_i); zero-mass cells contribute zero
            const double gij = mom.mass[i] * wi[j] - f1[j];
            gv.g[std::size_t(i) * w.d + j] = gij;
            n2 += gij * gij;
        }
        gv.norms[i] = std::sqrt(n2);
        tot += n2;
    }
    gv.total_norm = std::sqrt(tot);
    return gv;
}

} // namespace detail

inline CostValue cost(const Distribution& dist, const Centers& w, MomentOracle& oracle) {
    require_usable(w, "cost");
    const auto mom = oracle.evaluate(dist, w);
    CostValue cv;
    cv.value = detail::quadratic_cost_from_moments(mom, w);
    cv.monte_carlo = mom.monte_carlo;
    if (mom.monte_carlo) cv.stderr_ = mom.cost_se;
    return cv;
}

inline GradientValue gradient(const Distribution& dist, const Centers& w,
                              MomentOracle& oracle) {
    require_usable(w, "gradient");
    return detail::gradient_from_moments(oracle.evaluate(dist, w), w);
}

/// Central finite differences of cost(), coordinate-wise. Requires the exact
/// oracle: MC noise swamps the differences at usable step sizes.
inline GradientValue fd_gradient(const Distribution& dist, const Centers& w,
                                 MomentOracle& oracle, double h) {
    if (oracle.method() != MomentOracle::Method::exact)
        throw capability_error("fd_gradient: exact oracle required");
    if (!(h > 0.0)) throw input_error("fd_gradient: step must be positive");
    require_usable(w, "fd_gradient");
    if (w.k >= 2 && min_separation(w).value <= 2.0 * h)
        throw input_error("fd_gradient: step too large, probes would cross degeneracy");

    GradientValue gv;
    gv.k = w.k;
    gv.d = w.d;
    gv.g.assign(std::size_t(w.k) * w.d, 0.0);
    gv.norms.assign(w.k, 0.0);
    Centers probe = w;
    double tot = 0.0;
    for (int i = 0; i < w.k; ++i) {
        double n2 = 0.0;
        for (int j = 0; j < w.d; ++j) {
            const std::size_t idx = std::size_t(i) * w.d + j;
            const double orig = probe.x[idx];
            probe.x[idx] = orig + h;
            const double fp = cost(dist, probe, oracle).value;
            probe.x[idx] = orig - h;
            const double fm = cost(dist, probe, oracle).value;
            probe.x[idx] = orig;
            const double gij = (fp - fm) / (2.0 * h);
            gv.g[idx] = gij;
            n2 += gij * gij;
        }
        gv.norms[i] = std::sqrt(n2);
        tot += n2;
    }
    gv.total_norm = std::sqrt(tot);
    return gv;
}

/// g(w; w_ref): cost with Voronoi cells frozen at w_ref, quadratic in w.
inline CostValue surrogate_cost(const Distribution& dist, const Centers& w,
                                const Centers& w_ref, MomentOracle& oracle) {
    require_usable(w_ref, "surrogate_cost");
    if (w.k != w_ref.k || w.d != w_ref.d)
        throw input_error("surrogate_cost: w and w_ref shapes differ");
    const auto mom = oracle.evaluate(dist, w_ref);
    CostValue cv;
    cv.value = detail::quadratic_cost_from_moments(mom, w);
    cv.monte_carlo = mom.monte_carlo;
    return cv;
}

// analytic gradient of the surrogate in its first argument:
// P_i(w_ref) * (w_i - M_i(w_ref)); tangent to gradient() at w = w_ref
inline GradientValue surrogate_gradient(const Distribution& dist, const Centers& w,
                                        const Centers& w_ref, MomentOracle& oracle) {
    require_usable(w_ref, "surrogate_gradient");
    return detail::gradient_from_moments(oracle.evaluate(dist, w_ref), w);
}

struct QuadraticBound {
    double hessian_bound = 0.0;  // block-diagonal Hessian P_i(w) * I
    double identity_bound = 0.0; // spectral relaxation, P_i <= 1
};

/// Both quadratic upper bounds of cost(w_plus) expanded around w. The
/// Hessian-weighted bound equals the surrogate g(w_plus; w); the identity
/// bound replaces the Hessian with I and is never smaller.
inline QuadraticBound quadratic_bound(const Distribution& dist, const Centers& w_plus,
                                      const Centers& w, MomentOracle& oracle) {
    require_usable(w, "quadratic_bound");
    if (w.k != w_plus.k || w.d != w_plus.d)
        throw input_error("quadratic_bound: shapes differ");
    const auto mom = oracle.evaluate(dist, w);
    const double f = detail::quadratic_cost_from_moments(mom, w);
    const auto grad = detail::gradient_from_moments(mom, w);

    double lin = 0.0, qh = 0.0, qi = 0.0;
    for (int i = 0; i < w.k; ++i) {
        double di2 = 0.0;
        for (int j = 0; j < w.d; ++j) {
            const std::size_t idx = std::size_t(i) * w.d + j;
            const double delta = w_plus.x[idx] - w.x[idx];
            lin += grad.g[idx] * delta;
            di2 += delta * delta;
        }
        qh += mom.mass[i] * di2;
        qi += di2;
    }
    QuadraticBound qb;
    qb.hessian_bound = f + lin + 0.5 * qh;
    qb.identity_bound = f + lin + 0.5 * qi;
    return qb;
}

} // namespace streamkm
