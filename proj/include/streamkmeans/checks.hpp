#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "streamkmeans/analysis.hpp"
#include "streamkmeans/engine.hpp"
#include "streamkmeans/objective.hpp"

namespace streamkm {

// Reusable verification suites backing both the CLI check subcommands and
// the acceptance gate. Probe instances are d=1 piecewise-constant densities,
// the family with an exact moment oracle.

inline std::vector<Distribution> exact_probe_instances() {
    std::vector<Distribution> v;
    v.emplace_back(PiecewiseConstant1D({0.0, 1.0}, {1.0}));
    // masses 0.3 + 0.6 + 0.1
    v.emplace_back(PiecewiseConstant1D({-1.0, -0.25, 0.5, 1.0}, {0.4, 0.8, 0.2}));
    v.emplace_back(PiecewiseConstant1D({0.0, 0.5, 1.25}, {1.2, 8.0 / 15.0}));
    return v;
}

inline Centers random_centers_1d(const Distribution& dist, int k, Rng& rng,
                                 double min_sep = 0.02) {
    const auto* p = dist.exact1d();
    const double lo = p->breakpoints().front(), hi = p->breakpoints().back();
    Centers w(k, 1);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        for (int i = 0; i < k; ++i)
            w.x[i] = rng.uniform(lo + 0.01 * (hi - lo), hi - 0.01 * (hi - lo));
        if (k < 2 || min_separation(w).value >= min_sep) return w;
    }
    throw contract_error("random_centers_1d: could not separate centers");
}

// ---- gradient vs finite differences -----------------------------------------

struct GradientCheckReport {
    int probes = 0;
    double h = 1e-5;
    double tolerance = 1e-5;
    double max_error = 0.0;
    int failures = 0;
    std::string worst;
};

inline GradientCheckReport gradient_check_suite(int probes, double h, double tol,
                                                std::uint64_t seed) {
    GradientCheckReport rep;
    rep.probes = probes;
    rep.h = h;
    rep.tolerance = tol;
    const auto instances = exact_probe_instances();
    MomentOracle oracle = MomentOracle::exact();
    Rng rng(seed, 1);
    for (int t = 0; t < probes; ++t) {
        const auto& dist = instances[t % instances.size()];
        const int k = 1 + (t / int(instances.size())) % 3;
        const Centers w = random_centers_1d(dist, k, rng);
        const auto g = gradient(dist, w, oracle);
        const auto fd = fd_gradient(dist, w, oracle, h);
        for (std::size_t j = 0; j < g.g.size(); ++j) {
            const double err = std::abs(g.g[j] - fd.g[j]);
            if (err > rep.max_error) {
                rep.max_error = err;
                rep.worst = "probe " + std::to_string(t) + " k=" + std::to_string(k) +
                            " coord " + std::to_string(j) + " analytic=" +
                            format_double(g.g[j]) + " fd=" + format_double(fd.g[j]);
            }
            if (err >= tol) ++rep.failures;
        }
    }
    return rep;
}

// ---- surrogate domination and quadratic bounds -------------------------------

struct SurrogateCheckReport {
    int pairs = 0;
    double tolerance = 1e-12;
    int surrogate_violations = 0;   // f(w) > g(w; w') + tol
    int quad_violations = 0;        // f(w+) > bound + tol (either bound)
    int ordering_violations = 0;    // hessian bound > identity bound
    double worst_surrogate_margin = 0.0; // min of g - f
    double worst_quad_margin = 0.0;
};

inline SurrogateCheckReport surrogate_check_suite(int pairs, double tol,
                                                  std::uint64_t seed) {
    SurrogateCheckReport rep;
    rep.pairs = pairs;
    rep.tolerance = tol;
    rep.worst_surrogate_margin = std::numeric_limits<double>::infinity();
    rep.worst_quad_margin = std::numeric_limits<double>::infinity();
    const auto instances = exact_probe_instances();
    MomentOracle oracle = MomentOracle::exact();
    Rng rng(seed, 2);
    for (int t = 0; t < pairs; ++t) {
        const auto& dist = instances[t % instances.size()];
        const int k = 1 + (t / int(instances.size())) % 3;
        const Centers w = random_centers_1d(dist, k, rng);
        const Centers w_ref = random_centers_1d(dist, k, rng);

        const double f_w = cost(dist, w, oracle).value;
        const double g_w = surrogate_cost(dist, w, w_ref, oracle).value;
        rep.worst_surrogate_margin = std::min(rep.worst_surrogate_margin, g_w - f_w);
        if (f_w > g_w + tol) ++rep.surrogate_violations;

        // quadratic bound probe: w_plus within 0.2 of w
        Centers w_plus = w;
        double step2 = 0.0;
        std::vector<double> dir(w.x.size());
        for (auto& v : dir) {
            v = rng.uniform(-1.0, 1.0);
            step2 += v * v;
        }
        const double radius = rng.uniform(0.0, 0.2);
        const double scale = step2 > 0.0 ? radius / std::sqrt(step2) : 0.0;
        for (std::size_t j = 0; j < dir.size(); ++j) w_plus.x[j] = w.x[j] + dir[j] * scale;
        if (w.k >= 2 && min_separation(w_plus).value < kMinUsableSeparation) continue;

        const auto qb = quadratic_bound(dist, w_plus, w, oracle);
        const double f_plus = cost(dist, w_plus, oracle).value;
        rep.worst_quad_margin =
            std::min(rep.worst_quad_margin, qb.hessian_bound - f_plus);
        if (f_plus > qb.hessian_bound + tol) ++rep.quad_violations;
        if (f_plus > qb.identity_bound + tol) ++rep.quad_violations;
        if (qb.hessian_bound > qb.identity_bound + tol) ++rep.ordering_violations;
    }
    return rep;
}

// ---- per-step descent inequality ---------------------------------------------

struct DescentCheckReport {
    std::uint64_t steps = 0;
    double min_margin = 0.0; // min over steps of f(n) - A + (-B + C) - f(n+1)
    std::uint64_t violations = 0;
    double tolerance = 1e-10;
};

// full-stride audit: every consecutive pair of rows is one step
inline DescentCheckReport descent_check(const Trace& trace, double tol = 1e-10) {
    DescentCheckReport rep;
    rep.tolerance = tol;
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < trace.rows.size(); ++i) {
        const auto& cur = trace.rows[i];
        const auto& nxt = trace.rows[i + 1];
        if (nxt.n != cur.n + 1)
            throw input_error("descent_check: trace must be full-stride");
        const double margin = cur.f - cur.A - cur.B + cur.C - nxt.f;
        rep.min_margin = std::min(rep.min_margin, margin);
        if (margin < -tol) ++rep.violations;
        ++rep.steps;
    }
    return rep;
}

// Monte Carlo variant: the margin is allowed an n-sigma band from the noise
// of the two cost estimates (the dominant error on these audits). A band is
// crossed at its coverage rate even when the inequality holds, so callers
// assert on the count, not on zero crossings.
inline DescentCheckReport descent_check_mc(const Trace& trace, double n_sigma = 3.0) {
    DescentCheckReport rep;
    rep.tolerance = 0.0;
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < trace.rows.size(); ++i) {
        const auto& cur = trace.rows[i];
        const auto& nxt = trace.rows[i + 1];
        if (nxt.n != cur.n + 1)
            throw input_error("descent_check_mc: trace must be full-stride");
        const double sigma =
            std::sqrt(cur.f_se * cur.f_se + nxt.f_se * nxt.f_se);
        const double margin = cur.f - cur.A - cur.B + cur.C - nxt.f;
        rep.min_margin = std::min(rep.min_margin, margin + n_sigma * sigma);
        if (margin < -n_sigma * sigma) ++rep.violations;
        ++rep.steps;
    }
    return rep;
}

// ---- standard instances used by the CI runs ----------------------------------

inline Distribution uniform01() {
    return Distribution(PiecewiseConstant1D({0.0, 1.0}, {1.0}));
}

inline Distribution gauss_mix_2d() {
    return Distribution(TruncatedGaussianMixtureD(
        {0.5, 0.5}, {{-0.4, -0.2}, {0.45, 0.3}}, {0.22, 0.18}, 1.0));
}

inline RateSchedule generalized_schedule(double alpha = 0.7, double beta = 0.8) {
    RateSchedule s;
    s.policy = Policy::generalized_lloyd;
    s.alpha = alpha;
    s.beta = beta;
    return s;
}

} // namespace streamkm
