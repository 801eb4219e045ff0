#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "streamkmeans/engine.hpp"
#include "streamkmeans/objective.hpp"

namespace streamkm {

struct AnalysisConfig {
    double r = std::log(2.0);   // horizon budget
    double epsilon = 0.01;      // gradient-level threshold
    double epsilon0 = 0.1;      // outer threshold, must exceed epsilon
    int k = 2;
    double R = 1.0;
    double L = 1.0;             // Lipschitz estimate (lipschitz_probe)
    int concentration_runs = 200;

    void validate() const {
        if (!(r > 0.0)) throw config_error("analysis: r must be positive");
        if (!(epsilon < epsilon0))
            throw config_error("analysis: epsilon must be below epsilon0");
    }
    double c() const { return std::max(1.0, 256.0 * k * R * L); }
};

// ---- horizon function T_r ---------------------------------------------------

/// T_r(m): the unique T with sum_{m<=n<T} 1/n <= r < sum_{m<=n<=T} 1/n,
/// found by direct partial summation. For r < 1/m the left sum is empty and
/// T_r(m) = m.
inline std::uint64_t horizon(double r, std::uint64_t m) {
    if (!(r > 0.0)) throw input_error("horizon: r must be positive");
    if (m < 2) throw input_error("horizon: m must be >= 2");
    std::uint64_t T = m;
    double partial = 0.0;
    for (;;) {
        const double next = partial + 1.0 / double(T);
        if (r < next) return T;
        partial = next;
        ++T;
    }
}

struct HarmonicBounds {
    double lower = 0.0; // log(m'/m)
    double sum = 0.0;   // sum_{m<=n<m'} 1/n
    double upper = 0.0; // log((m'-1)/(m-1))
};

inline HarmonicBounds harmonic_bounds(std::uint64_t m, std::uint64_t mp) {
    if (!(1 < m && m < mp))
        throw input_error("harmonic_bounds: need 1 < m < m'");
    HarmonicBounds hb;
    hb.lower = std::log(double(mp) / double(m));
    hb.upper = std::log(double(mp - 1) / double(m - 1));
    for (std::uint64_t n = m; n < mp; ++n) hb.sum += 1.0 / double(n);
    return hb;
}

// ---- horizon / harmonic sweeps ---------------------------------------------

struct HorizonSweepResult {
    std::uint64_t checked = 0;
    std::uint64_t lower_violations = 0;   // alpha(m-1) <= T-m, as stated
    std::uint64_t upper_violations = 0;   // T-m <= alpha m
    std::uint64_t corrected_violations = 0; // alpha(m-1) - 1 < T-m
    std::string first_lower_violation;
};

// Sweeps the stated bounds alpha(m-1) <= T_r(m)-m <= alpha*m with
// alpha = e^r - 1, plus the integer-granularity-corrected lower bound
// alpha(m-1) - 1 < T_r(m) - m. The strict lower bound is known to fail for
// small budgets r: T_r(m) = m whenever r < 1/m, yet alpha(m-1) > 0.
inline HorizonSweepResult horizon_bounds_sweep(double r, std::uint64_t m_lo,
                                               std::uint64_t m_hi) {
    HorizonSweepResult res;
    const double alpha = std::exp(r) - 1.0;
    for (std::uint64_t m = m_lo; m <= m_hi; ++m) {
        const std::uint64_t T = horizon(r, m);
        const double diff = double(T - m);
        ++res.checked;
        if (!(alpha * double(m - 1) <= diff)) {
            if (res.lower_violations == 0)
                res.first_lower_violation =
                    "m=" + std::to_string(m) + " T=" + std::to_string(T) +
                    " T-m=" + std::to_string(T - m) +
                    " alpha(m-1)=" + format_double(alpha * double(m - 1));
            ++res.lower_violations;
        }
        if (!(diff <= alpha * double(m))) ++res.upper_violations;
        if (!(alpha * double(m - 1) - 1.0 < diff)) ++res.corrected_violations;
    }
    return res;
}

struct HarmonicSweepResult {
    std::uint64_t checked = 0;
    std::uint64_t violations = 0;
};

inline HarmonicSweepResult harmonic_sweep(std::uint64_t m_lo, std::uint64_t m_hi) {
    HarmonicSweepResult res;
    for (std::uint64_t m = m_lo; m <= m_hi; ++m) {
        double sum = 0.0;
        for (std::uint64_t mp = m + 1; mp <= 2 * m; ++mp) {
            sum += 1.0 / double(mp - 1);
            const double lo = std::log(double(mp) / double(m));
            const double hi = std::log(double(mp - 1) / double(m - 1));
            ++res.checked;
            if (!(lo <= sum && sum <= hi)) ++res.violations;
        }
    }
    return res;
}

// ---- accumulated-rate bound (window sums vs the 16k bound) -----------------

struct RateBoundCheck {
    std::uint64_t n = 0;
    bool qualifying = false;  // e <= s_n + 1 <= n/2
    std::string skip_reason;
    double observed = 0.0;    // sum_j sum_{n0 <= n' < n} H_j^(n'+1)
    double bound = 0.0;       // 16k/t_{n0} + 16k s_n log(s_n) / n
    double margin = 0.0;      // bound - observed (>= 0 expected)
};

inline RateBoundCheck accumulated_rate_bound_check(const Trace& trace,
                                                   const RateSchedule& sched,
                                                   std::uint64_t n) {
    if (trace.cum_H.empty())
        throw input_error("accumulated_rate_bound_check: trace lacks kinematics");
    if (n > trace.n_steps)
        throw input_error("accumulated_rate_bound_check: checkpoint beyond trace");
    RateBoundCheck chk;
    chk.n = n;
    const std::uint64_t s_n = std::min(n, s_schedule(n, sched.alpha));
    if (!(std::exp(1.0) <= double(s_n + 1))) {
        chk.skip_reason = "s_n + 1 < e";
        return chk;
    }
    if (!(double(s_n + 1) <= double(n) / 2.0)) {
        chk.skip_reason = "s_n + 1 > n/2";
        return chk;
    }
    chk.qualifying = true;
    const std::uint64_t n0 = n - s_n;
    const double t_n0 = double(t_schedule(n0, sched.beta));
    const auto at_n = trace.cum_H_at(n);
    const auto at_n0 = trace.cum_H_at(n0);
    for (int j = 0; j < trace.k; ++j) chk.observed += at_n[j] - at_n0[j];
    const double k = double(trace.k);
    chk.bound = 16.0 * k / t_n0 + 16.0 * k * double(s_n) * std::log(double(s_n)) / double(n);
    chk.margin = chk.bound - chk.observed;
    return chk;
}

// The worst case the bound's derivation allows: the center had no recent
// updates at the window start (estimate 0, one rate of 1/t_{n0}) and is then
// updated at every step of the window.
inline double worst_case_window_observed(std::uint64_t n, double alpha, double beta) {
    const std::uint64_t s_n = std::min(n, s_schedule(n, alpha));
    const std::uint64_t n0 = n - s_n;
    double obs = 1.0 / double(t_schedule(n0, beta));
    for (std::uint64_t np = 1; np < s_n; ++np)
        obs += double(s_n) / (double(n - s_n) * double(np));
    return obs;
}

// ---- displacement bound -----------------------------------------------------

struct DisplacementCheck {
    std::uint64_t pairs = 0;
    std::uint64_t violations = 0;
    double worst_margin = 0.0; // min over pairs of bound - displacement
};

/// ||W^(m) - W^(n)|| <= 2R * sum_j sum_{m<=n'<n} H_j^(n'+1) over random
/// recorded index pairs, to the given tolerance.
inline DisplacementCheck displacement_check(const Trace& trace, std::uint64_t pairs,
                                            Rng& rng, double tol = 1e-12) {
    DisplacementCheck out;
    if (trace.rows.size() < 2) return out;
    out.worst_margin = std::numeric_limits<double>::infinity();
    for (std::uint64_t t = 0; t < pairs; ++t) {
        std::size_t a = std::size_t(rng.below(trace.rows.size()));
        std::size_t b = std::size_t(rng.below(trace.rows.size()));
        if (a > b) std::swap(a, b);
        const auto& rm = trace.rows[a];
        const auto& rn = trace.rows[b];
        double disp2 = 0.0;
        for (std::size_t j = 0; j < rm.centers.size(); ++j) {
            const double dd = rm.centers[j] - rn.centers[j];
            disp2 += dd * dd;
        }
        double rates = 0.0;
        for (int j = 0; j < trace.k; ++j) rates += rn.sumH[j] - rm.sumH[j];
        const double bound = 2.0 * trace.support_radius * rates;
        const double margin = bound - std::sqrt(disp2);
        out.worst_margin = std::min(out.worst_margin, margin);
        ++out.pairs;
        if (margin < -tol) ++out.violations;
    }
    return out;
}

// ---- estimator concentration experiment -------------------------------------

struct ConcentrationCheckpoint {
    std::uint64_t n = 0;
    std::uint64_t s_n = 0;
    std::uint64_t t_n0 = 0;
    double a_n = 0.0;
    bool qualifying = false; // condition (a): 4 n^{2/3} (log 2n)^{1/3} <= s_n <= n/2 - 1
    std::uint64_t runs = 0;
    std::uint64_t failures = 0;    // any center with |Phat - P| >= (3/8) a_n
    double max_deviation = 0.0;    // across runs and centers
    std::vector<double> max_deviation_per_center; // across runs
    double failure_rate = 0.0;
    double allowed = 0.0;          // 1/n + 3 binomial standard errors
    bool pass = true;
};

struct ConcentrationReport {
    std::vector<ConcentrationCheckpoint> checkpoints;
    double L_estimate = 0.0;
    double c = 1.0;
    std::optional<double> first_qualifying_n; // when no checkpoint qualifies
    bool all_pass = true;
};

inline bool concentration_condition_a(std::uint64_t n, std::uint64_t s_n) {
    const double lo = 4.0 * std::pow(double(n), 2.0 / 3.0) *
                      std::cbrt(std::log(2.0 * double(n)));
    return lo <= double(s_n) && double(s_n) <= double(n) / 2.0 - 1.0;
}

// smallest n (by bisection on a wide bracket) at which condition (a)'s lower
// bound first admits s_n = ceil(n^alpha)
inline double first_qualifying_n_for(double alpha) {
    auto ok = [&](double n) {
        return 4.0 * std::pow(n, 2.0 / 3.0) * std::cbrt(std::log(2.0 * n)) <=
               std::pow(n, alpha);
    };
    double lo = 2.0, hi = 1e60;
    if (ok(lo)) return lo;
    if (!ok(hi)) return hi;
    for (int it = 0; it < 400; ++it) {
        const double mid = std::sqrt(lo * hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

/// Runs `runs` seeded generalized-Lloyd runs and measures, at each
/// checkpoint, how often the windowed estimator deviates from the exact
/// Voronoi mass by at least (3/8) a_n. Fan-out is by thread; aggregation is
/// in seed order, so the report is deterministic.
inline ConcentrationReport concentration_experiment(
    const RunConfig& base, const std::vector<std::uint64_t>& checkpoints,
    const AnalysisConfig& acfg, std::uint64_t seed0, unsigned jobs = 0) {
    if (!base.distribution.exact_capable())
        throw capability_error("concentration_experiment: exact-oracle distribution required");
    if (base.schedule.policy != Policy::generalized_lloyd)
        throw config_error("concentration_experiment: generalized-Lloyd runs required");
    acfg.validate();

    ConcentrationReport rep;
    rep.L_estimate = acfg.L;
    rep.c = acfg.c();

    struct PerRun {
        std::vector<double> devs; // per checkpoint x center: |Phat_j - P_j|
    };
    const int runs = acfg.concentration_runs;
    const int k = base.k;
    std::vector<PerRun> results(runs);

    auto one_run = [&](int ri) {
        RunConfig cfg = base;
        cfg.seed = seed0 + std::uint64_t(ri);
        cfg.keep_kinematics = false;
        cfg.stride = std::max<std::uint64_t>(cfg.n_max, 1); // audits off the hot path
        MomentOracle exact = MomentOracle::exact();
        auto& out = results[ri].devs;
        out.assign(checkpoints.size() * k, 0.0);
        std::size_t next_cp = 0;
        cfg.step_observer = [&](std::uint64_t n, const Centers& w,
                                const UpdateWindow& window) {
            if (next_cp >= checkpoints.size() || n != checkpoints[next_cp]) return;
            const auto mass = exact.evaluate(cfg.distribution, w).mass;
            const auto phat = window.masses();
            for (int j = 0; j < k; ++j)
                out[next_cp * k + j] = std::abs(phat[j] - mass[j]);
            ++next_cp;
        };
        (void)run(cfg);
    };

    const unsigned nthreads =
        jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    std::atomic<int> cursor{0};
    for (unsigned t = 0; t < std::min<unsigned>(nthreads, runs); ++t)
        pool.emplace_back([&] {
            for (int ri; (ri = cursor.fetch_add(1)) < runs;) one_run(ri);
        });
    for (auto& th : pool) th.join();

    bool any_qualifying = false;
    for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
        ConcentrationCheckpoint cp;
        cp.n = checkpoints[ci];
        cp.s_n = std::min(cp.n, s_schedule(cp.n, base.schedule.alpha));
        const std::uint64_t n0 = cp.n - cp.s_n;
        cp.t_n0 = t_schedule(n0, base.schedule.beta);
        cp.a_n = rep.c * (1.0 / double(cp.t_n0) +
                          double(cp.s_n) * std::log(double(cp.s_n)) / double(cp.n));
        cp.qualifying = concentration_condition_a(cp.n, cp.s_n);
        any_qualifying = any_qualifying || cp.qualifying;
        cp.runs = runs;
        cp.max_deviation_per_center.assign(k, 0.0);
        const double threshold = 0.375 * cp.a_n;
        for (int ri = 0; ri < runs; ++ri) {
            double dev = 0.0;
            for (int j = 0; j < k; ++j) {
                const double dj = results[ri].devs[ci * k + j];
                dev = std::max(dev, dj);
                cp.max_deviation_per_center[j] =
                    std::max(cp.max_deviation_per_center[j], dj);
            }
            cp.max_deviation = std::max(cp.max_deviation, dev);
            if (dev >= threshold) ++cp.failures;
        }
        cp.failure_rate = double(cp.failures) / double(runs);
        const double p = 1.0 / double(cp.n);
        cp.allowed = p + 3.0 * std::sqrt(p * (1.0 - p) / double(runs));
        cp.pass = cp.failure_rate <= cp.allowed;
        rep.all_pass = rep.all_pass && cp.pass;
        rep.checkpoints.push_back(cp);
    }
    if (!any_qualifying)
        rep.first_qualifying_n = first_qualifying_n_for(base.schedule.alpha);
    return rep;
}

// ---- local Lipschitz probe ---------------------------------------------------

struct LipschitzProbe {
    double delta = 0.0;
    int perturbations = 0;
    double estimate = 0.0;            // sup over probes of |P_j(w') - P_j(w)| / ||w - w'||
    std::optional<double> bound;      // k=2 only: p_max * 2 (2R)^{d-1} (1 + 2R/r)
    bool within_bound = true;
};

/// Estimates the local Lipschitz constant of the Voronoi masses at w by
/// random perturbations of norm delta, and compares against the 2-center
/// area-growth bound when k = 2. Perturbations beyond a quarter of the
/// separation violate the bound's hypothesis and are rejected.
inline LipschitzProbe lipschitz_probe(const Distribution& dist, const Centers& w,
                                      int num_perturbations, double delta, Rng& rng) {
    if (!dist.exact_capable())
        throw capability_error("lipschitz_probe: exact-oracle distribution required");
    if (!(delta >= 0.0)) throw input_error("lipschitz_probe: delta must be >= 0");
    if (w.k >= 2 && delta > 0.25 * min_separation(w).value)
        throw input_error("lipschitz_probe: perturbation exceeds a quarter of the separation");

    LipschitzProbe out;
    out.delta = delta;
    out.perturbations = num_perturbations;
    MomentOracle oracle = MomentOracle::exact();
    const auto base_mass = oracle.evaluate(dist, w).mass;
    if (delta == 0.0) return out; // ratio defined as 0

    Centers probe = w;
    for (int t = 0; t < num_perturbations; ++t) {
        // random direction on the sphere in R^{k x d}
        std::vector<double> dir(w.x.size());
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                n2 += v * v;
            }
        } while (n2 == 0.0);
        const double scale = delta / std::sqrt(n2);
        for (std::size_t j = 0; j < dir.size(); ++j) probe.x[j] = w.x[j] + dir[j] * scale;
        const auto mass = oracle.evaluate(dist, probe).mass;
        for (int j = 0; j < w.k; ++j)
            out.estimate = std::max(out.estimate, std::abs(mass[j] - base_mass[j]) / delta);
    }
    if (w.k == 2) {
        const double R = dist.support_radius();
        const double r = 0.5 * min_separation(w).value;
        const double pmax = dist.exact1d()->max_density();
        out.bound = pmax * 2.0 * std::pow(2.0 * R, w.d - 1) * (1.0 + 2.0 * R / r);
        out.within_bound = out.estimate <= *out.bound;
    }
    return out;
}

// area-growth factor of the 2-center bound, without the density: useful when
// only the geometry is wanted
inline double lipschitz_area_bound(int d, double R, double r) {
    return std::pow(2.0 * R, d - 1) * (1.0 + 2.0 * R / r);
}

/// L for the concentration thresholds, estimated by probing at a sample of
/// recorded trace states (rather than a derived constant). Each state is
/// probed at a quarter of its own separation or the requested delta,
/// whichever is smaller.
inline double estimate_lipschitz_from_trace(const Distribution& dist,
                                            const Trace& trace, Rng& rng,
                                            int states = 10, int perturbations = 50,
                                            double delta = 0.05) {
    if (trace.rows.empty()) throw input_error("estimate_lipschitz_from_trace: empty trace");
    double L = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, trace.rows.size() / states);
    for (std::size_t i = 0; i < trace.rows.size(); i += stride) {
        Centers w(trace.k, trace.d);
        w.x = trace.rows[i].centers;
        double dl = delta;
        if (w.k >= 2) dl = std::min(dl, 0.25 * min_separation(w).value);
        if (dl <= 0.0) continue;
        const auto probe = lipschitz_probe(dist, w, perturbations, dl, rng);
        L = std::max(L, probe.estimate);
    }
    return L;
}

// ---- convergence verdict -----------------------------------------------------

struct CenterVerdict {
    std::optional<std::uint64_t> last_exceedance; // last audited n with norm > eps
    double final_gradnorm = 0.0;
    bool persistent = false; // still above eps at the final audit
};

struct ConvergenceVerdict {
    double epsilon = 0.0;
    std::vector<CenterVerdict> centers;
    double final_cost = 0.0;
    double final_total_gradnorm = 0.0;
    double last_decade_cost_oscillation = 0.0; // max-min of f over n in [N/10, N]
    std::optional<double> distance_to_stationary_set;
    bool gradients_vanish = false; // every center below eps at the end
};

/// Catalogued stationary sets exist for the uniform density on [0,1] with
/// k in {1,2,3}: equispaced cell means (2i-1)/(2k).
inline std::optional<std::vector<double>> catalogued_stationary_set_uniform01(
    const Distribution& dist, int k) {
    const auto* p = dist.exact1d();
    if (!p) return std::nullopt;
    if (p->breakpoints() != std::vector<double>{0.0, 1.0}) return std::nullopt;
    if (k < 1 || k > 3) return std::nullopt;
    std::vector<double> w(k);
    for (int i = 0; i < k; ++i) w[i] = (2.0 * i + 1.0) / (2.0 * k);
    return w;
}

inline ConvergenceVerdict convergence_verdict(const Trace& trace,
                                              const Distribution& dist,
                                              double epsilon) {
    ConvergenceVerdict v;
    v.epsilon = epsilon;
    v.centers.resize(trace.k);
    if (trace.rows.empty()) return v;
    for (const auto& row : trace.rows) {
        for (int i = 0; i < trace.k; ++i)
            if (row.gradnorm[i] > epsilon) v.centers[i].last_exceedance = row.n;
    }
    const auto& last = trace.rows.back();
    v.final_cost = last.f;
    double tot = 0.0;
    for (int i = 0; i < trace.k; ++i) {
        v.centers[i].final_gradnorm = last.gradnorm[i];
        v.centers[i].persistent = last.gradnorm[i] > epsilon;
        tot += last.gradnorm[i] * last.gradnorm[i];
    }
    v.final_total_gradnorm = std::sqrt(tot);
    v.gradients_vanish = true;
    for (const auto& c : v.centers) v.gradients_vanish = v.gradients_vanish && !c.persistent;

    const std::uint64_t n_lo = trace.n_steps / 10;
    double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
    for (const auto& row : trace.rows) {
        if (row.n < n_lo) continue;
        fmin = std::min(fmin, row.f);
        fmax = std::max(fmax, row.f);
    }
    v.last_decade_cost_oscillation = (fmax >= fmin) ? fmax - fmin : 0.0;

    if (auto cat = catalogued_stationary_set_uniform01(dist, trace.k)) {
        // d = 1: sorted matching is the optimal permutation
        std::vector<double> w = last.centers;
        std::sort(w.begin(), w.end());
        std::sort(cat->begin(), cat->end());
        double dmax = 0.0;
        for (int i = 0; i < trace.k; ++i)
            dmax = std::max(dmax, std::abs(w[i] - (*cat)[i]));
        v.distance_to_stationary_set = dmax;
    }
    return v;
}

} // namespace streamkm
