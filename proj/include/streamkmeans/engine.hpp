#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "streamkmeans/core.hpp"
#include "streamkmeans/distributions.hpp"
#include "streamkmeans/objective.hpp"
#include "streamkmeans/rng.hpp"
#include "streamkmeans/schedules.hpp"

namespace streamkm {

enum class Mode { single_center, all_cells };

struct OracleSpec {
    MomentOracle::Method method = MomentOracle::Method::exact;
    std::uint64_t samples = 200000;

    MomentOracle make(std::uint64_t seed) const {
        return method == MomentOracle::Method::exact
                   ? MomentOracle::exact()
                   : MomentOracle::monte_carlo(samples, seed);
    }
};

struct RunConfig {
    Distribution distribution;
    int k = 1;
    std::optional<Centers> explicit_init; // iid draws from p when absent
    RateSchedule schedule;
    std::uint64_t n_max = 0;
    std::uint64_t seed = 0;
    std::uint64_t stride = 100; // audited-diagnostics cadence
    OracleSpec oracle;
    Mode mode = Mode::single_center;
    int batch = 1;                 // all_cells mini-batch size (mean of m draws)
    bool keep_kinematics = false;  // per-step chosen index + cumulative-H arrays

    // diagnostics hook, fired with the pre-step state W^(n) and the window
    // backing Phat^(n) at every step plus once at the terminal state
    std::function<void(std::uint64_t n, const Centers&, const UpdateWindow&)> step_observer;

    explicit RunConfig(Distribution dist) : distribution(std::move(dist)) {}
};

// One audited row: the state W^(n) plus the transition n -> n+1. Terminal
// rows (including the initial state when n_max = 0) carry chosen = -1 and
// zero transition fields.
struct TraceRow {
    std::uint64_t n = 0;
    int chosen = -1;
    std::vector<double> H;        // k
    std::vector<double> phat;     // k, windowed estimator (zeros in all_cells mode)
    double f = 0.0;
    double f_se = 0.0;            // MC audits only; not serialized
    std::vector<double> gradnorm; // k
    double A = 0.0, B = 0.0, C = 0.0;
    std::vector<double> sumH;     // k, cumulative through step n
    double sumH2 = 0.0;
    std::vector<double> centers;  // k*d, W^(n)
};

struct RunCounters {
    std::uint64_t clamp_violations = 0;
    std::uint64_t degeneracy_redraws = 0;
    std::uint64_t boundary_ties = 0;
    std::uint64_t zero_mass_cells = 0;
};

struct Trace {
    int k = 0, d = 0;
    double support_radius = 0.0;
    std::uint64_t n_steps = 0;
    std::vector<TraceRow> rows;

    // optional per-step kinematics (analysis checks): chosen[n] = I^(n+1),
    // cum_H[n*k + j] = sum of H_j^(1..n); cum_H has n_steps+1 rows
    std::vector<std::int32_t> chosen;
    std::vector<double> cum_H;

    RunCounters counters;
    Centers final_centers;
    std::optional<std::string> error; // partial trace when a step aborted

    std::span<const double> cum_H_at(std::uint64_t n) const {
        return {cum_H.data() + n * k, std::size_t(k)};
    }
};

inline Centers init_centers(const RunConfig& cfg, Rng& rng) {
    const int d = cfg.distribution.dimension();
    const double R = cfg.distribution.support_radius();
    if (cfg.explicit_init) {
        const Centers& w = *cfg.explicit_init;
        if (w.k != cfg.k || w.d != d)
            throw config_error("init_centers: explicit centers have wrong shape");
        if (w.k >= 2 && min_separation(w).value < kMinUsableSeparation)
            throw config_error("init_centers: explicit centers are degenerate");
        if (!in_support_ball(w, R))
            throw config_error("init_centers: explicit centers escape B(0,R)");
        return w;
    }
    Centers w(cfg.k, d);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        for (int i = 0; i < cfg.k; ++i) {
            const auto x = cfg.distribution.sample(rng);
            std::copy(x.begin(), x.end(), w.point(i).begin());
        }
        if (cfg.k < 2 || min_separation(w).value >= kMinUsableSeparation) return w;
        // collision is measure-zero; redraw
    }
    throw contract_error("init_centers: could not draw distinct centers");
}

namespace detail {

struct StepDraw {
    int chosen = -1;                      // single_center only
    std::vector<double> x;                // k*d update points (per-center)
    std::vector<std::uint8_t> updated;    // k
};

inline double convex_step(double w, double x, double h) { return (1.0 - h) * w + h * x; }

} // namespace detail

/// Mutable per-run state advanced by step(): centers, estimator window,
/// naive counters, accumulated rates, counters and the run's rng stream.
struct EngineState {
    Centers w;
    UpdateWindow window;
    std::vector<std::uint64_t> naive_counts;
    std::vector<double> sum_H;
    double sum_H2 = 0.0;
    std::uint64_t n = 0;
    Rng rng;
    RunCounters counters;

    // transition scratch, valid between draw_transition and apply_transition
    std::vector<double> H;
    detail::StepDraw draw;
    std::vector<double> exact_masses; // ideal policies

    EngineState(Centers w0, const RunConfig& cfg)
        : w(std::move(w0)), window(cfg.k, cfg.n_max, cfg.schedule.alpha),
          naive_counts(cfg.k, 0), sum_H(cfg.k, 0.0), rng(cfg.seed, 0),
          H(cfg.k, 0.0), exact_masses(cfg.k, 0.0) {
        draw.x.assign(std::size_t(cfg.k) * w.d, 0.0);
        draw.updated.assign(cfg.k, 0);
    }
};

inline void validate_run_config(const RunConfig& cfg) {
    cfg.schedule.validate();
    if (cfg.k < 1) throw config_error("run: k must be >= 1");
    if (cfg.stride < 1) throw config_error("run: stride must be >= 1");
    if (cfg.batch < 1) throw config_error("run: batch must be >= 1");
    if (cfg.mode == Mode::all_cells && cfg.schedule.policy != Policy::uniform_decay)
        throw config_error("run: all_cells mode requires the uniform_decay policy; "
                           "the other policies update a single drawn center");
    if (cfg.schedule.needs_exact_masses() && !cfg.distribution.exact_capable())
        throw config_error("run: ideal policies need a distribution with exact moments");
}

inline EngineState make_engine_state(const RunConfig& cfg) {
    validate_run_config(cfg);
    Rng init_rng(cfg.seed, 0);
    EngineState st(init_centers(cfg, init_rng), cfg);
    st.rng = init_rng; // continue the same stream after initialization draws
    return st;
}

/// Draws the transition n -> n+1: sample, assign, rate. Fills st.H and
/// st.draw without touching the centers; the rates never read the incoming
/// data point.
inline void draw_transition(const RunConfig& cfg, EngineState& st) {
    const int k = cfg.k;
    const int d = st.w.d;
    std::fill(st.draw.updated.begin(), st.draw.updated.end(), 0);

    if (cfg.mode == Mode::single_center) {
        if (cfg.schedule.needs_exact_masses()) {
            MomentOracle exact_oracle = MomentOracle::exact();
            st.exact_masses = exact_oracle.evaluate(cfg.distribution, st.w).mass;
        }
        for (int redraw = 0;; ++redraw) {
            if (redraw >= 64)
                throw contract_error("draw_transition: persistent degeneracy on update");
            const auto x = cfg.distribution.sample(st.rng);
            const auto [idx, tie] = detail::nearest_center_impl(st.w, x);
            if (tie) ++st.counters.boundary_ties;
            RateState rs{st.n, idx, &st.window,
                         std::span<const double>(st.exact_masses),
                         std::span<const std::uint64_t>(st.naive_counts)};
            next_rates(cfg.schedule, rs, st.H);
            // single-center semantics: only the chosen coordinate moves
            for (int j = 0; j < k; ++j)
                if (j != idx) st.H[j] = 0.0;
            // a candidate landing exactly on another center is re-drawn
            const double h = st.H[idx];
            bool coincide = false;
            if (h > 0.0 && k >= 2) {
                for (int other = 0; other < k && !coincide; ++other) {
                    if (other == idx) continue;
                    double d2 = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double cand = detail::convex_step(
                            st.w.x[std::size_t(idx) * d + j], x[j], h);
                        const double diff = cand - st.w.x[std::size_t(other) * d + j];
                        d2 += diff * diff;
                    }
                    coincide = d2 == 0.0;
                }
            }
            if (coincide) {
                ++st.counters.degeneracy_redraws;
                continue;
            }
            st.draw.chosen = idx;
            st.draw.updated[idx] = 1;
            for (int j = 0; j < d; ++j) st.draw.x[std::size_t(idx) * d + j] = x[j];
            return;
        }
    }

    // all_cells: one conditional (mini-batch mean) draw per positive-mass
    // cell; cells hitting the rejection cap count as mass zero
    st.draw.chosen = -1;
    RateState rs{st.n, 0, &st.window, {}, {}};
    next_rates(cfg.schedule, rs, st.H);
    for (int i = 0; i < k; ++i) {
        std::vector<double> acc(d, 0.0);
        int got = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            auto xi = sample_in_cell(cfg.distribution, st.w, i, st.rng);
            if (!xi) break;
            for (int j = 0; j < d; ++j) acc[j] += (*xi)[j];
            ++got;
        }
        if (got < cfg.batch) {
            ++st.counters.zero_mass_cells;
            st.H[i] = 0.0; // zero-mass cells are never updated
            continue;
        }
        st.draw.updated[i] = 1;
        for (int j = 0; j < d; ++j) st.draw.x[std::size_t(i) * d + j] = acc[j] / got;
    }
}

/// Applies the drawn transition: convex-combination update, post-state
/// contracts, window/counter bookkeeping. Advances n.
inline void apply_transition(const RunConfig& cfg, EngineState& st) {
    const int k = cfg.k;
    const int d = st.w.d;
    const double R = cfg.distribution.support_radius();
    for (int i = 0; i < k; ++i) {
        if (!st.draw.updated[i] || st.H[i] == 0.0) continue;
        for (int j = 0; j < d; ++j) {
            auto& wi = st.w.x[std::size_t(i) * d + j];
            wi = detail::convex_step(wi, st.draw.x[std::size_t(i) * d + j], st.H[i]);
        }
    }
    for (int i = 0; i < k; ++i) {
        if (!st.draw.updated[i]) continue;
        if (norm(st.w.point(i)) > R * (1.0 + 1e-12) + 1e-12)
            throw contract_error("step: center escaped B(0,R)");
        for (int other = 0; other < k; ++other)
            if (other != i && squared_distance(st.w.point(i), st.w.point(other)) == 0.0)
                throw contract_error("step: centers degenerated");
    }
    if (cfg.mode == Mode::single_center) {
        st.window.push(st.draw.chosen);
        ++st.naive_counts[st.draw.chosen];
    }
    for (int i = 0; i < k; ++i) st.sum_H[i] += st.H[i];
    for (int i = 0; i < k; ++i) st.sum_H2 += st.H[i] * st.H[i];
    ++st.n;
}

/// One full engine step: sample, assign, rate, update.
inline void step(const RunConfig& cfg, EngineState& st) {
    draw_transition(cfg, st);
    apply_transition(cfg, st);
}

/// Supermartingale decomposition of one transition: A is the exact descent
/// term, B the zero-mean cross term, C the quadratic noise. Computed from
/// the moments of the pre-step state; A uses the algebraic form
/// H_i P_i ||w_i - M_i||^2, which is finite even as P_i -> 0.
struct StepDecomposition {
    double A = 0.0, B = 0.0, C = 0.0;
    bool zero_mass_update = false; // updated center had zero mass (contract breach upstream)
};

inline StepDecomposition decompose_step(const Moments& mom, const Centers& w,
                                        std::span<const double> H,
                                        const detail::StepDraw& draw) {
    StepDecomposition out;
    for (int i = 0; i < w.k; ++i) {
        if (H[i] == 0.0 || !draw.updated[i]) continue;
        if (mom.mass[i] <= 0.0) {
            out.zero_mass_update = true;
            continue;
        }
        const auto wi = w.point(i);
        const auto f1 = mom.first_of(i);
        const double Pi = mom.mass[i];
        double wm2 = 0.0;  // ||w_i - M_i||^2
        double gdotmx = 0.0;
        double wx2 = 0.0;
        for (int j = 0; j < w.d; ++j) {
            const double Mij = f1[j] / Pi;
            const double wm = wi[j] - Mij;
            wm2 += wm * wm;
            const double gij = Pi * wm;
            gdotmx += gij * (Mij - draw.x[std::size_t(i) * w.d + j]);
            const double wx = wi[j] - draw.x[std::size_t(i) * w.d + j];
            wx2 += wx * wx;
        }
        out.A += H[i] * Pi * wm2; // == H_i P_i^{-1} ||grad_i||^2
        out.B += H[i] * gdotmx;
        out.C += 0.5 * H[i] * H[i] * wx2;
    }
    return out;
}

/// Executes the streaming loop for n_max steps. Audited diagnostics (cost,
/// per-center gradient norms, A/B/C) are computed at the trace stride; the
/// update itself never touches the oracle except for the ideal policies'
/// exact masses.
inline Trace run(const RunConfig& cfg) {
    EngineState st = make_engine_state(cfg);
    const int k = cfg.k;
    MomentOracle audit_oracle = cfg.oracle.make(cfg.seed);

    Trace trace;
    trace.k = k;
    trace.d = st.w.d;
    trace.support_radius = cfg.distribution.support_radius();

    if (cfg.keep_kinematics) {
        trace.chosen.reserve(cfg.n_max);
        trace.cum_H.reserve((cfg.n_max + 1) * k);
        trace.cum_H.insert(trace.cum_H.end(), st.sum_H.begin(), st.sum_H.end());
    }

    auto emit_row = [&](bool terminal) {
        TraceRow row;
        row.n = st.n;
        row.centers = st.w.x;
        row.phat = st.window.masses();
        row.sumH = st.sum_H;
        row.sumH2 = st.sum_H2;
        row.H.assign(k, 0.0);
        const Moments mom = audit_oracle.evaluate(cfg.distribution, st.w);
        row.f = detail::quadratic_cost_from_moments(mom, st.w);
        row.f_se = mom.cost_se;
        row.gradnorm = detail::gradient_from_moments(mom, st.w).norms;
        if (!terminal) {
            row.chosen = st.draw.chosen;
            row.H.assign(st.H.begin(), st.H.end());
            const auto dec = decompose_step(mom, st.w, st.H, st.draw);
            row.A = dec.A;
            row.B = dec.B;
            row.C = dec.C;
            if (dec.zero_mass_update) ++st.counters.zero_mass_cells;
        }
        trace.rows.push_back(std::move(row));
    };

    for (std::uint64_t n = 0; n < cfg.n_max; ++n) {
        try {
            if (cfg.step_observer) cfg.step_observer(n, st.w, st.window);
            draw_transition(cfg, st);
            if (n % cfg.stride == 0) emit_row(/*terminal=*/false);
            apply_transition(cfg, st);
            if (cfg.keep_kinematics) {
                trace.chosen.push_back(cfg.mode == Mode::single_center ? st.draw.chosen
                                                                       : -1);
                trace.cum_H.insert(trace.cum_H.end(), st.sum_H.begin(), st.sum_H.end());
            }
            trace.n_steps = st.n;
        } catch (const std::runtime_error& e) {
            // abort with a partial trace and an error record
            trace.error = std::string("step ") + std::to_string(n) + ": " + e.what();
            break;
        }
    }

    if (cfg.step_observer) cfg.step_observer(st.n, st.w, st.window);
    // an aborted step may have emitted a transition row that never applied;
    // the terminal row replaces it so n stays strictly increasing
    if (trace.error && !trace.rows.empty() && trace.rows.back().n == st.n)
        trace.rows.pop_back();
    emit_row(/*terminal=*/true);
    trace.counters = st.counters;
    trace.counters.clamp_violations = cfg.schedule.clamp_violations;
    trace.final_centers = st.w;
    return trace;
}

// ---- CSV trace (schema is an external interface; see README) ---------------

inline void write_trace_csv(const Trace& trace, std::ostream& out) {
    const int k = trace.k, d = trace.d;
    out << "n,I";
    for (int i = 0; i < k; ++i) out << ",H_" << i;
    for (int i = 0; i < k; ++i) out << ",Phat_" << i;
    out << ",f";
    for (int i = 0; i < k; ++i) out << ",gradnorm_" << i;
    out << ",A,B,C";
    for (int i = 0; i < k; ++i) out << ",sumH_" << i;
    out << ",sumH2";
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j) out << ",w" << i << "_" << j;
    out << "\n";
    for (const auto& r : trace.rows) {
        out << r.n << ',' << r.chosen;
        for (int i = 0; i < k; ++i) out << ',' << format_double(r.H[i]);
        for (int i = 0; i < k; ++i) out << ',' << format_double(r.phat[i]);
        out << ',' << format_double(r.f);
        for (int i = 0; i < k; ++i) out << ',' << format_double(r.gradnorm[i]);
        out << ',' << format_double(r.A) << ',' << format_double(r.B) << ','
            << format_double(r.C);
        for (int i = 0; i < k; ++i) out << ',' << format_double(r.sumH[i]);
        out << ',' << format_double(r.sumH2);
        for (double c : r.centers) out << ',' << format_double(c);
        out << "\n";
    }
}

} // namespace streamkm
