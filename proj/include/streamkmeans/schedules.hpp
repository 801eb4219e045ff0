#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamkmeans/errors.hpp"

namespace streamkm {

enum class Policy {
    naive_lloyd,      // H = 1{I=i} / (N_i + 1), all-time update counters
    ideal_lloyd,      // H = 1{I=i} / (n P_i), exact masses required
    ideal_prime_lloyd,// H = 1{I=i} / max{n P_i, t_n}
    generalized_lloyd,// H = 1{I=i} / max{n Phat_i, t_n}, windowed estimator
    uniform_decay     // H = c / (n+1), deterministic, no preconditioning
};

inline const char* policy_name(Policy p) {
    switch (p) {
        case Policy::naive_lloyd: return "naive_lloyd";
        case Policy::ideal_lloyd: return "ideal_lloyd";
        case Policy::ideal_prime_lloyd: return "ideal_prime_lloyd";
        case Policy::generalized_lloyd: return "generalized_lloyd";
        case Policy::uniform_decay: return "uniform_decay";
    }
    return "?";
}

inline Policy policy_from_name(const std::string& s) {
    if (s == "naive_lloyd") return Policy::naive_lloyd;
    if (s == "ideal_lloyd") return Policy::ideal_lloyd;
    if (s == "ideal_prime_lloyd") return Policy::ideal_prime_lloyd;
    if (s == "generalized_lloyd") return Policy::generalized_lloyd;
    if (s == "uniform_decay") return Policy::uniform_decay;
    throw config_error("unknown schedule policy '" + s + "'");
}

/// s_n = max(1, ceil(n^alpha)): estimator window schedule.
inline std::uint64_t s_schedule(std::uint64_t n, double alpha) {
    if (n == 0) return 1;
    return std::max<std::uint64_t>(1, std::uint64_t(std::ceil(std::pow(double(n), alpha))));
}

/// t_n = max(1, ceil(n^beta)): rate floor. Floored at 1 so rates never
/// exceed 1 even at small n.
inline std::uint64_t t_schedule(std::uint64_t n, double beta) {
    if (n == 0) return 1;
    return std::max<std::uint64_t>(1, std::uint64_t(std::ceil(std::pow(double(n), beta))));
}

/// Ring buffer over the last chosen indices I^(m+1). The window length in
/// use at step n is exactly s_n = min(n, s_schedule(n)); per-center counts
/// equal occurrences inside that window.
class UpdateWindow {
public:
    UpdateWindow(int k, std::uint64_t n_max, double alpha)
        : k_(k), alpha_(alpha),
          cap_(std::max<std::uint64_t>(4, s_schedule(std::max<std::uint64_t>(n_max, 1), alpha) + 2)),
          buf_(cap_, 0), counts_(k, 0) {}

    std::uint64_t n() const { return n_; }
    std::uint64_t window_len() const { return hi_ - lo_; } // s_n in effect

    // record I^(n+1) and advance to step n+1
    void push(int chosen) {
        buf_[hi_ % cap_] = chosen;
        ++hi_;
        ++n_;
        const std::uint64_t s_next = std::min(n_, s_schedule(n_, alpha_));
        const std::uint64_t new_lo = n_ - s_next;
        ++counts_[chosen];
        while (lo_ < new_lo) {
            --counts_[buf_[lo_ % cap_]];
            ++lo_;
        }
        while (lo_ > new_lo) {
            --lo_;
            ++counts_[buf_[lo_ % cap_]];
        }
    }

    std::uint64_t count(int i) const { return counts_[i]; }

    // Phat_j = (count of j in the last s_n choices) / s_n; zeros before the
    // first step
    void masses(std::span<double> out) const {
        const std::uint64_t len = window_len();
        for (int i = 0; i < k_; ++i)
            out[i] = len == 0 ? 0.0 : double(counts_[i]) / double(len);
    }

    std::vector<double> masses() const {
        std::vector<double> out(k_, 0.0);
        masses(std::span<double>(out));
        return out;
    }

private:
    int k_;
    double alpha_;
    std::uint64_t cap_;
    std::vector<int> buf_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t n_ = 0;  // steps completed
    std::uint64_t lo_ = 0; // window start (step index)
    std::uint64_t hi_ = 0; // window end, == n_
};

inline std::vector<double> estimate_masses(const UpdateWindow& window) {
    return window.masses();
}

/// Learning-rate policy H^(n+1). Rates depend only on information up to
/// step n (never on the incoming data point), are clamped into [0,1] with a
/// violation counter, and are zero off the updated coordinate.
struct RateSchedule {
    Policy policy = Policy::generalized_lloyd;
    double alpha = 0.7;
    double beta = 0.8;
    double uniform_c = 1.0;
    // test fixture: force H = 0 for this center (adversarial schedules are
    // fixtures, not a public policy; never read from config files)
    int frozen_center = -1;

    mutable std::uint64_t clamp_violations = 0;

    void validate() const {
        if (policy == Policy::generalized_lloyd) {
            if (!(2.0 / 3.0 < alpha && alpha < beta && beta < 1.0))
                throw config_error(
                    "generalized_lloyd: exponents must satisfy 2/3 < alpha < beta < 1 "
                    "(got alpha=" + std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
        }
        if (policy == Policy::ideal_prime_lloyd) {
            if (!(0.0 < beta && beta < 1.0))
                throw config_error("ideal_prime_lloyd: beta must lie in (0, 1)");
        }
        if (policy == Policy::uniform_decay && !(uniform_c > 0.0))
            throw config_error("uniform_decay: constant must be positive");
    }

    bool needs_exact_masses() const {
        return policy == Policy::ideal_lloyd || policy == Policy::ideal_prime_lloyd;
    }
    bool is_single_center() const { return policy != Policy::uniform_decay; }
};

struct RateState {
    std::uint64_t n = 0;                       // current step index
    int chosen = -1;                           // I^(n+1)
    const UpdateWindow* window = nullptr;      // generalized policy
    std::span<const double> exact_masses;      // ideal policies
    std::span<const std::uint64_t> naive_counts; // naive policy
};

// fills H with at most one nonzero coordinate (uniform_decay emits the same
// rate for every coordinate; single-center engines apply only the chosen one)
inline void next_rates(const RateSchedule& sched, const RateState& st,
                       std::span<double> H) {
    std::fill(H.begin(), H.end(), 0.0);
    const int i = st.chosen;
    double h = 0.0;
    switch (sched.policy) {
        case Policy::naive_lloyd:
            h = 1.0 / double(st.naive_counts[i] + 1);
            break;
        case Policy::ideal_lloyd: {
            const double p = st.exact_masses[i];
            if (p <= 0.0) { h = 0.0; break; } // division guard per zero-mass cells
            h = 1.0 / (double(std::max<std::uint64_t>(st.n, 1)) * p);
            break;
        }
        case Policy::ideal_prime_lloyd: {
            const double p = st.exact_masses[i];
            if (p <= 0.0) { h = 0.0; break; }
            const double den = std::max(double(st.n) * p, double(t_schedule(st.n, sched.beta)));
            h = 1.0 / den;
            break;
        }
        case Policy::generalized_lloyd: {
            const double phat =
                st.window->window_len() == 0
                    ? 0.0
                    : double(st.window->count(i)) / double(st.window->window_len());
            const double den =
                std::max(double(st.n) * phat, double(t_schedule(st.n, sched.beta)));
            h = 1.0 / den;
            break;
        }
        case Policy::uniform_decay: {
            const double u = sched.uniform_c / double(st.n + 1);
            for (std::size_t j = 0; j < H.size(); ++j) H[j] = std::min(1.0, u);
            if (sched.uniform_c / double(st.n + 1) > 1.0) ++sched.clamp_violations;
            if (sched.frozen_center >= 0) H[sched.frozen_center] = 0.0;
            return;
        }
    }
    if (h > 1.0) {
        h = 1.0;
        ++sched.clamp_violations;
    }
    if (h < 0.0) h = 0.0;
    if (i == sched.frozen_center) h = 0.0;
    H[i] = h;
}

} // namespace streamkm
