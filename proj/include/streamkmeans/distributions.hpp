#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

#include "streamkmeans/core.hpp"
#include "streamkmeans/errors.hpp"
#include "streamkmeans/rng.hpp"

namespace streamkm {

inline constexpr std::uint64_t kRejectionRetryCap = 1000000;

// Raw moments of a density over an interval: m0 = mass, m1 = first moment,
// m2 = second moment.
struct IntervalMoments {
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
};

/// Piecewise-constant density on [-R, R]. The one concrete family with an
/// exact Voronoi-moment capability: 1-D cells are intervals split at
/// midpoints of the sorted centers, so masses and moments are closed-form.
class PiecewiseConstant1D {
public:
    PiecewiseConstant1D(std::vector<double> breakpoints, std::vector<double> densities)
        : breaks_(std::move(breakpoints)), dens_(std::move(densities)) {
        if (breaks_.size() < 2 || dens_.size() + 1 != breaks_.size())
            throw config_error("piecewise1d: need n+1 breakpoints for n densities");
        for (std::size_t i = 1; i < breaks_.size(); ++i)
            if (!(breaks_[i] > breaks_[i - 1]))
                throw config_error("piecewise1d: breakpoints must be strictly increasing");
        double mass = 0.0;
        for (std::size_t i = 0; i < dens_.size(); ++i) {
            if (dens_[i] < 0.0) throw config_error("piecewise1d: negative density");
            mass += dens_[i] * (breaks_[i + 1] - breaks_[i]);
        }
        if (std::abs(mass - 1.0) > 1e-12)
            throw config_error("piecewise1d: total mass " + format_double(mass) + " != 1");
        cmass_.resize(breaks_.size());
        cmass_[0] = 0.0;
        for (std::size_t i = 0; i < dens_.size(); ++i)
            cmass_[i + 1] = cmass_[i] + dens_[i] * (breaks_[i + 1] - breaks_[i]);
        cmass_.back() = 1.0;
        radius_ = std::max(std::abs(breaks_.front()), std::abs(breaks_.back()));
    }

    int dimension() const { return 1; }
    double support_radius() const { return radius_; }

    double max_density() const { return *std::max_element(dens_.begin(), dens_.end()); }

    // inverse-CDF sampling; no rejection needed
    double sample(Rng& rng) const {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cmass_.begin(), cmass_.end(), u);
        std::size_t piece = std::min(std::size_t(it - cmass_.begin()), cmass_.size() - 1) - 1;
        while (piece + 1 < dens_.size() && dens_[piece] == 0.0) ++piece;
        const double h = dens_[piece];
        if (h == 0.0) return breaks_[piece];
        return breaks_[piece] + (u - cmass_[piece]) / h;
    }

    double cdf(double t) const {
        if (t <= breaks_.front()) return 0.0;
        if (t >= breaks_.back()) return 1.0;
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        const std::size_t piece = std::size_t(it - breaks_.begin()) - 1;
        return cmass_[piece] + dens_[piece] * (t - breaks_[piece]);
    }

    IntervalMoments interval_moments(double a, double b) const {
        IntervalMoments m;
        a = std::max(a, breaks_.front());
        b = std::min(b, breaks_.back());
        if (b <= a) return m;
        for (std::size_t i = 0; i < dens_.size(); ++i) {
            const double lo = std::max(a, breaks_[i]);
            const double hi = std::min(b, breaks_[i + 1]);
            if (hi <= lo || dens_[i] == 0.0) continue;
            const double h = dens_[i];
            m.m0 += h * (hi - lo);
            m.m1 += h * (hi * hi - lo * lo) / 2.0;
            m.m2 += h * (hi * hi * hi - lo * lo * lo) / 3.0;
        }
        return m;
    }

    double mean() const { return interval_moments(breaks_.front(), breaks_.back()).m1; }

    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<double>& densities() const { return dens_; }

private:
    std::vector<double> breaks_;
    std::vector<double> dens_;
    std::vector<double> cmass_;
    double radius_ = 0.0;
};

/// Mixture of isotropic Gaussians truncated to the ball B(0,R) by rejection.
/// The truncation renormalizes the law implicitly; construction rejects
/// configurations whose acceptance rate is below 0.5.
class TruncatedGaussianMixtureD {
public:
    TruncatedGaussianMixtureD(std::vector<double> weights,
                              std::vector<std::vector<double>> means,
                              std::vector<double> sigmas,
                              double radius)
        : weights_(std::move(weights)), means_(std::move(means)),
          sigmas_(std::move(sigmas)), radius_(radius) {
        if (weights_.empty() || weights_.size() != means_.size() ||
            weights_.size() != sigmas_.size())
            throw config_error("gauss_mix: weights/means/sigmas size mismatch");
        if (!(radius_ > 0.0)) throw config_error("gauss_mix: radius must be positive");
        d_ = int(means_[0].size());
        if (d_ < 1) throw config_error("gauss_mix: empty mean vector");
        double wsum = 0.0;
        for (std::size_t c = 0; c < weights_.size(); ++c) {
            if (weights_[c] < 0.0) throw config_error("gauss_mix: negative weight");
            if (int(means_[c].size()) != d_)
                throw config_error("gauss_mix: inconsistent mean dimensions");
            if (!(sigmas_[c] > 0.0)) throw config_error("gauss_mix: sigma must be positive");
            wsum += weights_[c];
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw config_error("gauss_mix: weights sum to " + format_double(wsum) + ", not 1");
        cweights_.resize(weights_.size());
        std::partial_sum(weights_.begin(), weights_.end(), cweights_.begin());
        cweights_.back() = 1.0;

        // probe acceptance rate with a fixed-seed rng; the run rng is untouched
        Rng probe(0xA11CE5EEDULL);
        const int probes = 20000;
        int accepted = 0;
        for (int t = 0; t < probes; ++t)
            if (draw_inside(probe)) ++accepted;
        const double rate = double(accepted) / probes;
        if (rate <= 0.5)
            throw config_error("gauss_mix: acceptance rate " + format_double(rate) +
                               " <= 0.5; enlarge radius or shrink sigmas");
    }

    int dimension() const { return d_; }
    double support_radius() const { return radius_; }

    std::vector<double> sample(Rng& rng) const {
        for (std::uint64_t tries = 0; tries < kRejectionRetryCap; ++tries) {
            if (auto x = draw_inside(rng)) return std::move(*x);
        }
        throw config_error("gauss_mix: rejection retry cap exceeded (truncation too tight)");
    }

private:
    std::optional<std::vector<double>> draw_inside(Rng& rng) const {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cweights_.begin(), cweights_.end(), u);
        const std::size_t c = std::min(std::size_t(it - cweights_.begin()), cweights_.size() - 1);
        std::vector<double> x(d_);
        double n2 = 0.0;
        for (int j = 0; j < d_; ++j) {
            x[j] = means_[c][j] + sigmas_[c] * rng.normal();
            n2 += x[j] * x[j];
        }
        if (n2 <= radius_ * radius_) return x;
        return std::nullopt;
    }

    std::vector<double> weights_, cweights_;
    std::vector<std::vector<double>> means_;
    std::vector<double> sigmas_;
    double radius_ = 0.0;
    int d_ = 1;
};

/// Value-semantic bounded-support distribution. Every draw lies in B(0,R);
/// the law is a density (no atoms).
class Distribution {
public:
    Distribution(PiecewiseConstant1D p) : v_(std::move(p)) {}
    Distribution(TruncatedGaussianMixtureD g) : v_(std::move(g)) {}

    int dimension() const {
        return std::visit([](const auto& d) { return d.dimension(); }, v_);
    }
    double support_radius() const {
        return std::visit([](const auto& d) { return d.support_radius(); }, v_);
    }
    std::vector<double> sample(Rng& rng) const {
        if (const auto* p = std::get_if<PiecewiseConstant1D>(&v_))
            return {p->sample(rng)};
        return std::get<TruncatedGaussianMixtureD>(v_).sample(rng);
    }

    bool exact_capable() const { return std::holds_alternative<PiecewiseConstant1D>(v_); }
    const PiecewiseConstant1D* exact1d() const { return std::get_if<PiecewiseConstant1D>(&v_); }

private:
    std::variant<PiecewiseConstant1D, TruncatedGaussianMixtureD> v_;
};

/// Rejection draw from p restricted to the i-th Voronoi cell. nullopt means
/// the retry cap was hit: the cell is effectively mass-zero and the caller
/// must treat it as empty.
inline std::optional<std::vector<double>>
sample_in_cell(const Distribution& dist, const Centers& w, int i, Rng& rng) {
    if (i < 0 || i >= w.k) throw input_error("sample_in_cell: index out of range");
    if (w.k == 1) return dist.sample(rng);
    for (std::uint64_t tries = 0; tries < kRejectionRetryCap; ++tries) {
        auto x = dist.sample(rng);
        if (nearest_center(w, x).index == i) return x;
    }
    return std::nullopt;
}

// ---- moment oracle ---------------------------------------------------------

// Per-cell aggregates: mass P_i, unnormalized first moment f1_i = P_i * M_i,
// unnormalized second moment s2_i = integral of ||x||^2 over the cell. These
// three determine the cost, the gradient and every surrogate value.
struct Moments {
    int k = 0;
    int d = 0;
    std::vector<double> mass;          // k
    std::vector<double> first;         // k*d
    std::vector<double> second;        // k
    std::vector<std::uint8_t> mean_ok; // k; 0 = cell mass is zero, mean undefined
    bool monte_carlo = false;
    std::vector<double> mass_se;       // k (MC only)
    double cost_se = 0.0;              // MC only: SE of the cost at the eval centers

    std::span<const double> first_of(int i) const {
        return {first.data() + std::size_t(i) * d, std::size_t(d)};
    }

    // conditional mean of cell i; callers must check mean_ok
    std::vector<double> mean_of(int i) const {
        std::vector<double> m(d, 0.0);
        if (!mean_ok[i]) return m;
        for (int j = 0; j < d; ++j) m[j] = first[std::size_t(i) * d + j] / mass[i];
        return m;
    }
};

/// Voronoi moment oracle: exact (d=1 piecewise-constant only) or Monte Carlo
/// with reported binomial standard errors. MC evaluations accumulate
/// single-threaded in draw order, so a given (seed, stream) is reproducible;
/// each evaluation advances an internal stream counter.
class MomentOracle {
public:
    enum class Method { exact, monte_carlo };

    static MomentOracle exact() { return MomentOracle(Method::exact, 0, 0); }
    static MomentOracle monte_carlo(std::uint64_t samples, std::uint64_t seed) {
        if (samples == 0) throw config_error("monte_carlo oracle: sample count must be > 0");
        return MomentOracle(Method::monte_carlo, samples, seed);
    }

    Method method() const { return method_; }
    std::uint64_t samples() const { return samples_; }

    Moments evaluate(const Distribution& dist, const Centers& w) {
        require_usable(w, "MomentOracle::evaluate");
        if (method_ == Method::exact) {
            const auto* p = dist.exact1d();
            if (!p || w.d != 1)
                throw capability_error(
                    "exact moments are only available for d=1 piecewise-constant densities");
            return exact_moments(*p, w);
        }
        return mc_moments(dist, w);
    }

private:
    MomentOracle(Method m, std::uint64_t samples, std::uint64_t seed)
        : method_(m), samples_(samples), seed_(seed) {}

    static Moments exact_moments(const PiecewiseConstant1D& p, const Centers& w) {
        Moments mom;
        mom.k = w.k;
        mom.d = 1;
        mom.mass.assign(w.k, 0.0);
        mom.first.assign(w.k, 0.0);
        mom.second.assign(w.k, 0.0);
        mom.mean_ok.assign(w.k, 0);

        // cells of sorted centers are split at consecutive midpoints
        std::vector<int> order(w.k);
        for (int i = 0; i < w.k; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return w.x[a] < w.x[b]; });
        const double lo = p.breakpoints().front(), hi = p.breakpoints().back();
        double left = lo;
        for (int r = 0; r < w.k; ++r) {
            const int i = order[r];
            const double right =
                (r + 1 < w.k) ? 0.5 * (w.x[order[r]] + w.x[order[r + 1]]) : hi;
            const auto m = p.interval_moments(left, right);
            mom.mass[i] = m.m0;
            mom.first[i] = m.m1;
            mom.second[i] = m.m2;
            mom.mean_ok[i] = m.m0 > 0.0 ? 1 : 0;
            left = right;
        }
        return mom;
    }

    Moments mc_moments(const Distribution& dist, const Centers& w) {
        Moments mom;
        mom.k = w.k;
        mom.d = w.d;
        mom.mass.assign(w.k, 0.0);
        mom.first.assign(std::size_t(w.k) * w.d, 0.0);
        mom.second.assign(w.k, 0.0);
        mom.mean_ok.assign(w.k, 0);
        mom.monte_carlo = true;

        Rng rng(seed_, kOracleStreamBase + eval_count_++);
        std::vector<std::uint64_t> counts(w.k, 0);
        double y_sum = 0.0, y2_sum = 0.0; // y = (1/2) min-distance^2
        for (std::uint64_t t = 0; t < samples_; ++t) {
            const auto x = dist.sample(rng);
            const int i = nearest_center(w, x).index;
            ++counts[i];
            double n2 = 0.0;
            for (int j = 0; j < w.d; ++j) {
                mom.first[std::size_t(i) * w.d + j] += x[j];
                n2 += x[j] * x[j];
            }
            mom.second[i] += n2;
            const double y = 0.5 * squared_distance(w.point(i), x);
            y_sum += y;
            y2_sum += y * y;
        }
        const double inv = 1.0 / double(samples_);
        mom.mass_se.assign(w.k, 0.0);
        for (int i = 0; i < w.k; ++i) {
            mom.mass[i] = double(counts[i]) * inv;
            mom.mean_ok[i] = counts[i] > 0 ? 1 : 0;
            mom.second[i] *= inv;
            for (int j = 0; j < w.d; ++j) mom.first[std::size_t(i) * w.d + j] *= inv;
            mom.mass_se[i] = std::sqrt(mom.mass[i] * (1.0 - mom.mass[i]) * inv);
        }
        const double y_mean = y_sum * inv;
        const double y_var = std::max(0.0, y2_sum * inv - y_mean * y_mean);
        mom.cost_se = std::sqrt(y_var * inv);
        return mom;
    }

    static constexpr std::uint64_t kOracleStreamBase = 0x0c1e0000;

    Method method_;
    std::uint64_t samples_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t eval_count_ = 0;
};

inline std::vector<double> voronoi_masses(const Distribution& dist, const Centers& w,
                                          MomentOracle& oracle) {
    return oracle.evaluate(dist, w).mass;
}

// entries with zero mass keep a zero vector and are flagged via mean_ok in
// the underlying Moments; this wrapper returns the means only
inline std::vector<std::vector<double>> voronoi_means(const Distribution& dist,
                                                      const Centers& w,
                                                      MomentOracle& oracle) {
    const auto mom = oracle.evaluate(dist, w);
    std::vector<std::vector<double>> out(w.k);
    for (int i = 0; i < w.k; ++i) out[i] = mom.mean_of(i);
    return out;
}

} // namespace streamkm
