#include <catch2/catch_amalgamated.hpp>

#include "streamkmeans/checks.hpp"
#include "streamkmeans/distributions.hpp"

using namespace streamkm;

namespace {
Centers make1d(std::initializer_list<double> pts) {
    Centers w(int(pts.size()), 1);
    std::copy(pts.begin(), pts.end(), w.x.begin());
    return w;
}
} // namespace

TEST_CASE("piecewise1d validates construction") {
    CHECK_THROWS_AS(PiecewiseConstant1D({0.0, 1.0}, {0.5}), config_error); // mass 0.5
    CHECK_THROWS_AS(PiecewiseConstant1D({0.0, 0.0, 1.0}, {1.0, 1.0}), config_error);
    CHECK_THROWS_AS(PiecewiseConstant1D({0.0, 1.0}, {-1.0}), config_error);
    CHECK_NOTHROW(PiecewiseConstant1D({0.0, 1.0}, {1.0}));
}

TEST_CASE("sampling stays in support and is deterministic") {
    const auto dist = uniform01();
    Rng r1(5), r2(5);
    for (int i = 0; i < 1000; ++i) {
        const auto a = dist.sample(r1);
        const auto b = dist.sample(r2);
        REQUIRE(a == b);
        REQUIRE(a[0] >= 0.0);
        REQUIRE(a[0] <= 1.0);
    }
}

TEST_CASE("truncated gaussian mixture stays in the ball") {
    const auto dist = gauss_mix_2d();
    const double R = dist.support_radius();
    Rng rng(99);
    for (int i = 0; i < 100000; ++i) {
        const auto x = dist.sample(rng);
        REQUIRE(x[0] * x[0] + x[1] * x[1] <= R * R);
    }
}

TEST_CASE("gauss_mix construction rejects tight truncation") {
    // sigma far larger than the radius: acceptance below one half
    CHECK_THROWS_AS(
        TruncatedGaussianMixtureD({1.0}, {{0.0, 0.0}}, {5.0}, 0.5), config_error);
    CHECK_THROWS_AS(
        TruncatedGaussianMixtureD({0.7, 0.7}, {{0.0}, {0.1}}, {0.1, 0.1}, 1.0),
        config_error); // weights don't sum to 1
}

TEST_CASE("zero-density pieces carry no samples and no moments") {
    PiecewiseConstant1D p({0.0, 0.25, 0.5, 1.0}, {2.0, 0.0, 1.0});
    Rng rng(77);
    for (int t = 0; t < 20000; ++t) {
        const double x = p.sample(rng);
        REQUIRE((x <= 0.25 || x >= 0.5));
    }
    const auto gap = p.interval_moments(0.26, 0.49);
    CHECK(gap.m0 == 0.0);
    CHECK(p.cdf(0.25) == Catch::Approx(0.5));
    CHECK(p.cdf(0.5) == Catch::Approx(0.5));
    CHECK(p.interval_moments(0.0, 1.0).m0 == Catch::Approx(1.0));
}

TEST_CASE("exact voronoi masses and means on uniform [0,1]") {
    const auto dist = uniform01();
    MomentOracle oracle = MomentOracle::exact();

    auto w = make1d({0.25, 0.75});
    auto mass = voronoi_masses(dist, w, oracle);
    CHECK(mass[0] == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(mass[1] == Catch::Approx(0.5).epsilon(1e-12));
    auto means = voronoi_means(dist, w, oracle);
    CHECK(means[0][0] == Catch::Approx(0.25).epsilon(1e-12));
    CHECK(means[1][0] == Catch::Approx(0.75).epsilon(1e-12));

    w = make1d({0.2, 0.4}); // midpoint 0.3
    mass = voronoi_masses(dist, w, oracle);
    CHECK(mass[0] == Catch::Approx(0.3).epsilon(1e-12));
    CHECK(mass[1] == Catch::Approx(0.7).epsilon(1e-12));
    means = voronoi_means(dist, w, oracle);
    CHECK(means[0][0] == Catch::Approx(0.15).epsilon(1e-12));
    CHECK(means[1][0] == Catch::Approx(0.65).epsilon(1e-12));

    w = make1d({0.9});
    mass = voronoi_masses(dist, w, oracle);
    CHECK(mass[0] == Catch::Approx(1.0));
    means = voronoi_means(dist, w, oracle);
    CHECK(means[0][0] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact oracle refuses unsupported instances") {
    const auto dist = gauss_mix_2d();
    MomentOracle oracle = MomentOracle::exact();
    Centers w(2, 2);
    w.x = {-0.4, -0.2, 0.45, 0.3};
    CHECK_THROWS_AS(oracle.evaluate(dist, w), capability_error);
}

TEST_CASE("masses form a probability vector; order-independent") {
    // centers deliberately unsorted: cells follow positions, not indices
    const auto instances = exact_probe_instances();
    Rng rng(2024);
    MomentOracle oracle = MomentOracle::exact();
    for (const auto& dist : instances) {
        for (int t = 0; t < 50; ++t) {
            const int k = 1 + int(rng.below(3));
            const auto w = random_centers_1d(dist, k, rng);
            const auto mom = oracle.evaluate(dist, w);
            double total = 0.0;
            for (int i = 0; i < k; ++i) {
                CHECK(mom.mass[i] >= 0.0);
                total += mom.mass[i];
            }
            CHECK(total == Catch::Approx(1.0).epsilon(1e-12));

            // positive-mass cell means lie inside their own cell interval
            std::vector<int> order(k);
            for (int i = 0; i < k; ++i) order[i] = i;
            std::sort(order.begin(), order.end(),
                      [&](int a, int b) { return w.x[a] < w.x[b]; });
            const double lo = dist.exact1d()->breakpoints().front();
            const double hi = dist.exact1d()->breakpoints().back();
            double left = lo;
            for (int r = 0; r < k; ++r) {
                const int i = order[r];
                const double right =
                    r + 1 < k ? 0.5 * (w.x[order[r]] + w.x[order[r + 1]]) : hi;
                if (mom.mean_ok[i]) {
                    const double mi = mom.mean_of(i)[0];
                    CHECK(mi >= left - 1e-12);
                    CHECK(mi <= right + 1e-12);
                }
                left = right;
            }
        }
    }
}

TEST_CASE("zero-mass cells are flagged, not NaN-poisoned") {
    // center far outside the support owns an empty cell
    const auto dist = uniform01();
    MomentOracle oracle = MomentOracle::exact();
    auto w = make1d({-0.9, 0.5});
    const auto mom = oracle.evaluate(dist, w);
    CHECK(mom.mass[0] == 0.0);
    CHECK(mom.mean_ok[0] == 0);
    CHECK(mom.mean_ok[1] == 1);
    const auto m0 = mom.mean_of(0);
    CHECK(std::isfinite(m0[0]));
    const auto means = voronoi_means(dist, w, oracle);
    CHECK(std::isfinite(means[0][0]));
    CHECK(means[1][0] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("MC masses converge to exact masses") {
    const auto dist = uniform01();
    const auto w = make1d({0.2, 0.4, 0.9});
    MomentOracle exact = MomentOracle::exact();
    MomentOracle mc = MomentOracle::monte_carlo(1000000, 31);
    const auto em = exact.evaluate(dist, w);
    const auto mm = mc.evaluate(dist, w);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(mm.mass[i] - em.mass[i]) < 5e-3);
}

TEST_CASE("sample_in_cell lands in its cell and matches the midpoint split") {
    const auto dist = uniform01();
    Rng rng(63);
    auto w = make1d({0.25, 0.75});
    for (int t = 0; t < 2000; ++t) {
        const auto x = sample_in_cell(dist, w, 0, rng);
        REQUIRE(x.has_value());
        REQUIRE((*x)[0] < 0.5);
        REQUIRE(nearest_center(w, *x).index == 0);
    }
    // w = (0.1, 0.11): cell 0 is [0, 0.105)
    w = make1d({0.1, 0.11});
    for (int t = 0; t < 500; ++t) {
        const auto x = sample_in_cell(dist, w, 0, rng);
        REQUIRE(x.has_value());
        REQUIRE((*x)[0] <= 0.105);
    }
    // k = 1: equivalent to plain sampling
    const auto single = make1d({0.5});
    Rng ra(7, 3), rb(7, 3);
    const auto via_cell = sample_in_cell(dist, single, 0, ra);
    CHECK((*via_cell)[0] == dist.sample(rb)[0]);
}

TEST_CASE("unconditional cell frequencies match voronoi masses") {
    const auto dist = uniform01();
    const auto w = make1d({0.2, 0.4});
    MomentOracle exact = MomentOracle::exact();
    const auto mass = exact.evaluate(dist, w).mass;
    Rng rng(17);
    const int n = 200000;
    std::vector<int> hits(2, 0);
    for (int t = 0; t < n; ++t) {
        const auto x = dist.sample(rng);
        ++hits[nearest_center(w, x).index];
    }
    for (int i = 0; i < 2; ++i) {
        const double freq = double(hits[i]) / n;
        const double se = std::sqrt(mass[i] * (1 - mass[i]) / n);
        CHECK(std::abs(freq - mass[i]) <= 3 * se + 1e-9);
    }
}

TEST_CASE("law of total expectation: sum P_i M_i equals the global mean") {
    const auto instances = exact_probe_instances();
    MomentOracle exact = MomentOracle::exact();
    Rng rng(88);
    for (const auto& dist : instances) {
        const double mu = dist.exact1d()->mean();
        for (int t = 0; t < 20; ++t) {
            const auto w = random_centers_1d(dist, 3, rng);
            const auto mom = exact.evaluate(dist, w);
            double total = 0.0;
            for (int i = 0; i < 3; ++i) total += mom.first[i]; // P_i * M_i
            CHECK(total == Catch::Approx(mu).margin(1e-12));
        }
    }
    // MC route on the 2-d mixture: compare against a direct sample mean
    const auto mix = gauss_mix_2d();
    Centers w(2, 2);
    w.x = {-0.3, 0.0, 0.4, 0.1};
    MomentOracle mc = MomentOracle::monte_carlo(400000, 5);
    const auto mom = mc.evaluate(mix, w);
    Rng ref(1234, 9);
    double mx = 0.0, my = 0.0;
    const int n = 400000;
    for (int t = 0; t < n; ++t) {
        const auto x = mix.sample(ref);
        mx += x[0];
        my += x[1];
    }
    mx /= n;
    my /= n;
    CHECK(mom.first[0] + mom.first[2] == Catch::Approx(mx).margin(5e-3));
    CHECK(mom.first[1] + mom.first[3] == Catch::Approx(my).margin(5e-3));
}
