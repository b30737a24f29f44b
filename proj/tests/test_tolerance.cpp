#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "tally/error.hpp"
#include "tally/rng.hpp"
#include "tally/tolerance.hpp"

using namespace tally;

namespace {

std::vector<double> normals(std::size_t n, Rng& rng, double mu = 0.0, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = mu + sd * rng.normal();
    return v;
}

// Evaluate both ECDFs at every observed value.
double ks_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    double best = 0.0;
    std::vector<double> pts = a;
    pts.insert(pts.end(), b.begin(), b.end());
    for (double t : pts) {
        double fa = 0, fb = 0;
        for (double x : a) fa += x <= t;
        for (double x : b) fb += x <= t;
        best = std::max(best, std::abs(fa / a.size() - fb / b.size()));
    }
    return best;
}

}  // namespace

TEST_CASE("ks statistic") {
    const std::vector<double> a{1, 2, 3};
    CHECK(ks_statistic(a, a) == 0.0);
    const std::vector<double> b{5, 6};
    CHECK(ks_statistic(a, b) == 1.0);
    CHECK_THROWS_AS(ks_statistic(a, std::vector<double>{}), Error);
    Rng rng(20);
    for (int t = 0; t < 200; ++t) {
        auto x = normals(1 + rng.uniform_index(30), rng);
        auto y = normals(1 + rng.uniform_index(30), rng, 0.3);
        // Coarsen so ties occur.
        if (t % 2)
            for (auto* v : {&x, &y})
                for (auto& e : *v) e = std::round(e * 2) / 2;
        const double k = ks_statistic(x, y);
        CHECK(std::abs(k - ks_oracle(x, y)) <= 1e-12);
        CHECK(k == ks_statistic(y, x));
    }
}

TEST_CASE("ks tolerance: degenerate, determinism, calibration") {
    const std::vector<std::vector<double>> same(4, std::vector<double>{1, 2, 3});
    const Interval d = ks_tolerance(same);
    CHECK(d.lower == 0.0);
    CHECK(d.upper == 0.0);
    CHECK(std::find(d.flags.begin(), d.flags.end(), "degenerate") != d.flags.end());
    CHECK_THROWS_AS(ks_tolerance({std::vector<double>{1.0}}), Error);

    Rng rng(21);
    int inside = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<std::vector<double>> arch;
        for (int i = 0; i < 20; ++i) arch.push_back(normals(40, rng));
        const Interval iv = ks_tolerance(arch, 0.05, 0.95, 1000, static_cast<std::uint64_t>(t));
        const auto subject = normals(40, rng);
        const double k = ks_statistic(subject, arch[rng.uniform_index(arch.size())]);
        inside += (k >= iv.lower && k <= iv.upper);
        if (t == 0) {
            const Interval again = ks_tolerance(arch, 0.05, 0.95, 1000, 0);
            CHECK(again.lower == iv.lower);
            CHECK(again.upper == iv.upper);
        }
    }
    CHECK(inside >= 0.85 * trials);
}

TEST_CASE("split-half ks") {
    Rng rng(22);
    const auto a = normals(200, rng);
    const auto b = normals(200, rng, 2.0);
    const Interval iv = split_half_ks_tolerance(a, 0.05, 0.95, 200, 1);
    CHECK(iv.lower < iv.upper);
    CHECK(split_half_ks_statistic(b, a, 200, 1) > iv.upper);
    const double self = split_half_ks_statistic(a, a, 200, 1, true);
    CHECK(self >= iv.lower);
    CHECK(self <= iv.upper);
}

TEST_CASE("percent tolerance") {
    const Interval a = percent_tolerance(10, 20, 0.1);
    CHECK(a.lower == doctest::Approx(8.0));
    CHECK(a.upper == doctest::Approx(12.0));
    const Interval b = percent_tolerance(-5, 20, 0.1);
    CHECK(b.lower == doctest::Approx(-6.0));
    CHECK(b.upper == doctest::Approx(-4.0));
    const Interval z = percent_tolerance(0, 20, 0.3);
    CHECK(z.lower == -0.3);
    CHECK(z.upper == 0.3);
    CHECK(!z.flags.empty());
    Rng rng(23);
    for (int t = 0; t < 100; ++t) {
        const double v = rng.uniform(-100, 100), p = rng.uniform(0.1, 90);
        const Interval i = percent_tolerance(v, p, 1.0);
        CHECK(i.lower < v);
        CHECK(v < i.upper);
    }
}

TEST_CASE("kde intersection tolerance") {
    Rng rng(24);
    const auto arch = normals(4000, rng);
    const auto shifted = normals(4000, rng, 3.0);
    const KdeTolerance t = kde_intersection_tolerance(arch, shifted);
    CHECK(std::abs(t.upper - 1.5) < 0.1);
    CHECK(std::find(t.flags.begin(), t.flags.end(), "open_lower") != t.flags.end());
    CHECK(t.lower < t.mode);
    CHECK(t.mode < t.upper);

    const auto wide = normals(4000, rng, 0.0, 2.0);
    const KdeTolerance w = kde_intersection_tolerance(arch, wide);
    const double x = std::sqrt(std::log(2.0) / 0.375);  // equal density of N(0,1) and N(0,4)
    CHECK(std::abs(w.upper - x) < 0.15);
    CHECK(std::abs(w.lower + x) < 0.15);
    CHECK(std::abs(w.lower + w.upper) < 0.15);

    CHECK_THROWS_AS(kde_intersection_tolerance(arch, arch), Error);
    CHECK_THROWS_AS(kde_intersection_tolerance(normals(10, rng), wide), Error);
}

TEST_CASE("silverman bandwidth") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const double sd = std::sqrt(2.5);
    const double iqr = 2.0 / 1.34;
    CHECK(silverman_bandwidth(x) == doctest::Approx(0.9 * std::min(sd, iqr) * std::pow(5.0, -0.2)));
}

TEST_CASE("random forest importance") {
    int top = 0;
    for (std::uint64_t run = 0; run < 100; ++run) {
        Rng rng(mix_seed(25, run));
        std::vector<std::vector<double>> x(120, std::vector<double>(5));
        std::vector<int> y(120);
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = static_cast<int>(i % 2);
            for (auto& v : x[i]) v = rng.normal();
            x[i][2] = y[i] + 0.1 * rng.uniform01();
        }
        ForestOptions o;
        o.n_trees = 32;
        o.seed = run;
        const auto imp = random_forest_importance(x, y, o);
        top += std::max_element(imp.begin(), imp.end()) - imp.begin() == 2;
    }
    CHECK(top >= 95);

    for (std::uint64_t run = 0; run < 100; ++run) {
        Rng rng(mix_seed(26, run));
        std::vector<std::vector<double>> x(120, std::vector<double>(5));
        std::vector<int> y(120);
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = static_cast<int>(rng.uniform_index(2));
            for (auto& v : x[i]) v = rng.normal();
        }
        ForestOptions o;
        o.n_trees = 32;
        o.seed = run;
        const auto imp = random_forest_importance(x, y, o);
        double sum = 0;
        for (double v : imp) sum += v;
        REQUIRE(sum == doctest::Approx(1.0));
        REQUIRE(*std::max_element(imp.begin(), imp.end()) / *std::min_element(imp.begin(), imp.end()) < 5.0);
        if (run == 0) {
            auto xx = x;
            auto yy = y;
            xx.insert(xx.end(), x.begin(), x.end());
            yy.insert(yy.end(), y.begin(), y.end());
            CHECK(random_forest_importance(xx, yy, o) == random_forest_importance(xx, yy, o));
            o.jobs = 3;
            CHECK(random_forest_importance(x, y, o) == imp);
        }
    }
    std::vector<std::vector<double>> x(30, std::vector<double>{1.0});
    CHECK_THROWS_AS(random_forest_importance(x, std::vector<int>(30, 1)), Error);
}

TEST_CASE("importance weights") {
    const std::vector<double> imp{0.5, 0.25, 0.25};
    const auto w = importance_weights(imp, 3, {"a", "b", "c"});
    CHECK(w.weights == std::vector<double>{2, 1, 1});
    CHECK(w.names[0] == "a");
    CHECK(importance_weights(imp, 1).weights == std::vector<double>{1});
    CHECK_THROWS_AS(importance_weights(std::vector<double>{0.5, 0.5, 0.0}, 3), Error);
    CHECK_THROWS_AS(importance_weights(imp, 4), Error);
    Rng rng(27);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> v(12);
        for (auto& e : v) e = rng.uniform(0.01, 1);
        const auto r = importance_weights(v, 1 + rng.uniform_index(12));
        REQUIRE(*std::min_element(r.weights.begin(), r.weights.end()) == 1.0);
        for (std::size_t i = 1; i < r.weights.size(); ++i) {
            REQUIRE(r.weights[i] <= r.weights[i - 1]);
            REQUIRE(v[r.indices[i]] <= v[r.indices[i - 1]]);
        }
    }
}
