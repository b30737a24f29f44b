#include "doctest.h"

#include <cmath>
#include <set>

#include "tally/error.hpp"
#include "tally/rng.hpp"
#include "tally/similarity.hpp"

using namespace tally;

namespace {

std::vector<std::string> names_of(std::size_t m) {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < m; ++i) n.push_back("f" + std::to_string(i));
    return n;
}

BinaryFeatureVector bits(std::vector<std::uint8_t> b) {
    BinaryFeatureVector v;
    v.names = names_of(b.size());
    v.bits = std::move(b);
    return v;
}

FeatureVector fv(std::vector<double> x) {
    FeatureVector v;
    v.names = names_of(x.size());
    v.values = std::move(x);
    return v;
}

SetPartition make_partition(std::vector<std::uint8_t> c, std::vector<std::uint8_t> s, std::vector<std::uint8_t> a) {
    SetPartition p;
    p.common = bits(std::move(c));
    p.subject_only = bits(std::move(s));
    p.archetype_only = bits(std::move(a));
    p.universe_size = p.common.size();
    for (std::size_t i = 0; i < p.universe_size; ++i) p.retained.push_back(i);
    return p;
}

// Set-enumeration oracle: features as index sets.
struct Sets {
    std::set<std::size_t> s, a;
};

}  // namespace

TEST_CASE("binarize uses open intervals") {
    const ToleranceSpec spec1 = uniform_spec(names_of(1), {0.0}, {1.0});
    CHECK(binarize(fv({0.5}), spec1).bits == std::vector<std::uint8_t>{1});
    CHECK(binarize(fv({1.0}), spec1).bits == std::vector<std::uint8_t>{0});
    CHECK(binarize(fv({0.0}), spec1).bits == std::vector<std::uint8_t>{0});
    const ToleranceSpec spec3 = uniform_spec(names_of(3), {0, 0, 0}, {1, 1, 1});
    CHECK(binarize(fv({0.3, 2.0, -1.0}), spec3).bits == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("binarize errors and NaN handling") {
    const ToleranceSpec spec = uniform_spec(names_of(2), {0, 0}, {1, 1});
    CHECK_THROWS_AS(binarize(fv({0.5}), spec), Error);
    FeatureVector renamed = fv({0.5, 0.5});
    renamed.names[1] = "other";
    try {
        binarize(renamed, spec);
        FAIL("expected a spec mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpecMismatch);
    }
    try {
        binarize(fv({INFINITY, 0.5}), spec);
        FAIL("expected invalid input");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidInput);
    }
    const auto b = binarize(fv({NAN, 0.5}), spec);
    CHECK(b.bits == std::vector<std::uint8_t>{0, 1});
    CHECK(b.nan_features == std::vector<std::string>{"f0"});
}

TEST_CASE("binarize is idempotent on bits with (0.5, 1.5)") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(7);
        for (auto& v : x) v = static_cast<double>(rng.uniform_index(2));
        const ToleranceSpec spec = uniform_spec(names_of(7), std::vector<double>(7, 0.5), std::vector<double>(7, 1.5));
        const auto b = binarize(fv(x), spec);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(b.bits[i] == static_cast<std::uint8_t>(x[i]));
    }
}

TEST_CASE("spec validation") {
    ToleranceSpec s = uniform_spec(names_of(2), {0, 0}, {1, 1});
    s.weights = {1.0, 0.5};
    try {
        validate(s);
        FAIL("weights below 1 must be rejected");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidWeights);
    }
    CHECK_THROWS_AS(uniform_spec(names_of(1), {1.0}, {1.0}), Error);
    CHECK_THROWS_AS(uniform_spec(names_of(1), {0.0}, {INFINITY}), Error);
    CHECK_THROWS_AS(uniform_spec({"a", "a"}, {0, 0}, {1, 1}), Error);
}

TEST_CASE("partition case table and policies") {
    const auto p = partition(bits({1, 0, 1}), bits({1, 1, 0}));
    CHECK(p.common.bits == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(p.subject_only.bits == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(p.archetype_only.bits == std::vector<std::uint8_t>{0, 1, 0});

    const auto q = partition(bits({0, 0}), bits({0, 0}), AbsentPolicy::CountAsCommon);
    CHECK(q.common.bits == std::vector<std::uint8_t>{1, 1});

    const auto d = partition(bits({0, 1}), bits({0, 1}), AbsentPolicy::DropFromUniverse);
    CHECK(d.size() == 1);
    CHECK(d.retained == std::vector<std::size_t>{1});
    CHECK(d.common.bits == std::vector<std::uint8_t>{1});
    CHECK(d.universe_size == 2);

    BinaryFeatureVector other = bits({1, 0});
    other.names[0] = "x";
    try {
        partition(bits({1, 0}), other);
        FAIL("expected mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpecMismatch);
    }
}

TEST_CASE("partition from tolerance puts misses in S minus A") {
    const auto p = partition_from_tolerance(bits({0, 1, 1}));
    CHECK(p.common.bits == std::vector<std::uint8_t>{0, 1, 1});
    CHECK(p.subject_only.bits == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(p.archetype_only.bits == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("tversky index examples") {
    const auto same = partition(bits({1, 1, 0}), bits({1, 1, 0}));
    CHECK(tversky_index(same, {0.3, 2.0}) == 1.0);
    const auto half = make_partition({1, 0}, {0, 1}, {0, 0});
    CHECK(tversky_index(half, {1.0, 1.0}) == 0.5);
    const auto empty = partition(bits({0, 0}), bits({0, 0}), AbsentPolicy::DropFromUniverse);
    try {
        tversky_index(empty, {1, 1});
        FAIL("expected degenerate");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateComparison);
    }
}

TEST_CASE("Dice equals set-enumeration oracle on all bit patterns up to length 8") {
    for (std::size_t m = 1; m <= 8; ++m) {
        const std::size_t n = std::size_t{1} << m;
        for (std::size_t sm = 0; sm < n; ++sm) {
            for (std::size_t am = 0; am < n; am += (m > 5 ? 7 : 1)) {
                std::vector<std::uint8_t> s(m), a(m);
                Sets sets;
                for (std::size_t i = 0; i < m; ++i) {
                    s[i] = (sm >> i) & 1;
                    a[i] = (am >> i) & 1;
                    if (s[i]) sets.s.insert(i);
                    if (a[i]) sets.a.insert(i);
                }
                std::size_t inter = 0, s_only = 0, a_only = 0;
                for (auto i : sets.s) (sets.a.count(i) ? inter : s_only)++;
                for (auto i : sets.a) a_only += sets.s.count(i) ? 0 : 1;
                const auto p = partition(bits(s), bits(a), AbsentPolicy::DropFromUniverse);
                if (inter + s_only + a_only == 0) {
                    CHECK_THROWS_AS(tversky_index(p, {0.5, 0.5}), Error);
                    continue;
                }
                const double oracle = 2.0 * inter / (2.0 * inter + s_only + a_only);
                REQUIRE(tversky_index(p, {0.5, 0.5}) == doctest::Approx(oracle).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("weighted similarity index examples") {
    const auto texture = make_partition({0, 1, 1}, {1, 0, 0}, {0, 0, 0});
    const auto both = make_partition({0, 0, 1}, {1, 1, 0}, {0, 0, 0});
    const std::vector<double> ones{1, 1, 1};
    CHECK(weighted_similarity_index(texture, ones) * 3.0 == 2.0);
    CHECK(weighted_similarity_index(both, ones) * 3.0 == 1.0);
    CHECK(weighted_similarity_index(texture, std::vector<double>{2, 1, 1}) == 0.5);
    try {
        weighted_similarity_index(texture, std::vector<double>{0.5, 1, 1});
        FAIL("expected invalid weights");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidWeights);
    }
}

TEST_CASE("WSI properties on random partitions") {
    Rng rng(11);
    for (int t = 0; t < 500; ++t) {
        const std::size_t m = 1 + rng.uniform_index(12);
        std::vector<std::uint8_t> s(m), a(m);
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
            a[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
        }
        const auto p = partition(bits(s), bits(a));
        // Disjoint and summing to all-ones under count_as_common.
        for (std::size_t i = 0; i < m; ++i)
            CHECK(p.common.bits[i] + p.subject_only.bits[i] + p.archetype_only.bits[i] == 1);
        std::vector<double> w(m);
        for (auto& x : w) x = 1.0 + 9.0 * rng.uniform01();
        const double v = weighted_similarity_index(p, w);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        std::vector<double> w3 = w;
        for (auto& x : w3) x *= 4.0;
        CHECK(weighted_similarity_index(p, w3) == doctest::Approx(v).epsilon(1e-14));
        const std::vector<double> ones(m, 1.0);
        CHECK(weighted_similarity_index(p, ones) == tversky_index(p, {1.0, 1.0}));
        // Swapping comparands swaps complements and keeps symmetric indices.
        const auto q = partition(bits(a), bits(s));
        CHECK(q.subject_only.bits == p.archetype_only.bits);
        CHECK(q.archetype_only.bits == p.subject_only.bits);
        CHECK(tversky_index(q, {0.7, 0.7}) == doctest::Approx(tversky_index(p, {0.7, 0.7})).epsilon(1e-14));
    }
}

TEST_CASE("tally accepts full-universe or retained weights") {
    const auto d = partition(bits({0, 1, 1}), bits({0, 1, 0}), AbsentPolicy::DropFromUniverse);
    const std::vector<double> full{5, 2, 3};
    const std::vector<double> kept{2, 3};
    CHECK(tally::tally(d, full).common == 2.0);
    CHECK(tally::tally(d, kept).subject_only == 3.0);
    CHECK_THROWS_AS(tally::tally(d, std::vector<double>{1.0}), Error);
}
