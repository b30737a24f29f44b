#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "tally/cobalt.hpp"
#include "tally/features.hpp"
#include "tally/error.hpp"
#include "tally/rng.hpp"

using namespace tally;

namespace {

GrayImage random_image(int rows, int cols, Rng& rng, int max_value = 255) {
    GrayImage img(rows, cols);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.uniform_index(static_cast<std::uint64_t>(max_value) + 1));
    return img;
}

// Offset from the angle definition: x to the right, y up, rows grow downward.
std::pair<int, int> oracle_offset(int d, int angle) {
    const double t = angle * M_PI / 180.0;
    const double cx = std::cos(t), sy = std::sin(t);
    const int dc = std::abs(cx) < 1e-9 ? 0 : (cx > 0 ? d : -d);
    const int dr = std::abs(sy) < 1e-9 ? 0 : (sy > 0 ? -d : d);
    return {dr, dc};
}

// Exhaustive ordered-pair enumeration over all pixel pairs.
std::vector<double> glcm_oracle(const LevelImage& lv, int k, const Mask& roi, int d, int angle) {
    const auto [dr, dc] = oracle_offset(d, angle);
    std::vector<double> counts(static_cast<std::size_t>(k * k), 0.0);
    double total = 0.0;
    for (int r1 = 0; r1 < lv.rows(); ++r1)
        for (int c1 = 0; c1 < lv.cols(); ++c1)
            for (int r2 = 0; r2 < lv.rows(); ++r2)
                for (int c2 = 0; c2 < lv.cols(); ++c2) {
                    if (r2 - r1 != dr || c2 - c1 != dc) continue;
                    if (!roi(r1, c1) || !roi(r2, c2)) continue;
                    counts[static_cast<std::size_t>(lv(r1, c1) * k + lv(r2, c2))] += 1.0;
                    total += 1.0;
                }
    if (total > 0)
        for (auto& c : counts) c /= total;
    return counts;
}

double naive_correlation(const Glcm& g) {
    const int k = g.levels;
    double mx = 0, my = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            mx += i * g(i, j);
            my += j * g(i, j);
        }
    double vx = 0, vy = 0, cov = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            vx += (i - mx) * (i - mx) * g(i, j);
            vy += (j - my) * (j - my) * g(i, j);
            cov += (i - mx) * (j - my) * g(i, j);
        }
    return cov / std::sqrt(vx * vy);
}

// O(n^3) hull: a directed edge p->q is on the counter-clockwise hull when
// every other point is strictly left of it or on the segment between.
double hull_area_oracle(const std::vector<Point>& pts) {
    double area2 = 0.0;
    for (const auto& p : pts) {
        for (const auto& q : pts) {
            if (p == q) continue;
            bool hull_edge = true;
            for (const auto& r : pts) {
                const long long cr = (q.c - p.c) * (r.r - p.r) - (q.r - p.r) * (r.c - p.c);
                if (cr < 0) {
                    hull_edge = false;
                    break;
                }
                if (cr == 0) {
                    const bool between = std::min(p.r, q.r) <= r.r && r.r <= std::max(p.r, q.r) &&
                                         std::min(p.c, q.c) <= r.c && r.c <= std::max(p.c, q.c);
                    if (!between) {
                        hull_edge = false;
                        break;
                    }
                }
            }
            // Only maximal edges: no hull point strictly inside p->q extends it.
            if (hull_edge) area2 += static_cast<double>(p.c * q.r - q.c * p.r);
        }
    }
    return std::abs(area2) / 2.0;
}

Mask rect_mask(int R, int C, int r0, int c0, int h, int w) {
    Mask m(R, C, 0);
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) m(r, c) = 1;
    return m;
}

}  // namespace

TEST_CASE("GLCM offsets follow the angle convention") {
    for (int d : {1, 2, 4, 8})
        for (int a : kGlcmAngles) {
            const Offset o = glcm_offset(d, a);
            const auto [dr, dc] = oracle_offset(d, a);
            CHECK(o.dr == dr);
            CHECK(o.dc == dc);
        }
    CHECK_THROWS_AS(glcm_offset(1, 30), Error);
}

TEST_CASE("GLCM trivial cases") {
    LevelImage lv(4, 4, 5);
    const Mask all(4, 4, 1);
    const Glcm g = glcm(lv, 8, all, 1, 0);
    CHECK(g(5, 5) == 1.0);

    LevelImage two(1, 2, 0);
    two(0, 0) = 3;
    two(0, 1) = 7;
    const Glcm h = glcm(two, 8, Mask(1, 2, 1), 1, 0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) CHECK(h(i, j) == ((i == 3 && j == 7) ? 1.0 : 0.0));

    const Glcm none = glcm(two, 8, Mask(1, 2, 1), 2, 0);
    CHECK(none.degenerate);
    CHECK(std::all_of(none.p.begin(), none.p.end(), [](double v) { return v == 0.0; }));
    CHECK(std::isnan(glcm_correlation(none).value));
}

TEST_CASE("GLCM matches exhaustive pair enumeration on small random images") {
    Rng rng(21);
    for (int t = 0; t < 40; ++t) {
        const int R = 2 + static_cast<int>(rng.uniform_index(11)), C = 2 + static_cast<int>(rng.uniform_index(11));
        const int k = 2 + static_cast<int>(rng.uniform_index(8));
        LevelImage lv(R, C);
        for (auto& v : lv.data()) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
        Mask roi(R, C);
        for (auto& v : roi.data()) v = rng.uniform01() < 0.7 ? 1 : 0;
        for (int d : {1, 2, 4, 8})
            for (int a : kGlcmAngles) {
                const Glcm g = glcm(lv, k, roi, d, a);
                REQUIRE(g.p == glcm_oracle(lv, k, roi, d, a));
                if (!g.degenerate) {
                    double s = 0;
                    for (double v : g.p) s += v;
                    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
                }
            }
    }
}

TEST_CASE("GLCM is translation covariant") {
    Rng rng(4);
    LevelImage lv(12, 12, 0);
    Mask roi(12, 12, 0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            lv(r, c) = static_cast<int>(rng.uniform_index(6));
            roi(r, c) = rng.uniform01() < 0.8;
        }
    LevelImage moved(12, 12, 0);
    Mask moved_roi(12, 12, 0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            moved(r + 3, c + 4) = lv(r, c);
            moved_roi(r + 3, c + 4) = roi(r, c);
        }
    for (int a : kGlcmAngles) CHECK(glcm(lv, 6, roi, 1, a).p == glcm(moved, 6, moved_roi, 1, a).p);
}

TEST_CASE("GLCM correlation") {
    Glcm diag;
    diag.levels = 4;
    diag.p.assign(16, 0.0);
    for (int k = 0; k < 4; ++k) diag.p[static_cast<std::size_t>(k * 4 + k)] = 0.25;
    CHECK(glcm_correlation(diag).value == doctest::Approx(1.0).epsilon(1e-15));

    Glcm prod;
    prod.levels = 3;
    const double pi[3] = {0.2, 0.5, 0.3}, qj[3] = {0.6, 0.1, 0.3};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) prod.p.push_back(pi[i] * qj[j]);
    CHECK(std::abs(glcm_correlation(prod).value) < 1e-12);

    Glcm flat;
    flat.levels = 3;
    flat.p = {0, 0, 0, 0, 1, 0, 0, 0, 0};
    const auto f = glcm_correlation(flat);
    CHECK(f.value == 0.0);
    CHECK(f.degenerate);

    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        Glcm g;
        g.levels = 2 + static_cast<int>(rng.uniform_index(15));
        double s = 0;
        for (int i = 0; i < g.levels * g.levels; ++i) {
            g.p.push_back(rng.uniform01());
            s += g.p.back();
        }
        for (auto& v : g.p) v /= s;
        CHECK(std::abs(glcm_correlation(g).value - naive_correlation(g)) < 1e-12);
    }
}

TEST_CASE("equal-probability quantization") {
    GrayImage ramp(16, 16);
    for (int i = 0; i < 256; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    const Quantized q = equal_probability_quantize(ramp, 16);
    std::vector<std::set<int>> per(16);
    for (std::size_t i = 0; i < ramp.size(); ++i) per[static_cast<std::size_t>(q.levels[i])].insert(ramp[i]);
    for (const auto& s : per) CHECK(s.size() == 16);

    const Quantized c = equal_probability_quantize(GrayImage(5, 5, 77), 16);
    CHECK(c.degenerate);
    CHECK(std::all_of(c.levels.data().begin(), c.levels.data().end(), [](int v) { return v == 0; }));

    // Per-pixel oracle: level of the median position of the pixel's tie group.
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const GrayImage img = random_image(9, 11, rng, t % 2 ? 255 : 12);
        const int k = 2 + static_cast<int>(rng.uniform_index(15));
        const Quantized r = equal_probability_quantize(img, k);
        const long long n = static_cast<long long>(img.size());
        for (std::size_t i = 0; i < img.size(); ++i) {
            long long below = 0, equal = 0;
            for (std::size_t j = 0; j < img.size(); ++j) {
                below += img[j] < img[i];
                equal += img[j] == img[i];
            }
            const long long pos = below + (equal - 1) / 2;
            REQUIRE(r.levels[i] == std::min<long long>(k - 1, k * pos / n));
        }
    }
    CHECK_THROWS_AS(equal_probability_quantize(ramp, 1), Error);
}

TEST_CASE("morphology of convex shapes") {
    const Morphology full = morphology_features(Mask(20, 30, 1));
    CHECK(full.pct_of_image == 100.0);
    CHECK(full.solidity == doctest::Approx(1.0));
    CHECK(full.convexity == doctest::Approx(1.0));

    const Morphology sq = morphology_features(rect_mask(100, 100, 40, 40, 10, 10));
    CHECK(sq.pct_of_image == doctest::Approx(1.0));
    CHECK(sq.solidity == doctest::Approx(1.0));
    CHECK(sq.convexity == doctest::Approx(1.0));
    CHECK(sq.perimeter_to_area == doctest::Approx(40.0 / 100.0));

    const Morphology empty = morphology_features(Mask(10, 10, 0));
    CHECK(empty.degenerate);
    CHECK(empty.pct_of_image == 0.0);
    CHECK(std::isnan(empty.perimeter_to_area));
    CHECK(std::isnan(empty.convexity));
    CHECK(std::isnan(empty.solidity));
}

TEST_CASE("plus pentomino scaled by 10") {
    Mask m(50, 50, 0);
    const int cells[5][2] = {{0, 1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}};
    for (const auto& cell : cells)
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c) m(10 + cell[0] * 10 + r, 10 + cell[1] * 10 + c) = 1;
    // Corner-point hull: a 30x30 square minus four corner triangles of legs 10.
    std::vector<Point> corners;
    for (int r = 0; r < 50; ++r)
        for (int c = 0; c < 50; ++c)
            if (m(r, c))
                for (int dr = 0; dr <= 1; ++dr)
                    for (int dc = 0; dc <= 1; ++dc) corners.push_back({r + dr, c + dc});
    std::sort(corners.begin(), corners.end(), [](const Point& a, const Point& b) { return a.r != b.r ? a.r < b.r : a.c < b.c; });
    corners.erase(std::unique(corners.begin(), corners.end()), corners.end());
    const double hull_area = hull_area_oracle(corners);
    CHECK(hull_area == 700.0);
    const Morphology p = morphology_features(m);
    CHECK(p.solidity == doctest::Approx(500.0 / hull_area).epsilon(1e-12));
    CHECK(p.convexity == doctest::Approx((40.0 + 40.0 * std::sqrt(2.0)) / 120.0).epsilon(1e-12));
    CHECK(perimeter_edges(m) == 120);
}

TEST_CASE("hull area matches the O(n^3) oracle on random point sets") {
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        std::vector<Point> pts;
        const int n = 3 + static_cast<int>(rng.uniform_index(20));
        for (int i = 0; i < n; ++i)
            pts.push_back({static_cast<long long>(rng.uniform_index(12)), static_cast<long long>(rng.uniform_index(12))});
        std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.r != b.r ? a.r < b.r : a.c < b.c; });
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        CHECK(polygon_area(convex_hull(pts)) == doctest::Approx(hull_area_oracle(pts)).epsilon(1e-12));
    }
}

TEST_CASE("morphology is invariant to frame padding except pct") {
    Rng rng(9);
    Mask m(12, 12, 0);
    for (int r = 2; r < 10; ++r)
        for (int c = 2; c < 10; ++c) m(r, c) = rng.uniform01() < 0.7;
    Mask big(36, 24, 0);
    for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 12; ++c) big(r + 5, c + 7) = m(r, c);
    const Morphology a = morphology_features(m), b = morphology_features(big);
    CHECK(a.perimeter_to_area == b.perimeter_to_area);
    CHECK(a.convexity == b.convexity);
    CHECK(a.solidity == b.solidity);
    CHECK(b.pct_of_image == doctest::Approx(a.pct_of_image * 144.0 / (36.0 * 24.0)).epsilon(1e-12));
}

TEST_CASE("segmentation of three plateaus") {
    GrayImage img(30, 30, 0);
    for (int r = 0; r < 30; ++r)
        for (int c = 10; c < 30; ++c) img(r, c) = c < 20 ? 128 : 255;
    const RoiMaskSet s = segment_rois(img);
    CHECK_FALSE(s.degenerate);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 30; ++c) {
            CHECK(s.background(r, c) == (img(r, c) == 0));
            CHECK(s.foreground(r, c) == (img(r, c) != 0));
            CHECK(s.special(r, c) == (img(r, c) == 255));
        }
    const RoiMaskSet k = segment_rois(GrayImage(8, 8, 40));
    CHECK(k.degenerate);
    CHECK(count_set(k.background) == 64);
    CHECK(count_set(k.foreground) == 0);
    CHECK(count_set(k.special) == 0);
}

TEST_CASE("segmentation contract on random images") {
    Rng rng(31);
    for (int t = 0; t < 30; ++t) {
        const GrayImage img = random_image(16, 16, rng);
        const RoiMaskSet s = segment_rois(img);
        for (std::size_t i = 0; i < img.size(); ++i) {
            CHECK((s.background[i] ^ s.foreground[i]) == 1);
            if (s.special[i]) CHECK(s.foreground[i] == 1);
        }
    }
}

TEST_CASE("CoBaLT special ROI recovers the generator cell mask") {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        CobaltConfig c;
        c.seed = seed;
        const CobaltRealization r = generate_cobalt(c);
        const RoiMaskSet s = segment_rois(to_grayscale(r.rgb, ChannelSelect::Luma));
        double inter = 0, a = 0, b = 0;
        for (std::size_t i = 0; i < r.cell.size(); ++i) {
            inter += s.special[i] && r.cell[i];
            a += s.special[i];
            b += r.cell[i];
        }
        CHECK(2.0 * inter / (a + b) >= 0.8);
    }
}

TEST_CASE("feature vector structure and determinism") {
    const auto names = feature_names();
    REQUIRE(names.size() == 60);
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == 60);
    CHECK(names[0] == "background.pct_of_image");
    CHECK(names[4] == "background.glcm_corr.1.0");
    CHECK(names[59] == "special.glcm_corr.8.135");
    Rng rng(2);
    const GrayImage img = random_image(32, 32, rng);
    const FeatureVector a = extract_features(img), b = extract_features(img);
    REQUIRE(a.size() == 60);
    for (std::size_t i = 0; i < 60; ++i) CHECK(std::memcmp(&a.values[i], &b.values[i], sizeof(double)) == 0);

    GlcmSpec bad;
    bad.distances = {2, 1};
    CHECK_THROWS_AS(extract_features(img, bad), Error);
    CHECK(extract_features(GrayImage(8, 8, 3)).flags.size() > 0);
}

TEST_CASE("background shuffle changes background texture only") {
    CobaltConfig c;
    c.seed = 4;
    const CobaltRealization r = generate_cobalt(c);
    const CobaltRealization s = shuffle_background(r, 17);
    const FeatureVector a = extract_features(to_grayscale(r.rgb, ChannelSelect::Luma));
    const FeatureVector b = extract_features(to_grayscale(s.rgb, ChannelSelect::Luma));
    const auto names = feature_names();
    for (std::size_t i = 0; i < 60; ++i) {
        if (names[i].rfind("special.", 0) == 0 && names[i].find("glcm") == std::string::npos)
            CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-12);
        if (names[i].rfind("background.glcm_corr.", 0) == 0) CHECK(a.values[i] != b.values[i]);
    }
    CHECK(b.values[4] < a.values[4]);
}

TEST_CASE("grayscale conversion") {
    RgbImage img(1, 2);
    img.red[0] = 255;
    img.green[1] = 255;
    CHECK(to_grayscale(img, ChannelSelect::Luma)[0] == 76);
    CHECK(to_grayscale(img, ChannelSelect::Luma)[1] == 150);
    CHECK(to_grayscale(img, ChannelSelect::Green) == img.green);
    CHECK_THROWS_AS(parse_channel_select("alpha"), Error);
}
