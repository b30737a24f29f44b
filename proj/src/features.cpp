#include "tally/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tally/image_ops.hpp"

namespace tally {

RoiMaskSet segment_rois(const GrayImage& img) {
    if (img.empty()) fail(ErrorKind::InvalidInput, "segment_rois: empty image");
    const int R = img.rows(), C = img.cols();
    RoiMaskSet s{Mask(R, C, 0), Mask(R, C, 0), Mask(R, C, 0), false};
    const auto th = otsu_two_thresholds(histogram(img));
    if (!th) {
        s.background.data().assign(img.size(), 1);
        s.degenerate = true;
        return s;
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int v = img[i];
        s.background[i] = v <= th->lower;
        s.foreground[i] = v > th->lower;
        s.special[i] = v > th->upper;
    }
    return s;
}

std::size_t perimeter_edges(const Mask& mask) {
    std::size_t edges = 0;
    const int R = mask.rows(), C = mask.cols();
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (!mask(r, c)) continue;
            edges += (r == 0 || !mask(r - 1, c));
            edges += (r == R - 1 || !mask(r + 1, c));
            edges += (c == 0 || !mask(r, c - 1));
            edges += (c == C - 1 || !mask(r, c + 1));
        }
    }
    return edges;
}

namespace {

long long cross(const Point& o, const Point& a, const Point& b) {
    return (a.r - o.r) * (b.c - o.c) - (a.c - o.c) * (b.r - o.r);
}

}  // namespace

std::vector<Point> convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(),
              [](const Point& a, const Point& b) { return a.r != b.r ? a.r < b.r : a.c < b.c; });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k - 1);
    return hull;
}

double polygon_area(const std::vector<Point>& poly) {
    if (poly.size() < 3) return 0.0;
    long long twice = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        twice += a.r * b.c - b.r * a.c;
    }
    return std::abs(static_cast<double>(twice)) / 2.0;
}

double polygon_perimeter(const std::vector<Point>& poly) {
    if (poly.size() < 2) return 0.0;
    double p = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        p += std::hypot(static_cast<double>(a.r - b.r), static_cast<double>(a.c - b.c));
    }
    return p;
}

Morphology morphology_features(const Mask& mask) {
    Morphology m;
    const std::size_t area = count_set(mask);
    if (area == 0) {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        m.perimeter_to_area = m.convexity = m.solidity = nan;
        m.degenerate = true;
        return m;
    }
    const int R = mask.rows(), C = mask.cols();
    std::vector<Point> corners;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (!mask(r, c)) continue;
            const bool boundary = r == 0 || c == 0 || r == R - 1 || c == C - 1 || !mask(r - 1, c) ||
                                  !mask(r + 1, c) || !mask(r, c - 1) || !mask(r, c + 1);
            if (!boundary) continue;
            corners.push_back({r, c});
            corners.push_back({r, c + 1});
            corners.push_back({r + 1, c});
            corners.push_back({r + 1, c + 1});
        }
    }
    const auto hull = convex_hull(std::move(corners));
    const double perimeter = static_cast<double>(perimeter_edges(mask));
    const double a = static_cast<double>(area);
    m.pct_of_image = 100.0 * a / static_cast<double>(mask.size());
    m.perimeter_to_area = perimeter / a;
    m.convexity = polygon_perimeter(hull) / perimeter;
    m.solidity = a / polygon_area(hull);
    return m;
}

Quantized equal_probability_quantize(const GrayImage& img, int k) {
    if (k < 2) fail(ErrorKind::InvalidInput, "quantization needs at least 2 levels");
    if (img.empty()) fail(ErrorKind::InvalidInput, "quantization of an empty image");
    Quantized q{LevelImage(img.rows(), img.cols(), 0), k, false};
    const Histogram h = histogram(img);
    const auto distinct = std::count_if(h.begin(), h.end(), [](std::size_t c) { return c > 0; });
    if (distinct < 2) {
        q.degenerate = true;
        return q;
    }
    const auto n = static_cast<long long>(img.size());
    std::array<int, 256> level{};
    long long below = 0;
    for (int v = 0; v < 256; ++v) {
        const auto cnt = static_cast<long long>(h[v]);
        if (cnt > 0) {
            const long long median_pos = below + (cnt - 1) / 2;
            level[v] = static_cast<int>(std::min<long long>(k - 1, (k * median_pos) / n));
        }
        below += cnt;
    }
    for (std::size_t i = 0; i < img.size(); ++i) q.levels[i] = level[img[i]];
    return q;
}

void validate(const GlcmSpec& spec) {
    if (spec.levels < 2) fail(ErrorKind::InvalidInput, "GLCM needs at least 2 levels");
    if (spec.distances.empty()) fail(ErrorKind::InvalidInput, "GLCM distance list is empty");
    for (std::size_t i = 0; i < spec.distances.size(); ++i) {
        if (spec.distances[i] <= 0 || (i > 0 && spec.distances[i] <= spec.distances[i - 1]))
            fail(ErrorKind::InvalidInput, "GLCM distances must be strictly increasing positive integers");
    }
}

Offset glcm_offset(int distance, int angle_deg) {
    switch (angle_deg) {
        case 0: return {0, distance};
        case 45: return {-distance, distance};
        case 90: return {-distance, 0};
        case 135: return {-distance, -distance};
        default: fail(ErrorKind::InvalidInput, "GLCM angle must be 0, 45, 90 or 135");
    }
}

Glcm glcm(const LevelImage& levels, int k, const Mask& roi, int distance, int angle_deg) {
    if (!levels.same_shape(roi)) fail(ErrorKind::InvalidInput, "GLCM: ROI shape differs from image");
    if (k < 2) fail(ErrorKind::InvalidInput, "GLCM needs at least 2 levels");
    const Offset off = glcm_offset(distance, angle_deg);
    Glcm g;
    g.levels = k;
    std::vector<std::size_t> counts(static_cast<std::size_t>(k) * k, 0);
    const int R = levels.rows(), C = levels.cols();
    const int r0 = std::max(0, -off.dr), r1 = std::min(R, R - off.dr);
    const int c0 = std::max(0, -off.dc), c1 = std::min(C, C - off.dc);
    for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
            if (!roi(r, c) || !roi(r + off.dr, c + off.dc)) continue;
            const int i = levels(r, c), j = levels(r + off.dr, c + off.dc);
            if (i < 0 || i >= k || j < 0 || j >= k) fail(ErrorKind::InvalidInput, "GLCM: level out of range");
            ++counts[static_cast<std::size_t>(i) * k + j];
            ++g.pairs;
        }
    }
    g.p.assign(counts.size(), 0.0);
    if (g.pairs == 0) {
        g.degenerate = true;
        return g;
    }
    const double total = static_cast<double>(g.pairs);
    for (std::size_t i = 0; i < counts.size(); ++i) g.p[i] = static_cast<double>(counts[i]) / total;
    return g;
}

GlcmCorrelation glcm_correlation(const Glcm& g) {
    const int k = g.levels;
    std::vector<double> px(k, 0.0), py(k, 0.0);
    double mass = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            px[i] += g(i, j);
            py[j] += g(i, j);
            mass += g(i, j);
        }
    }
    if (mass <= 0.0) return {std::numeric_limits<double>::quiet_NaN(), true};
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < k; ++i) {
        mx += i * px[i];
        my += i * py[i];
    }
    double vx = 0.0, vy = 0.0;
    for (int i = 0; i < k; ++i) {
        vx += (i - mx) * (i - mx) * px[i];
        vy += (i - my) * (i - my) * py[i];
    }
    const double sd = std::sqrt(vx) * std::sqrt(vy);
    if (sd <= 0.0) return {0.0, true};
    double sij = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) sij += static_cast<double>(i) * j * g(i, j);
    return {(sij - mx * my) / sd, false};
}

namespace {

constexpr const char* kRoiNames[3] = {"background", "foreground", "special"};
constexpr const char* kMorphNames[4] = {"pct_of_image", "perimeter_to_area", "convexity", "solidity"};

}  // namespace

std::vector<std::string> feature_names(const GlcmSpec& spec) {
    validate(spec);
    std::vector<std::string> names;
    for (const char* roi : kRoiNames) {
        for (const char* m : kMorphNames) names.push_back(std::string(roi) + "." + m);
        for (int d : spec.distances)
            for (int a : kGlcmAngles)
                names.push_back(std::string(roi) + ".glcm_corr." + std::to_string(d) + "." + std::to_string(a));
    }
    return names;
}

FeatureVector extract_features(const GrayImage& img, const GlcmSpec& spec) {
    validate(spec);
    if (img.rows() < 2 || img.cols() < 2) fail(ErrorKind::InvalidInput, "image must be at least 2x2");
    FeatureVector fv;
    fv.names = feature_names(spec);
    fv.values.reserve(fv.names.size());

    const RoiMaskSet rois = segment_rois(img);
    if (rois.degenerate) fv.flags.push_back("segmentation:degenerate");
    const Quantized q = equal_probability_quantize(img, spec.levels);
    if (q.degenerate) fv.flags.push_back("quantization:degenerate");

    const Mask* masks[3] = {&rois.background, &rois.foreground, &rois.special};
    for (int r = 0; r < 3; ++r) {
        const Morphology m = morphology_features(*masks[r]);
        if (m.degenerate) fv.flags.push_back(std::string(kRoiNames[r]) + ":empty");
        fv.values.insert(fv.values.end(), {m.pct_of_image, m.perimeter_to_area, m.convexity, m.solidity});
        for (int d : spec.distances) {
            for (int a : kGlcmAngles) {
                const Glcm g = glcm(q.levels, spec.levels, *masks[r], d, a);
                const GlcmCorrelation corr = glcm_correlation(g);
                if (corr.degenerate && !m.degenerate)
                    fv.flags.push_back(std::string(kRoiNames[r]) + ".glcm_corr." + std::to_string(d) + "." +
                                       std::to_string(a) + (g.degenerate ? ":no_pairs" : ":zero_variance"));
                fv.values.push_back(corr.value);
            }
        }
    }
    return fv;
}

ChannelSelect parse_channel_select(const std::string& s) {
    if (s == "luma" || s == "gray") return ChannelSelect::Luma;
    if (s == "red") return ChannelSelect::Red;
    if (s == "green") return ChannelSelect::Green;
    if (s == "blue") return ChannelSelect::Blue;
    fail(ErrorKind::Usage, "unknown channel '" + s + "' (expected luma, red, green or blue)");
}

const char* to_string(ChannelSelect c) {
    switch (c) {
        case ChannelSelect::Luma: return "luma";
        case ChannelSelect::Red: return "red";
        case ChannelSelect::Green: return "green";
        case ChannelSelect::Blue: return "blue";
    }
    return "luma";
}

GrayImage to_grayscale(const RgbImage& img, ChannelSelect select) {
    switch (select) {
        case ChannelSelect::Red: return img.red;
        case ChannelSelect::Green: return img.green;
        case ChannelSelect::Blue: return img.blue;
        case ChannelSelect::Luma: break;
    }
    GrayImage g(img.rows(), img.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const int v = 299 * img.red[i] + 587 * img.green[i] + 114 * img.blue[i];
        g[i] = static_cast<std::uint8_t>((v + 500) / 1000);
    }
    return g;
}

}  // namespace tally
