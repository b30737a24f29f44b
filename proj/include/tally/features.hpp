#pragma once

#include <string>
#include <vector>

#include "tally/grid.hpp"
#include "tally/similarity.hpp"

namespace tally {

/// Background / foreground / special regions of a grayscale image.
/// special ⊆ foreground, background ∩ foreground = ∅, and the union of
/// background and foreground covers the frame.
struct RoiMaskSet {
    Mask background;
    Mask foreground;
    Mask special;
    bool degenerate = false;
};

/// Three-class Otsu on the intensity histogram: background is at or below
/// the lower threshold, foreground above it, special above the upper one.
/// A constant image is all background and flagged degenerate.
RoiMaskSet segment_rois(const GrayImage& img);

struct Morphology {
    double pct_of_image = 0.0;
    double perimeter_to_area = 0.0;
    double convexity = 0.0;
    double solidity = 0.0;
    bool degenerate = false;
};

/// Perimeter is the count of unit pixel edges separating set pixels from
/// unset ones (the frame exterior counts as unset). The convex hull is taken
/// over the corner points of boundary pixels, so convex digital shapes give
/// solidity = convexity = 1. Convexity can exceed 1 for a mask made of
/// separated pieces. An empty mask yields (0, NaN, NaN, NaN), degenerate.
Morphology morphology_features(const Mask& mask);

/// Unit pixel edges between set and unset pixels.
std::size_t perimeter_edges(const Mask& mask);

struct Point {
    long long r = 0;
    long long c = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
std::vector<Point> convex_hull(std::vector<Point> pts);
double polygon_area(const std::vector<Point>& poly);
double polygon_perimeter(const std::vector<Point>& poly);

struct Quantized {
    LevelImage levels;
    int k = 0;
    bool degenerate = false;
};

/// Equal-probability quantization to k levels. Pixels sharing an intensity
/// share a level: a tie group takes the level floor(k * pos / N) of its
/// median sorted position pos. A constant image maps to level 0.
Quantized equal_probability_quantize(const GrayImage& img, int k);

struct GlcmSpec {
    int levels = 16;
    std::vector<int> distances{1, 2, 4, 8};
};

void validate(const GlcmSpec& spec);

inline constexpr int kGlcmAngles[4] = {0, 45, 90, 135};

struct Offset {
    int dr = 0;
    int dc = 0;
};

/// Integer displacement for a distance and one of the four angles.
Offset glcm_offset(int distance, int angle_deg);

/// Asymmetric normalized co-occurrence matrix, K x K, row-major.
struct Glcm {
    int levels = 0;
    std::vector<double> p;
    std::size_t pairs = 0;
    bool degenerate = false;

    double operator()(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

/// Counts ordered pairs (p, p + offset) with both ends inside `roi`; no
/// symmetrization. Zero qualifying pairs give an all-zero degenerate matrix.
Glcm glcm(const LevelImage& levels, int k, const Mask& roi, int distance, int angle_deg);

struct GlcmCorrelation {
    double value = 0.0;
    bool degenerate = false;
};

/// Haralick intra-level correlation. Zero marginal variance returns 0
/// (flagged); an all-zero matrix returns NaN (flagged).
GlcmCorrelation glcm_correlation(const Glcm& g);

/// Names in extraction order: roi.metric for morphology and
/// roi.glcm_corr.<distance>.<angle> for texture, rois in the order
/// background, foreground, special.
std::vector<std::string> feature_names(const GlcmSpec& spec = {});

/// 3 ROIs x (4 morphology + |distances| x 4 angle correlations); 60
/// components with the default spec.
FeatureVector extract_features(const GrayImage& img, const GlcmSpec& spec = {});

enum class ChannelSelect { Luma, Red, Green, Blue };

ChannelSelect parse_channel_select(const std::string& s);
const char* to_string(ChannelSelect c);

/// Luma uses integer BT.601 weights (299, 587, 114) / 1000 with rounding.
GrayImage to_grayscale(const RgbImage& img, ChannelSelect select);

}  // namespace tally
