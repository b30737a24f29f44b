#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "tally/grid.hpp"

namespace tally {

Field to_field(const GrayImage& img);

/// Rounds and clamps to [0,255].
GrayImage to_gray(const Field& f);

/// Linear map of [min,max] onto [0,255]; a constant field maps to 0.
GrayImage normalize_to_gray(const Field& f);

/// Separable Gaussian blur; kernel radius ceil(4 sigma), mirrored borders.
Field gaussian_blur(const Field& f, double sigma);

/// Difference of Gaussians: blur(f, s_narrow) - blur(f, s_wide).
Field difference_of_gaussians(const Field& f, double s_narrow, double s_wide);

/// Exact Euclidean distance from each set pixel of `m` to the nearest unset
/// pixel; the area outside the frame counts as unset. Unset pixels get 0.
Field distance_map(const Mask& m);

/// Exact Euclidean distance from each pixel to the nearest set pixel of `m`.
/// Throws when `m` is empty.
Field distance_to_set(const Mask& m);

/// 3x3 square structuring element; the area outside the frame is unset.
Mask dilate(const Mask& m);
Mask erode(const Mask& m);

struct Components {
    LabelImage labels;  // 0 = unset, 1..count otherwise, numbered in raster order
    int count = 0;
};

/// 8-connected component labelling.
Components connected_components(const Mask& m);

using Histogram = std::array<std::size_t, 256>;

Histogram histogram(const GrayImage& img);
Histogram histogram(const GrayImage& img, const Mask& roi);

/// Single Otsu threshold t: class 0 is intensity <= t. Empty when the
/// histogram holds fewer than two distinct intensities.
std::optional<int> otsu_threshold(const Histogram& h);

/// Otsu threshold of a real-valued field using `bins` equal-width bins;
/// returns the upper edge of the lower class.
std::optional<double> otsu_threshold(const Field& f, int bins = 256);

struct OtsuPair {
    int lower = 0;  // class 0: intensity <= lower
    int upper = 0;  // class 1: lower < intensity <= upper; class 2: > upper
};

/// Three-class Otsu. The lowest class is required to be nonempty; ties are
/// broken toward the lexicographically smallest (lower, upper). Empty for a
/// constant histogram.
std::optional<OtsuPair> otsu_two_thresholds(const Histogram& h);

}  // namespace tally
