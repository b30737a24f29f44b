#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tally/grid.hpp"

namespace tally {

/// Correlated-background lumpy triple phantom parameters.
struct CobaltConfig {
    int rows = 256;
    int cols = 256;
    double lump_count_mean = 100.0;
    double lump_width = 10.0;
    /// Field quantiles separating background|foreground and foreground|cell.
    double background_quantile = 0.55;
    double cell_quantile = 0.85;
    /// DoG (narrow, wide) sigmas for background and for foreground/cell texture.
    std::array<double, 2> background_dog{1.0, 2.0};
    std::array<double, 2> cell_dog{2.0, 4.0};
    /// Gaussian pre-smoothing of the cell EDM before the Hessian.
    double hessian_sigma = 1.0;
    /// Minimum ridge strength (negated smallest Hessian eigenvalue) of a spine.
    double ridge_threshold = 0.4;
    int max_attempts = 8;
    std::uint64_t seed = 0;
};

void validate(const CobaltConfig& cfg);

struct LumpCenter {
    double row = 0.0;
    double col = 0.0;
};

/// Sum of isotropic unit-amplitude Gaussian lumps exp(-d^2 / 2w^2), each
/// truncated at 4w. Pixel (r, c) sits at coordinates (r, c).
Field lump_field(int rows, int cols, const std::vector<LumpCenter>& centers, double width);

/// N ~ Poisson(lump_count_mean) lumps at uniform centers over the frame
/// [-0.5, rows-0.5) x [-0.5, cols-0.5); deterministic per seed.
Field lumpy_background(const CobaltConfig& cfg, std::uint64_t seed);

struct CobaltRealization {
    RgbImage rgb;
    /// background, foreground, cell and edge partition the frame.
    Mask background;
    Mask foreground;
    Mask cell;
    Mask edge;
    /// Support of the blue channel; a subset of `cell`.
    Mask spines;
    std::uint64_t seed = 0;
    int attempts = 1;
    std::vector<std::string> ablations;
    std::vector<std::string> flags;
};

/// Threshold lumpy field into regions, add DoG texture per region, EDM shading
/// on the foreground, Hessian-ridge spines of the cell EDM in blue only, and
/// dilation-minus-erosion edges. An empty cell mask triggers a retry with a
/// derived sub-seed, up to `max_attempts`.
CobaltRealization generate_cobalt(const CobaltConfig& cfg);

/// Ridge strength max(0, -lambda_min) of the Hessian of `f` after Gaussian
/// smoothing; central differences, clamped borders.
Field hessian_ridge_strength(const Field& f, double sigma);

/// Blue channel set to zero.
CobaltRealization ablate_spines(CobaltRealization r);

/// Red and green background pixels permuted by one shared permutation.
/// Empty background: returned unchanged and flagged.
CobaltRealization shuffle_background(CobaltRealization r, std::uint64_t seed);

}  // namespace tally
