#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tally/grid.hpp"

namespace tally {

struct SeedPoint {
    double row = 0.0;
    double col = 0.0;
};

using SeedSet = std::vector<SeedPoint>;

struct WonostConfig {
    int rows = 256;
    int cols = 256;
    int seed_count = 64;
    /// Blue-channel seeds = seed_count * extra_seed_factor (base seeds included).
    double extra_seed_factor = 8.0;
    /// Normalized red below this marks seed neighborhoods in green.
    double green_threshold = 0.08;
    /// Hard-core distance between base seeds; keeps seed markers separate.
    double min_seed_separation = 12.0;
    /// Hard-core distance between any two blue-channel seeds.
    double min_extra_separation = 4.0;
    double beta_alpha = 2.0;
    double beta_beta = 4.4;
    std::uint64_t seed = 0;
};

void validate(const WonostConfig& cfg);

/// Distance from each pixel center to the nearest seed. Uses a bucket grid;
/// identical to a brute-force scan.
Field worley_f1(int rows, int cols, const SeedSet& seeds);

/// `count` points uniform over [-0.5, rows-0.5) x [-0.5, cols-0.5),
/// rejecting any candidate closer than `min_sep` to an existing point
/// (including those in `existing`). Throws after too many rejections.
SeedSet place_seeds(int rows, int cols, int count, double min_sep, std::uint64_t seed,
                    const SeedSet& existing = {});

struct WonostRealization {
    RgbImage rgb;
    SeedSet base_seeds;
    SeedSet all_seeds;
    /// Unnormalized F1 fields.
    Field red_f1;
    Field blue_f1;
};

/// Red: F1 of the base seeds, rank-matched to Beta(alpha, beta) and
/// quantized. Green: 255 - red where red/255 < green_threshold, else 0.
/// Blue: F1 of base and extra seeds scaled by its maximum.
WonostRealization generate_wonost(const WonostConfig& cfg);

/// Rank-based histogram match of `img` onto Beta(a, b): every intensity
/// level maps to round(255 * Q(u)) where u is the level's mid-rank / N.
GrayImage match_to_beta(const GrayImage& img, double a, double b);
GrayImage match_to_beta(const Field& f, double a, double b);

/// Median of Beta(a, b).
double beta_median(double a, double b);

/// alpha such that median(Beta(alpha, b)) = (1 + pct/100) * median(Beta(a0, b)).
/// Bisection to 1e-6. Throws when the target is out of reach for alpha <= alpha_max.
double solve_alpha_for_median(double pct, double a0 = 2.0, double b = 4.4, double alpha_max = 1000.0);

struct Perturbed {
    RgbImage rgb;
    std::vector<std::string> flags;
    /// Components or centers present before and removed.
    std::size_t before = 0;
    std::size_t removed = 0;
};

/// Red channel matched to Beta(alpha*, b); pct = 0 returns the input.
/// Other channels untouched.
Perturbed perturb_red(const RgbImage& img, double pct, double a0 = 2.0, double b = 4.4);

/// Zeroes round(pct/100 * N) randomly chosen 8-connected green components.
/// Removal sets are nested in pct for a fixed seed.
Perturbed perturb_green(const RgbImage& img, double pct, std::uint64_t seed);

/// Blurs (sigma 1), keeps pixels below the Otsu threshold and returns the
/// local minima there in raster order.
std::vector<SeedPoint> detect_cell_centers(const GrayImage& blue);

/// Removes small-cell centers with probability min(1, c * area), where area
/// is the size of the enclosing large cell (Voronoi region of the nearest
/// green component centroid) and c makes the expected removal count
/// pct/100 of the centers. Uniform probabilities (flagged) when green is
/// empty. Removal sets are nested in pct for a fixed seed. Blue is
/// recomputed from the survivors; unchanged when none are removed.
Perturbed perturb_blue(const RgbImage& img, double pct, std::uint64_t seed);

/// The three perturbations applied in order blue, green, red, each with a
/// derived seed. `before`/`removed` report the blue step.
Perturbed perturb_all(const RgbImage& img, double pct, std::uint64_t seed);

std::size_t count_green_components(const GrayImage& green);
std::size_t count_cells(const GrayImage& blue);

/// Median of the 8-bit intensities (lower median for even counts).
int median_intensity(const GrayImage& img);

}  // namespace tally
