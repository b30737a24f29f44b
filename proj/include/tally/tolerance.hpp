#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tally/similarity.hpp"

namespace tally {

/// sup_x |ECDF_a(x) - ECDF_b(x)|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    std::vector<std::string> flags;
};

/// KS statistics over n_pairs random distinct archetype pairs; returns their
/// (q_low, q_high) quantiles. Equal bounds are flagged "degenerate".
Interval ks_tolerance(const std::vector<std::vector<double>>& archetypes, double q_low = 0.05, double q_high = 0.95,
                      std::size_t n_pairs = 1000, std::uint64_t seed = 0);

/// Ensemble-level variant for one scalar feature: the null distribution is
/// the KS statistic between disjoint random halves of the archetype values.
Interval split_half_ks_tolerance(std::span<const double> archetype, double q_low = 0.05, double q_high = 0.95,
                                 std::size_t n_draws = 200, std::uint64_t seed = 0);

/// Median over n_draws of the KS statistic between a random half of the
/// subject values and a random half of the archetype values. When both
/// spans are the same ensemble the halves are drawn disjoint, so the
/// statistic matches the split-half null.
double split_half_ks_statistic(std::span<const double> subject, std::span<const double> archetype,
                               std::size_t n_draws = 200, std::uint64_t seed = 0, bool same_ensemble = false);

/// (v - |v| pct/100, v + |v| pct/100). v == 0 gives (-eps0, eps0), flagged.
Interval percent_tolerance(double v, double pct, double eps0);

struct KdeTolerance {
    double lower = 0.0;
    double upper = 0.0;
    double bandwidth = 0.0;
    double mode = 0.0;
    std::vector<std::string> flags;  // open_lower, open_upper, multimodal
};

/// Gaussian KDEs of both samples with Silverman's bandwidth on the pooled
/// sample, evaluated on 512 points spanning the pooled range padded by 3h.
/// Returns the contiguous run around the archetype mode where the
/// archetype density is strictly greater, with crossings located by linear
/// interpolation. Runs reaching the grid edge are flagged open.
KdeTolerance kde_intersection_tolerance(std::span<const double> archetype, std::span<const double> subject);

double silverman_bandwidth(std::span<const double> x);

struct ForestOptions {
    int n_trees = 64;
    /// 0 means ceil(sqrt(M)).
    int max_features = 0;
    std::uint64_t seed = 0;
    int jobs = 1;
};

/// Mean decrease in Gini impurity over bagged unrestricted CART trees,
/// normalized to sum 1. Rows of `x` are samples; labels are 0/1.
std::vector<double> random_forest_importance(const std::vector<std::vector<double>>& x,
                                             const std::vector<int>& labels, const ForestOptions& opt = {});

struct ImportanceWeights {
    std::vector<std::size_t> indices;  // retained, by decreasing importance
    std::vector<std::string> names;
    std::vector<double> weights;       // importance / min retained importance
};

ImportanceWeights importance_weights(std::span<const double> importances, std::size_t top_k,
                                     const std::vector<std::string>& names = {});

}  // namespace tally
