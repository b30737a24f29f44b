#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tally {

/// Named real-valued feature vector; NaN marks a value that could not be
/// computed.
struct FeatureVector {
    std::vector<double> values;
    std::vector<std::string> names;
    std::vector<std::string> flags;

    std::size_t size() const noexcept { return values.size(); }
};

/// Checks length, name uniqueness and M > 0.
void validate(const FeatureVector& x);

/// Per-feature open acceptance intervals (lower, upper) and weights >= 1.
struct ToleranceSpec {
    std::vector<std::string> names;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> weights;

    std::size_t size() const noexcept { return names.size(); }
};

/// Throws InvalidInput for malformed intervals and InvalidWeights for any
/// weight below 1. Weights in (0,1) are rejected, never renormalized.
void validate(const ToleranceSpec& spec);

ToleranceSpec uniform_spec(std::vector<std::string> names, std::vector<double> lower,
                           std::vector<double> upper);

struct BinaryFeatureVector {
    std::vector<std::uint8_t> bits;
    std::vector<std::string> names;
    /// Names of features whose value was NaN and therefore scored 0.
    std::vector<std::string> nan_features;

    std::size_t size() const noexcept { return bits.size(); }
    std::size_t count() const noexcept;
};

/// bit_m = 1 iff lower_m < x_m < upper_m. NaN scores 0 and is recorded;
/// infinities are rejected.
BinaryFeatureVector binarize(const FeatureVector& x, const ToleranceSpec& spec);

enum class AbsentPolicy { CountAsCommon, DropFromUniverse };

const char* to_string(AbsentPolicy p);
AbsentPolicy parse_absent_policy(const std::string& s);

/// Disjoint decomposition of the feature universe into S∩A, S\A and A\S.
struct SetPartition {
    BinaryFeatureVector common;
    BinaryFeatureVector subject_only;
    BinaryFeatureVector archetype_only;
    /// Indices into the original universe that survived the absent policy.
    std::vector<std::size_t> retained;
    std::size_t universe_size = 0;
    AbsentPolicy policy = AbsentPolicy::CountAsCommon;

    std::size_t size() const noexcept { return retained.size(); }
};

SetPartition partition(const BinaryFeatureVector& subject, const BinaryFeatureVector& archetype,
                       AbsentPolicy policy = AbsentPolicy::CountAsCommon);

/// Partition for a subject scored against archetype-derived tolerances: the
/// archetype exhibits every feature by construction, so a feature within
/// tolerance is common and a feature outside it is a subject-only feature.
SetPartition partition_from_tolerance(const BinaryFeatureVector& within_tolerance);

/// Weighted cardinalities of the three partition vectors.
struct Tally {
    double common = 0.0;
    double subject_only = 0.0;
    double archetype_only = 0.0;
};

/// Unit weights give plain cardinalities. `weights` may be indexed by the
/// full universe or by the retained universe.
Tally tally(const SetPartition& p, std::span<const double> weights = {});

struct TverskyParams {
    double alpha = 1.0;
    double beta = 1.0;
};

/// |S∩A| / (|S∩A| + alpha |S\A| + beta |A\S|).
double tversky_index(const SetPartition& p, TverskyParams params);

/// w·v_common / (w·v_common + w·v_subject_only + w·v_archetype_only).
double weighted_similarity_index(const SetPartition& p, std::span<const double> weights);

double weighted_similarity_index(const Tally& t);

}  // namespace tally
