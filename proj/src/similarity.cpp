#include "tally/similarity.hpp"

#include <cmath>
#include <unordered_set>

#include "tally/error.hpp"

namespace tally {

void validate(const FeatureVector& x) {
    if (x.values.empty()) fail(ErrorKind::InvalidInput, "feature vector is empty");
    if (x.values.size() != x.names.size())
        fail(ErrorKind::InvalidInput, "feature vector: values and names differ in length");
    std::unordered_set<std::string> seen;
    for (const auto& n : x.names)
        if (!seen.insert(n).second) fail(ErrorKind::InvalidInput, "duplicate feature name '" + n + "'");
}

void validate(const ToleranceSpec& spec) {
    const std::size_t m = spec.names.size();
    if (m == 0) fail(ErrorKind::InvalidInput, "tolerance spec has no features");
    if (spec.lower.size() != m || spec.upper.size() != m || spec.weights.size() != m)
        fail(ErrorKind::InvalidInput, "tolerance spec lists differ in length");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& n = spec.names[i];
        if (!seen.insert(n).second) fail(ErrorKind::InvalidInput, "duplicate feature name '" + n + "'");
        if (!std::isfinite(spec.lower[i]) || !std::isfinite(spec.upper[i]) || !(spec.lower[i] < spec.upper[i]))
            fail(ErrorKind::InvalidInput, "feature '" + n + "': tolerance requires finite lower < upper");
        if (!std::isfinite(spec.weights[i]) || spec.weights[i] < 1.0)
            fail(ErrorKind::InvalidWeights,
                 "feature '" + n + "': weight must be >= 1 (renormalize to the minimum weight)");
    }
}

ToleranceSpec uniform_spec(std::vector<std::string> names, std::vector<double> lower,
                           std::vector<double> upper) {
    ToleranceSpec s;
    s.weights.assign(names.size(), 1.0);
    s.names = std::move(names);
    s.lower = std::move(lower);
    s.upper = std::move(upper);
    validate(s);
    return s;
}

std::size_t BinaryFeatureVector::count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

BinaryFeatureVector binarize(const FeatureVector& x, const ToleranceSpec& spec) {
    validate(spec);
    if (x.values.size() != x.names.size())
        fail(ErrorKind::InvalidInput, "feature vector: values and names differ in length");
    if (x.names != spec.names) fail(ErrorKind::SpecMismatch, "feature names do not match tolerance spec");
    BinaryFeatureVector out;
    out.names = x.names;
    out.bits.resize(x.size(), 0);
    for (std::size_t m = 0; m < x.size(); ++m) {
        const double v = x.values[m];
        if (std::isnan(v)) {
            out.nan_features.push_back(x.names[m]);
            continue;
        }
        if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "feature '" + x.names[m] + "' is infinite");
        out.bits[m] = (spec.lower[m] < v && v < spec.upper[m]) ? 1 : 0;
    }
    return out;
}

const char* to_string(AbsentPolicy p) {
    return p == AbsentPolicy::CountAsCommon ? "count_as_common" : "drop_from_universe";
}

AbsentPolicy parse_absent_policy(const std::string& s) {
    if (s == "count_as_common") return AbsentPolicy::CountAsCommon;
    if (s == "drop_from_universe") return AbsentPolicy::DropFromUniverse;
    fail(ErrorKind::Usage, "unknown absent policy '" + s + "'");
}

namespace {

void check_binary(const BinaryFeatureVector& v) {
    if (v.bits.size() != v.names.size())
        fail(ErrorKind::InvalidInput, "binary vector: bits and names differ in length");
    for (auto b : v.bits)
        if (b > 1) fail(ErrorKind::InvalidInput, "binary vector component is not 0 or 1");
}

}  // namespace

SetPartition partition(const BinaryFeatureVector& subject, const BinaryFeatureVector& archetype,
                       AbsentPolicy policy) {
    check_binary(subject);
    check_binary(archetype);
    if (subject.names != archetype.names)
        fail(ErrorKind::SpecMismatch, "subject and archetype feature universes differ");
    SetPartition p;
    p.policy = policy;
    p.universe_size = subject.size();
    for (auto* v : {&p.common, &p.subject_only, &p.archetype_only}) v->bits.reserve(subject.size());
    for (std::size_t m = 0; m < subject.size(); ++m) {
        const int s = subject.bits[m], a = archetype.bits[m];
        if (s == 0 && a == 0 && policy == AbsentPolicy::DropFromUniverse) continue;
        p.retained.push_back(m);
        const auto& name = subject.names[m];
        for (auto* v : {&p.common, &p.subject_only, &p.archetype_only}) v->names.push_back(name);
        p.common.bits.push_back((s == a) ? 1 : 0);
        p.subject_only.bits.push_back((s == 1 && a == 0) ? 1 : 0);
        p.archetype_only.bits.push_back((s == 0 && a == 1) ? 1 : 0);
    }
    return p;
}

SetPartition partition_from_tolerance(const BinaryFeatureVector& within_tolerance) {
    check_binary(within_tolerance);
    BinaryFeatureVector all = within_tolerance;
    all.bits.assign(all.size(), 1);
    all.nan_features.clear();
    // Subject exhibits every feature in some form; the archetype's form is
    // matched only where the subject value lies within tolerance.
    SetPartition p = partition(all, within_tolerance, AbsentPolicy::CountAsCommon);
    p.common.nan_features = within_tolerance.nan_features;
    return p;
}

Tally tally(const SetPartition& p, std::span<const double> weights) {
    const std::size_t n = p.size();
    const bool full = !weights.empty() && weights.size() == p.universe_size;
    if (!weights.empty() && !full && weights.size() != n)
        fail(ErrorKind::SpecMismatch, "weight vector length does not match the feature universe");
    Tally t;
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1.0;
        if (!weights.empty()) {
            w = full ? weights[p.retained[i]] : weights[i];
            if (!(w >= 1.0)) fail(ErrorKind::InvalidWeights, "weights must all be >= 1");
        }
        t.common += w * p.common.bits[i];
        t.subject_only += w * p.subject_only.bits[i];
        t.archetype_only += w * p.archetype_only.bits[i];
    }
    return t;
}

double tversky_index(const SetPartition& p, TverskyParams params) {
    if (!(params.alpha >= 0.0) || !(params.beta >= 0.0))
        fail(ErrorKind::InvalidInput, "Tversky alpha and beta must be nonnegative");
    const Tally t = tally(p);
    const double denom = t.common + params.alpha * t.subject_only + params.beta * t.archetype_only;
    if (t.common + t.subject_only + t.archetype_only == 0.0 || denom == 0.0)
        fail(ErrorKind::DegenerateComparison, "Tversky index undefined: empty feature tally");
    return t.common / denom;
}

double weighted_similarity_index(const Tally& t) {
    const double denom = t.common + t.subject_only + t.archetype_only;
    if (denom == 0.0) fail(ErrorKind::DegenerateComparison, "WSI undefined: empty feature tally");
    return t.common / denom;
}

double weighted_similarity_index(const SetPartition& p, std::span<const double> weights) {
    if (weights.empty()) fail(ErrorKind::InvalidWeights, "weight vector is empty");
    return weighted_similarity_index(tally(p, weights));
}

}  // namespace tally
