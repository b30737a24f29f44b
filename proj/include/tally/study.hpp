#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tally/cobalt.hpp"
#include "tally/features.hpp"
#include "tally/io.hpp"
#include "tally/similarity.hpp"
#include "tally/wonost.hpp"

namespace tally {

/// Named output files (relative paths) plus a JSON summary. File contents
/// are fully determined by the resolved config.
struct Report {
    std::vector<std::pair<std::string, std::string>> files;
    nlohmann::ordered_json summary;

    const std::string& file(const std::string& name) const;
};

/// Writes every file and summary.json under `dir`.
void write_report(const fs::path& dir, const Report& r);

nlohmann::ordered_json to_json(const CobaltConfig& c);
CobaltConfig cobalt_config_from_json(const nlohmann::json& j, CobaltConfig base = {});
nlohmann::ordered_json to_json(const WonostConfig& c);
WonostConfig wonost_config_from_json(const nlohmann::json& j, WonostConfig base = {});

/// Feature extraction over images on `jobs` threads; row order follows input.
FeatureTable extract_table(const std::vector<RgbImage>& images, const std::vector<std::string>& ids,
                           ChannelSelect channel, const GlcmSpec& spec = {}, int jobs = 1);

std::vector<std::string> numbered_ids(const std::string& prefix, std::size_t n);

// ---- ablation ----

struct AblationConfig {
    std::size_t n = 64;
    std::uint64_t seed = 0;
    int jobs = 1;
    CobaltConfig cobalt;
    std::size_t n_draws = 200;
    double q_low = 0.05;
    double q_high = 0.95;
};

AblationConfig ablation_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const AblationConfig& c);

/// Ensemble-level scalars behind the three ablation feature bits.
struct AblationScalars {
    double texture = 0.0;  // mean GLCM correlation (d=1) of red inside its background ROI
    double spines = 0.0;   // mean blue intensity
    double other = 0.0;    // mean red intensity
};

AblationScalars ablation_scalars(const RgbImage& img);

struct AblationEnsembles {
    std::vector<RgbImage> archetype;
    std::vector<RgbImage> missing_texture;
    std::vector<RgbImage> missing_spines;
    std::vector<RgbImage> missing_both;
};

/// Archetypes and three ablated subject ensembles of independent realizations.
AblationEnsembles generate_ablation_ensembles(const AblationConfig& cfg);

Report run_ablation_study(const AblationConfig& cfg, const AblationEnsembles& ens);
Report run_ablation_study(const AblationConfig& cfg);

// ---- perturbation ----

struct PerturbationConfig {
    std::size_t n = 128;
    std::uint64_t seed = 0;
    int jobs = 1;
    WonostConfig wonost;
    std::vector<double> levels{2, 4, 8, 12, 16, 24, 32};
    double red_median_tolerance_pct = 10.0;
    double green_count_tolerance_pct = 5.0;
    double blue_count_tolerance_pct = 20.0;
    bool kld = true;
    /// "luma": each channel is perturbed alone and features come from the
    /// luma of the whole image. "channel": all three channels are perturbed
    /// and features come from the channel under study.
    std::string kld_features = "luma";
    GlcmSpec glcm;
};

PerturbationConfig perturbation_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PerturbationConfig& c);

struct PerturbationEnsembles {
    std::vector<RgbImage> base;
    /// Independent realizations for the unpaired comparison; may be empty when kld is off.
    std::vector<RgbImage> unpaired;
};

PerturbationEnsembles generate_perturbation_ensembles(const PerturbationConfig& cfg);

Report run_perturbation_study(const PerturbationConfig& cfg, const PerturbationEnsembles& ens);
Report run_perturbation_study(const PerturbationConfig& cfg);

// ---- pairwise similarity ----

struct PairToleranceRule {
    /// "percent": archetype value +/- pct (eps0 = 0.2 * feature std over the
    /// archetype ensemble); "spec": fixed intervals from `spec`.
    std::string source = "percent";
    double pct = 20.0;
    std::optional<ToleranceSpec> spec;
    /// Weights by name for the weighted index; features not listed are left
    /// out of the weighted universe. Empty: weights from `spec` when given,
    /// else uniform.
    std::vector<std::string> weight_names;
    std::vector<double> weights;
};

struct PairResult {
    std::size_t universe = 0;
    double wsi_weighted = 0.0;
    double wsi_uniform = 0.0;
    bool rejected = false;
    std::vector<std::string> flags;
};

struct PairScorer {
    PairScorer(const FeatureTable& archetypes, PairToleranceRule rule, AbsentPolicy policy, std::size_t min_universe);

    PairResult score(const std::vector<double>& subject, const std::vector<double>& archetype) const;
    /// Euclidean distance after dividing each feature by its archetype-ensemble
    /// standard deviation; non-finite and constant features are skipped.
    double distance(const std::vector<double>& a, const std::vector<double>& b) const;

    std::vector<std::string> names;
    PairToleranceRule rule;
    AbsentPolicy policy;
    std::size_t min_universe;
    std::vector<double> eps0;
    std::vector<double> scale;
    std::vector<double> weights;  // per feature; 0 = excluded from weighted index
    std::string spec_digest;
};

struct NamedTable {
    std::string name;
    FeatureTable table;
};

struct CrossConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    std::size_t n_pairs = 1024;
    AbsentPolicy policy = AbsentPolicy::CountAsCommon;
    std::size_t min_universe = 0;
};

/// Up to n_pairs distinct (subject, archetype) index pairs; same-id pairs
/// are excluded. All pairs in order when n_pairs covers them.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const FeatureTable& subjects,
                                                             const FeatureTable& archetypes, std::size_t n_pairs,
                                                             std::uint64_t seed, bool unordered_within = false);

Report run_cross_similarity(const CrossConfig& cfg, const PairToleranceRule& rule, const FeatureTable& archetypes,
                            const std::vector<NamedTable>& subjects);

struct SelfConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    std::size_t n_pairs = 256;
    AbsentPolicy policy = AbsentPolicy::CountAsCommon;
    std::size_t min_universe = 0;
    double band_low = 0.025;
    double band_high = 0.975;
};

Report run_self_similarity(const SelfConfig& cfg, const PairToleranceRule& rule, const FeatureTable& archetypes,
                           const std::vector<NamedTable>& ensembles);

struct AgreementConfig {
    std::uint64_t seed = 0;
    int jobs = 1;
    AbsentPolicy policy = AbsentPolicy::CountAsCommon;
    std::size_t min_universe = 0;
    std::vector<double> deltas{0.1, 0.2};
    // In-run fixture: WonoST luma images reconstructed by 2DPCA.
    std::size_t n = 32;
    WonostConfig wonost;
    int m_low = 16;
    int m_high = 64;
};

AgreementConfig agreement_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const AgreementConfig& c);

/// Subjects are low-component reconstructions, archetypes the matching
/// high-component ones (paired by id).
Report run_reconstruction_agreement(const AgreementConfig& cfg, const PairToleranceRule& rule,
                                    const FeatureTable& low, const FeatureTable& high);
/// Generates the phantom ensemble, fits 2DPCA and reconstructs both tiers.
std::pair<FeatureTable, FeatureTable> reconstruction_tables(const AgreementConfig& cfg);

/// Quantiles 2.5/25/50/75/97.5 of finite values.
nlohmann::ordered_json quantile_summary(const std::vector<double>& v);

}  // namespace tally
