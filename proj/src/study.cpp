#include "tally/study.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "tally/baselines.hpp"
#include "tally/error.hpp"
#include "tally/image_ops.hpp"
#include "tally/parallel.hpp"
#include "tally/pca2d.hpp"
#include "tally/rng.hpp"
#include "tally/tolerance.hpp"

namespace tally {

using ojson = nlohmann::ordered_json;

const std::string& Report::file(const std::string& name) const {
    for (const auto& [n, content] : files)
        if (n == name) return content;
    fail(ErrorKind::InvalidInput, "report has no file '" + name + "'");
}

void write_report(const fs::path& dir, const Report& r) {
    fs::create_directories(dir);
    for (const auto& [name, content] : r.files) write_file(dir / name, content);
    write_file(dir / "summary.json", r.summary.dump(2) + "\n");
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& what) {
    if (!j.is_object()) fail(ErrorKind::Usage, what + " config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) fail(ErrorKind::Usage, what + " config: unknown key '" + it.key() + "'");
    }
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Usage, std::string("config key '") + key + "': " + e.what());
    }
}

std::vector<double> column(const FeatureTable& t, std::size_t m) {
    std::vector<double> v;
    for (const auto& row : t.rows) v.push_back(row[m]);
    return v;
}

double finite_std(const std::vector<double>& v) {
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    if (n < 2) return 0.0;
    const double mean = s / static_cast<double>(n);
    for (double x : v)
        if (std::isfinite(x)) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

nlohmann::ordered_json quantile_summary(const std::vector<double>& v) {
    std::vector<double> f;
    for (double x : v)
        if (std::isfinite(x)) f.push_back(x);
    ojson j;
    j["count"] = f.size();
    if (f.empty()) return j;
    j["q02.5"] = quantile(f, 0.025);
    j["q25"] = quantile(f, 0.25);
    j["q50"] = quantile(f, 0.5);
    j["q75"] = quantile(f, 0.75);
    j["q97.5"] = quantile(f, 0.975);
    return j;
}

// ---- configs ----

nlohmann::ordered_json to_json(const CobaltConfig& c) {
    ojson j;
    j["rows"] = c.rows;
    j["cols"] = c.cols;
    j["lump_count_mean"] = c.lump_count_mean;
    j["lump_width"] = c.lump_width;
    j["background_quantile"] = c.background_quantile;
    j["cell_quantile"] = c.cell_quantile;
    j["background_dog"] = c.background_dog;
    j["cell_dog"] = c.cell_dog;
    j["hessian_sigma"] = c.hessian_sigma;
    j["ridge_threshold"] = c.ridge_threshold;
    j["max_attempts"] = c.max_attempts;
    j["seed"] = c.seed;
    return j;
}

CobaltConfig cobalt_config_from_json(const nlohmann::json& j, CobaltConfig c) {
    check_keys(j,
               {"rows", "cols", "lump_count_mean", "lump_width", "background_quantile", "cell_quantile",
                "background_dog", "cell_dog", "hessian_sigma", "ridge_threshold", "max_attempts", "seed"},
               "cobalt");
    read_key(j, "rows", c.rows);
    read_key(j, "cols", c.cols);
    read_key(j, "lump_count_mean", c.lump_count_mean);
    read_key(j, "lump_width", c.lump_width);
    read_key(j, "background_quantile", c.background_quantile);
    read_key(j, "cell_quantile", c.cell_quantile);
    read_key(j, "background_dog", c.background_dog);
    read_key(j, "cell_dog", c.cell_dog);
    read_key(j, "hessian_sigma", c.hessian_sigma);
    read_key(j, "ridge_threshold", c.ridge_threshold);
    read_key(j, "max_attempts", c.max_attempts);
    read_key(j, "seed", c.seed);
    validate(c);
    return c;
}

nlohmann::ordered_json to_json(const WonostConfig& c) {
    ojson j;
    j["rows"] = c.rows;
    j["cols"] = c.cols;
    j["seed_count"] = c.seed_count;
    j["extra_seed_factor"] = c.extra_seed_factor;
    j["green_threshold"] = c.green_threshold;
    j["min_seed_separation"] = c.min_seed_separation;
    j["min_extra_separation"] = c.min_extra_separation;
    j["beta_alpha"] = c.beta_alpha;
    j["beta_beta"] = c.beta_beta;
    j["seed"] = c.seed;
    return j;
}

WonostConfig wonost_config_from_json(const nlohmann::json& j, WonostConfig c) {
    check_keys(j,
               {"rows", "cols", "seed_count", "extra_seed_factor", "green_threshold", "min_seed_separation",
                "min_extra_separation", "beta_alpha", "beta_beta", "seed"},
               "wonost");
    read_key(j, "rows", c.rows);
    read_key(j, "cols", c.cols);
    read_key(j, "seed_count", c.seed_count);
    read_key(j, "extra_seed_factor", c.extra_seed_factor);
    read_key(j, "green_threshold", c.green_threshold);
    read_key(j, "min_seed_separation", c.min_seed_separation);
    read_key(j, "min_extra_separation", c.min_extra_separation);
    read_key(j, "beta_alpha", c.beta_alpha);
    read_key(j, "beta_beta", c.beta_beta);
    read_key(j, "seed", c.seed);
    validate(c);
    return c;
}

AblationConfig ablation_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"n", "seed", "jobs", "cobalt", "n_draws", "q_low", "q_high"}, "ablation");
    AblationConfig c;
    read_key(j, "n", c.n);
    read_key(j, "seed", c.seed);
    read_key(j, "jobs", c.jobs);
    if (j.contains("cobalt")) c.cobalt = cobalt_config_from_json(j.at("cobalt"));
    read_key(j, "n_draws", c.n_draws);
    read_key(j, "q_low", c.q_low);
    read_key(j, "q_high", c.q_high);
    return c;
}

nlohmann::ordered_json to_json(const AblationConfig& c) {
    ojson j;
    j["n"] = c.n;
    j["seed"] = c.seed;
    j["cobalt"] = to_json(c.cobalt);
    j["n_draws"] = c.n_draws;
    j["q_low"] = c.q_low;
    j["q_high"] = c.q_high;
    return j;
}

PerturbationConfig perturbation_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"n", "seed", "jobs", "wonost", "levels", "red_median_tolerance_pct", "green_count_tolerance_pct",
                "blue_count_tolerance_pct", "kld", "kld_features", "glcm_levels", "glcm_distances"},
               "perturbation");
    PerturbationConfig c;
    read_key(j, "n", c.n);
    read_key(j, "seed", c.seed);
    read_key(j, "jobs", c.jobs);
    if (j.contains("wonost")) c.wonost = wonost_config_from_json(j.at("wonost"));
    read_key(j, "levels", c.levels);
    read_key(j, "red_median_tolerance_pct", c.red_median_tolerance_pct);
    read_key(j, "green_count_tolerance_pct", c.green_count_tolerance_pct);
    read_key(j, "blue_count_tolerance_pct", c.blue_count_tolerance_pct);
    read_key(j, "kld", c.kld);
    read_key(j, "kld_features", c.kld_features);
    if (c.kld_features != "luma" && c.kld_features != "channel")
        fail(ErrorKind::InvalidInput, "perturbation: kld_features must be luma or channel");
    read_key(j, "glcm_levels", c.glcm.levels);
    read_key(j, "glcm_distances", c.glcm.distances);
    validate(c.glcm);
    return c;
}

nlohmann::ordered_json to_json(const PerturbationConfig& c) {
    ojson j;
    j["n"] = c.n;
    j["seed"] = c.seed;
    j["wonost"] = to_json(c.wonost);
    j["levels"] = c.levels;
    j["red_median_tolerance_pct"] = c.red_median_tolerance_pct;
    j["green_count_tolerance_pct"] = c.green_count_tolerance_pct;
    j["blue_count_tolerance_pct"] = c.blue_count_tolerance_pct;
    j["kld"] = c.kld;
    j["kld_features"] = c.kld_features;
    j["glcm_levels"] = c.glcm.levels;
    j["glcm_distances"] = c.glcm.distances;
    return j;
}

AgreementConfig agreement_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "jobs", "absent_policy", "min_universe", "deltas", "n", "wonost", "m_low", "m_high"},
               "agreement");
    AgreementConfig c;
    read_key(j, "seed", c.seed);
    read_key(j, "jobs", c.jobs);
    if (j.contains("absent_policy")) c.policy = parse_absent_policy(j.at("absent_policy").get<std::string>());
    read_key(j, "min_universe", c.min_universe);
    read_key(j, "deltas", c.deltas);
    read_key(j, "n", c.n);
    if (j.contains("wonost")) c.wonost = wonost_config_from_json(j.at("wonost"));
    read_key(j, "m_low", c.m_low);
    read_key(j, "m_high", c.m_high);
    return c;
}

nlohmann::ordered_json to_json(const AgreementConfig& c) {
    ojson j;
    j["seed"] = c.seed;
    j["absent_policy"] = to_string(c.policy);
    j["min_universe"] = c.min_universe;
    j["deltas"] = c.deltas;
    j["n"] = c.n;
    j["wonost"] = to_json(c.wonost);
    j["m_low"] = c.m_low;
    j["m_high"] = c.m_high;
    return j;
}

// ---- features ----

std::vector<std::string> numbered_ids(const std::string& prefix, std::size_t n) {
    std::vector<std::string> ids;
    const int width = std::max<int>(4, static_cast<int>(std::to_string(n).size()));
    for (std::size_t i = 0; i < n; ++i) {
        std::string num = std::to_string(i);
        ids.push_back(prefix + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(width, num.size()), '0') + num);
    }
    return ids;
}

FeatureTable extract_table(const std::vector<RgbImage>& images, const std::vector<std::string>& ids,
                           ChannelSelect channel, const GlcmSpec& spec, int jobs) {
    if (images.size() != ids.size()) fail(ErrorKind::InvalidInput, "extract_table: ids and images differ in count");
    FeatureTable t;
    t.names = feature_names(spec);
    t.ids = ids;
    t.rows.resize(images.size());
    t.flags.resize(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
        FeatureVector f = extract_features(to_grayscale(images[i], channel), spec);
        t.rows[i] = std::move(f.values);
        t.flags[i] = join(f.flags, ";");
    });
    return t;
}

// ---- ablation ----

AblationScalars ablation_scalars(const RgbImage& img) {
    AblationScalars s;
    const RoiMaskSet rois = segment_rois(img.red);
    const Quantized q = equal_probability_quantize(img.red, 16);
    double corr = 0.0;
    int used = 0;
    for (int angle : kGlcmAngles) {
        const GlcmCorrelation c = glcm_correlation(glcm(q.levels, q.k, rois.background, 1, angle));
        if (std::isfinite(c.value)) {
            corr += c.value;
            ++used;
        }
    }
    s.texture = used ? corr / used : 0.0;
    double blue = 0.0, red = 0.0;
    for (std::size_t i = 0; i < img.red.size(); ++i) {
        blue += img.blue[i];
        red += img.red[i];
    }
    s.spines = blue / static_cast<double>(img.red.size());
    s.other = red / static_cast<double>(img.red.size());
    return s;
}

AblationEnsembles generate_ablation_ensembles(const AblationConfig& cfg) {
    if (cfg.n < 4) fail(ErrorKind::InvalidInput, "ablation study needs n >= 4");
    AblationEnsembles e;
    auto make = [&](std::vector<RgbImage>& out, std::uint64_t stream, bool shuffle, bool spines) {
        out.resize(cfg.n);
        parallel_for(cfg.n, cfg.jobs, [&](std::size_t i) {
            CobaltConfig c = cfg.cobalt;
            c.seed = mix_seed(cfg.seed, stream * 1000003ULL + i);
            CobaltRealization r = generate_cobalt(c);
            if (shuffle) r = shuffle_background(std::move(r), mix_seed(c.seed, 77));
            if (spines) r = ablate_spines(std::move(r));
            out[i] = std::move(r.rgb);
        });
    };
    make(e.archetype, 0, false, false);
    make(e.missing_texture, 1, true, false);
    make(e.missing_spines, 2, false, true);
    make(e.missing_both, 3, true, true);
    return e;
}

Report run_ablation_study(const AblationConfig& cfg, const AblationEnsembles& ens) {
    const std::vector<std::string> names = {"correct_background_texture", "correct_spines", "other_features"};
    auto scalars = [&](const std::vector<RgbImage>& imgs) {
        std::vector<AblationScalars> s(imgs.size());
        parallel_for(imgs.size(), cfg.jobs, [&](std::size_t i) { s[i] = ablation_scalars(imgs[i]); });
        std::array<std::vector<double>, 3> cols;
        for (const auto& x : s) {
            cols[0].push_back(x.texture);
            cols[1].push_back(x.spines);
            cols[2].push_back(x.other);
        }
        return cols;
    };
    if (ens.archetype.size() < 4) fail(ErrorKind::InvalidInput, "ablation study needs at least 4 archetypes");
    const auto arch = scalars(ens.archetype);
    std::array<Interval, 3> tol;
    ojson tol_json = ojson::array();
    for (std::size_t f = 0; f < 3; ++f) {
        tol[f] = split_half_ks_tolerance(arch[f], cfg.q_low, cfg.q_high, cfg.n_draws, mix_seed(cfg.seed, 100 + f));
        ojson t;
        t["feature"] = names[f];
        t["lower"] = tol[f].lower;
        t["upper"] = tol[f].upper;
        t["flags"] = tol[f].flags;
        tol_json.push_back(t);
    }

    struct Row {
        std::string subject;
        std::array<double, 3> ks{};
        BinaryFeatureVector within;
        Tally t;
    };
    auto evaluate = [&](const std::string& label, const std::array<std::vector<double>, 3>& subj, bool same) {
        Row r;
        r.subject = label;
        r.within.names = names;
        for (std::size_t f = 0; f < 3; ++f) {
            r.ks[f] = split_half_ks_statistic(subj[f], arch[f], cfg.n_draws, mix_seed(cfg.seed, 200 + f), same);
            r.within.bits.push_back(tol[f].lower < r.ks[f] && r.ks[f] < tol[f].upper ? 1 : 0);
        }
        const SetPartition p = partition_from_tolerance(r.within);
        const std::vector<double> w(3, 1.0);
        r.t = tally(p, w);
        return r;
    };

    const Row self = evaluate("archetype", arch, true);
    std::vector<Row> rows;
    const std::vector<std::pair<std::string, const std::vector<RgbImage>*>> subjects = {
        {"missing_texture", &ens.missing_texture},
        {"missing_spines", &ens.missing_spines},
        {"missing_both", &ens.missing_both}};
    for (const auto& [label, imgs] : subjects) {
        if (imgs->size() < 2) fail(ErrorKind::Data, "ablation study: ensemble '" + label + "' is missing or too small");
        rows.push_back(evaluate(label, scalars(*imgs), false));
    }

    std::string csv = "subject,ks_texture,ks_spines,ks_other,bit_texture,bit_spines,bit_other,common,subject_only,"
                      "archetype_only,wsi\n";
    ojson results = ojson::array();
    auto emit = [&](const Row& r, bool to_csv) {
        const double wsi = weighted_similarity_index(r.t);
        if (to_csv) {
            csv += r.subject;
            for (double k : r.ks) csv += "," + fmt(k);
            for (auto b : r.within.bits) csv += "," + std::to_string(b);
            csv += "," + fmt(r.t.common) + "," + fmt(r.t.subject_only) + "," + fmt(r.t.archetype_only) + "," +
                   fmt(wsi) + "\n";
        }
        ojson j;
        j["subject"] = r.subject;
        j["bits"] = r.within.bits;
        j["wsi_numerator"] = r.t.common;
        j["wsi_denominator"] = r.t.common + r.t.subject_only + r.t.archetype_only;
        j["wsi"] = wsi;
        return j;
    };
    for (const auto& r : rows) results.push_back(emit(r, true));

    Report rep;
    rep.files.emplace_back("ablation.csv", csv);
    rep.summary["workflow"] = "ablation";
    rep.summary["config"] = to_json(cfg);
    rep.summary["seeds"] = {{"study", cfg.seed}};
    rep.summary["absent_policy"] = to_string(AbsentPolicy::CountAsCommon);
    rep.summary["weights"] = {1, 1, 1};
    rep.summary["tolerances"] = tol_json;
    rep.summary["spec_hash"] = sha256_hex(tol_json.dump());
    rep.summary["self_comparison"] = emit(self, false);
    rep.summary["results"] = results;
    return rep;
}

Report run_ablation_study(const AblationConfig& cfg) {
    return run_ablation_study(cfg, generate_ablation_ensembles(cfg));
}

// ---- perturbation ----

PerturbationEnsembles generate_perturbation_ensembles(const PerturbationConfig& cfg) {
    PerturbationEnsembles e;
    auto make = [&](std::vector<RgbImage>& out, std::uint64_t stream) {
        out.resize(cfg.n);
        parallel_for(cfg.n, cfg.jobs, [&](std::size_t i) {
            WonostConfig w = cfg.wonost;
            w.seed = mix_seed(cfg.seed, stream * 1000003ULL + i);
            out[i] = generate_wonost(w).rgb;
        });
    };
    make(e.base, 0);
    if (cfg.kld) make(e.unpaired, 1);
    return e;
}

namespace {

struct KldResult {
    double value = 0.0;
    std::size_t features = 0;
    double epsilon = 0.0;
};

// KL(subject || archetype) over columns finite and non-constant in both clouds.
KldResult cloud_kld(const FeatureTable& subject, const FeatureTable& archetype) {
    const std::size_t m = archetype.names.size();
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < m; ++j) {
        bool ok = true;
        for (const FeatureTable* t : {&subject, &archetype}) {
            const auto col = column(*t, j);
            const bool finite = std::all_of(col.begin(), col.end(), [](double v) { return std::isfinite(v); });
            ok = ok && finite && std::any_of(col.begin(), col.end(), [&](double v) { return v != col[0]; });
        }
        if (ok) keep.push_back(j);
    }
    if (keep.empty()) fail(ErrorKind::DegenerateComparison, "KLD: no usable feature columns");
    const std::size_t need = keep.size() + 2;
    if (subject.rows.size() < need || archetype.rows.size() < need)
        fail(ErrorKind::InvalidInput, "insufficient ensemble size for a Gaussian fit over " +
                                          std::to_string(keep.size()) + " features: need N >= " +
                                          std::to_string(need));
    auto cloud = [&](const FeatureTable& t) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            for (std::size_t j = 0; j < keep.size(); ++j)
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][keep[j]];
        return x;
    };
    const GaussianFit p = fit_gaussian(cloud(subject));
    const GaussianFit q = fit_gaussian(cloud(archetype));
    return {kld_gaussian(p, q), keep.size(), std::max(p.epsilon, q.epsilon)};
}

constexpr std::array<ChannelSelect, 3> kChannels = {ChannelSelect::Red, ChannelSelect::Green, ChannelSelect::Blue};
constexpr std::array<const char*, 3> kChannelNames = {"red", "green", "blue"};

}  // namespace

Report run_perturbation_study(const PerturbationConfig& cfg, const PerturbationEnsembles& ens) {
    const std::size_t n = ens.base.size();
    if (n < 2) fail(ErrorKind::InvalidInput, "perturbation study needs at least 2 base images");
    if (cfg.kld && ens.unpaired.size() < 2) fail(ErrorKind::InvalidInput, "perturbation study: unpaired ensemble missing");
    std::vector<double> levels = {0.0};
    for (double l : cfg.levels) {
        if (!(l > 0.0)) fail(ErrorKind::InvalidInput, "perturbation levels must be positive");
        levels.push_back(l);
    }
    const auto ids = numbered_ids("img-", n);
    const auto uids = numbered_ids("ind-", ens.unpaired.size());

    struct Measure {
        double red_median = 0.0, green_count = 0.0, blue_count = 0.0;
    };
    auto measure = [&](const std::vector<RgbImage>& imgs) {
        std::vector<Measure> ms(imgs.size());
        parallel_for(imgs.size(), cfg.jobs, [&](std::size_t i) {
            ms[i] = {static_cast<double>(median_intensity(imgs[i].red)),
                     static_cast<double>(count_green_components(imgs[i].green)),
                     static_cast<double>(count_cells(imgs[i].blue))};
        });
        Measure avg;
        for (const auto& m : ms) {
            avg.red_median += m.red_median / static_cast<double>(ms.size());
            avg.green_count += m.green_count / static_cast<double>(ms.size());
            avg.blue_count += m.blue_count / static_cast<double>(ms.size());
        }
        return avg;
    };
    auto perturb = [&](const std::vector<RgbImage>& imgs, double pct, std::uint64_t stream) {
        std::vector<RgbImage> out(imgs.size());
        parallel_for(imgs.size(), cfg.jobs, [&](std::size_t i) {
            out[i] = perturb_all(imgs[i], pct, mix_seed(cfg.seed, stream * 1000003ULL + i)).rgb;
        });
        return out;
    };

    const bool luma = cfg.kld_features == "luma";
    if (!luma && cfg.kld_features != "channel")
        fail(ErrorKind::InvalidInput, "perturbation: kld_features must be luma or channel");
    // Same derived seeds as perturb_all, so a lone channel matches its step there.
    auto perturb_one = [&](const std::vector<RgbImage>& imgs, std::size_t c, double pct, std::uint64_t stream) {
        std::vector<RgbImage> out(imgs.size());
        parallel_for(imgs.size(), cfg.jobs, [&](std::size_t i) {
            const std::uint64_t s = mix_seed(cfg.seed, stream * 1000003ULL + i);
            if (c == 0) out[i] = perturb_red(imgs[i], pct).rgb;
            else if (c == 1) out[i] = perturb_green(imgs[i], pct, mix_seed(s, 1)).rgb;
            else out[i] = perturb_blue(imgs[i], pct, mix_seed(s, 0)).rgb;
        });
        return out;
    };
    auto features = [&](const std::vector<RgbImage>& imgs, const std::vector<std::string>& names, std::size_t c) {
        return extract_table(imgs, names, luma ? ChannelSelect::Luma : kChannels[c], cfg.glcm, cfg.jobs);
    };

    const Measure base = measure(ens.base);
    std::array<FeatureTable, 3> base_features;
    if (cfg.kld) {
        base_features[0] = features(ens.base, ids, 0);
        for (std::size_t c = 1; c < 3; ++c) base_features[c] = luma ? base_features[0] : features(ens.base, ids, c);
    }

    const std::vector<std::string> bit_names = {"red_median", "green_seed_count", "blue_cell_count"};
    std::string csv = "pct,red_median_ratio,green_count_ratio,blue_count_ratio,bit_red,bit_green,bit_blue,common,"
                      "subject_only,wsi";
    if (cfg.kld)
        for (const char* kind : {"paired", "unpaired"})
            for (const char* ch : kChannelNames) csv += std::string(",kld_") + kind + "_" + ch;
    csv += "\n";
    ojson rows = ojson::array();
    double max_eps = 0.0;
    std::size_t min_features = std::numeric_limits<std::size_t>::max();

    for (double pct : levels) {
        const std::vector<RgbImage> pert = perturb(ens.base, pct, 2);
        const Measure m = measure(pert);
        const std::array<double, 3> ratio = {m.red_median / base.red_median, m.green_count / base.green_count,
                                             m.blue_count / base.blue_count};
        const std::array<double, 3> tol = {cfg.red_median_tolerance_pct, cfg.green_count_tolerance_pct,
                                           cfg.blue_count_tolerance_pct};
        BinaryFeatureVector within;
        within.names = bit_names;
        for (std::size_t f = 0; f < 3; ++f)
            within.bits.push_back(std::abs(ratio[f] - 1.0) < tol[f] / 100.0 ? 1 : 0);
        const Tally t = tally(partition_from_tolerance(within), std::vector<double>(3, 1.0));
        const double wsi = weighted_similarity_index(t);

        csv += fmt(pct);
        for (double r : ratio) csv += "," + fmt(r);
        for (auto b : within.bits) csv += "," + std::to_string(b);
        csv += "," + fmt(t.common) + "," + fmt(t.subject_only) + "," + fmt(wsi);
        ojson row;
        row["pct"] = pct;
        row["ratios"] = ratio;
        row["bits"] = within.bits;
        row["wsi_numerator"] = t.common;
        row["wsi_denominator"] = t.common + t.subject_only + t.archetype_only;
        row["wsi"] = wsi;

        if (cfg.kld) {
            const std::vector<RgbImage> upert = luma ? std::vector<RgbImage>{} : perturb(ens.unpaired, pct, 3);
            std::array<double, 3> paired{}, unpaired{};
            for (std::size_t c = 0; c < 3; ++c) {
                const FeatureTable pf = luma ? features(perturb_one(ens.base, c, pct, 2), ids, c) : features(pert, ids, c);
                const FeatureTable uf =
                    luma ? features(perturb_one(ens.unpaired, c, pct, 3), uids, c) : features(upert, uids, c);
                const KldResult kp = cloud_kld(pf, base_features[c]);
                const KldResult ku = cloud_kld(uf, base_features[c]);
                paired[c] = kp.value;
                unpaired[c] = ku.value;
                max_eps = std::max({max_eps, kp.epsilon, ku.epsilon});
                min_features = std::min({min_features, kp.features, ku.features});
            }
            for (double v : paired) csv += "," + fmt(v);
            for (double v : unpaired) csv += "," + fmt(v);
            row["kld_paired"] = paired;
            row["kld_unpaired"] = unpaired;
        }
        csv += "\n";
        rows.push_back(row);
    }

    Report rep;
    rep.files.emplace_back("perturbation.csv", csv);
    rep.summary["workflow"] = "perturbation";
    rep.summary["config"] = to_json(cfg);
    rep.summary["seeds"] = {{"study", cfg.seed}};
    rep.summary["absent_policy"] = to_string(AbsentPolicy::CountAsCommon);
    ojson tol_json;
    tol_json["red_median_pct"] = cfg.red_median_tolerance_pct;
    tol_json["green_count_pct"] = cfg.green_count_tolerance_pct;
    tol_json["blue_count_pct"] = cfg.blue_count_tolerance_pct;
    rep.summary["tolerances"] = tol_json;
    rep.summary["spec_hash"] = sha256_hex(tol_json.dump());
    rep.summary["base_means"] = {base.red_median, base.green_count, base.blue_count};
    if (cfg.kld) {
        rep.summary["kld_max_epsilon"] = max_eps;
        rep.summary["kld_min_features"] = min_features;
    }
    rep.summary["results"] = rows;
    return rep;
}

Report run_perturbation_study(const PerturbationConfig& cfg) {
    return run_perturbation_study(cfg, generate_perturbation_ensembles(cfg));
}

// ---- pairwise ----

PairScorer::PairScorer(const FeatureTable& archetypes, PairToleranceRule r, AbsentPolicy p, std::size_t min_u)
    : names(archetypes.names), rule(std::move(r)), policy(p), min_universe(min_u) {
    const std::size_t m = names.size();
    if (m == 0) fail(ErrorKind::InvalidInput, "feature table has no features");
    if (rule.source == "spec") {
        if (!rule.spec) fail(ErrorKind::Usage, "tolerance source 'spec' needs a tolerance spec");
        validate(*rule.spec);
        if (rule.spec->names != names) fail(ErrorKind::SpecMismatch, "tolerance spec does not match the feature table");
        spec_digest = spec_hash(*rule.spec);
    } else if (rule.source == "percent") {
        if (!(rule.pct > 0.0)) fail(ErrorKind::Usage, "percent tolerance needs pct > 0");
        ojson d;
        d["source"] = "percent";
        d["pct"] = rule.pct;
        d["features"] = names;
        spec_digest = sha256_hex(d.dump());
    } else {
        fail(ErrorKind::Usage, "unknown tolerance source '" + rule.source + "'");
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double sd = finite_std(column(archetypes, j));
        scale.push_back(sd);
        eps0.push_back(sd > 0.0 ? 0.2 * sd : 1e-12);
    }
    weights.assign(m, 1.0);
    if (!rule.weight_names.empty()) {
        if (rule.weight_names.size() != rule.weights.size())
            fail(ErrorKind::InvalidInput, "weight names and values differ in length");
        weights.assign(m, 0.0);
        for (std::size_t k = 0; k < rule.weight_names.size(); ++k) {
            const auto it = std::find(names.begin(), names.end(), rule.weight_names[k]);
            if (it == names.end()) fail(ErrorKind::SpecMismatch, "weighted feature '" + rule.weight_names[k] + "' is unknown");
            if (!(rule.weights[k] >= 1.0)) fail(ErrorKind::InvalidWeights, "weights must all be >= 1");
            weights[static_cast<std::size_t>(it - names.begin())] = rule.weights[k];
        }
        ojson d;
        d["base"] = spec_digest;
        d["weight_names"] = rule.weight_names;
        d["weights"] = rule.weights;
        spec_digest = sha256_hex(d.dump());
    } else if (rule.spec) {
        weights = rule.spec->weights;
    }
}

PairResult PairScorer::score(const std::vector<double>& s, const std::vector<double>& a) const {
    const std::size_t m = names.size();
    if (s.size() != m || a.size() != m) fail(ErrorKind::SpecMismatch, "feature vector length does not match");
    PairResult r;
    double wc = 0.0, wt = 0.0;
    double uc = 0.0, ut = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const bool se = std::isfinite(s[j]), ae = std::isfinite(a[j]);
        if (std::isinf(s[j]) || std::isinf(a[j])) fail(ErrorKind::InvalidInput, "feature '" + names[j] + "' is infinite");
        int common = 0;
        if (se && ae) {
            double lo, hi;
            if (rule.source == "spec") {
                lo = rule.spec->lower[j];
                hi = rule.spec->upper[j];
            } else {
                const Interval iv = percent_tolerance(a[j], rule.pct, eps0[j]);
                lo = iv.lower;
                hi = iv.upper;
            }
            common = (lo < s[j] && s[j] < hi) ? 1 : 0;
        } else if (!se && !ae) {
            if (policy == AbsentPolicy::DropFromUniverse) continue;
            common = 1;
        }
        ++r.universe;
        uc += common;
        ut += 1.0;
        wc += weights[j] * common;
        wt += weights[j];
    }
    if (r.universe < min_universe || r.universe == 0) {
        r.rejected = true;
        r.flags.push_back("rejected:min_universe");
        r.wsi_weighted = r.wsi_uniform = std::nan("");
        return r;
    }
    r.wsi_uniform = uc / ut;
    if (wt > 0.0) {
        r.wsi_weighted = wc / wt;
    } else {
        r.wsi_weighted = std::nan("");
        r.flags.push_back("weighted:empty_universe");
    }
    return r;
}

double PairScorer::distance(const std::vector<double>& a, const std::vector<double>& b) const {
    double s = 0.0;
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (!(scale[j] > 0.0) || !std::isfinite(a[j]) || !std::isfinite(b[j])) continue;
        const double d = (a[j] - b[j]) / scale[j];
        s += d * d;
    }
    return std::sqrt(s);
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const FeatureTable& subjects,
                                                             const FeatureTable& archetypes, std::size_t n_pairs,
                                                             std::uint64_t seed, bool unordered_within) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    const std::size_t ns = subjects.ids.size(), na = archetypes.ids.size();
    auto admissible = [&](std::size_t i, std::size_t j) {
        return unordered_within ? i < j : subjects.ids[i] != archetypes.ids[j];
    };
    const std::size_t total = ns * na;
    std::size_t admissible_count = 0;
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < na; ++j) admissible_count += admissible(i, j);
    if (admissible_count == 0) fail(ErrorKind::InvalidInput, "no admissible pairs");
    if (n_pairs >= admissible_count) {
        for (std::size_t i = 0; i < ns; ++i)
            for (std::size_t j = 0; j < na; ++j)
                if (admissible(i, j)) all.emplace_back(i, j);
        return all;
    }
    Rng rng(seed);
    std::unordered_set<std::size_t> seen;
    while (all.size() < n_pairs) {
        const std::size_t k = static_cast<std::size_t>(rng.uniform_index(total));
        const std::size_t i = k / na, j = k % na;
        if (!admissible(i, j) || !seen.insert(k).second) continue;
        all.emplace_back(i, j);
    }
    return all;
}

namespace {

struct ScoredPair {
    std::size_t s = 0, a = 0;
    PairResult r;
    double distance = 0.0;
};

std::vector<ScoredPair> score_pairs(const PairScorer& scorer, const FeatureTable& subjects,
                                    const FeatureTable& archetypes,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, int jobs) {
    if (subjects.names != archetypes.names)
        fail(ErrorKind::SpecMismatch, "subject and archetype feature tables have different features");
    std::vector<ScoredPair> out(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        out[k].s = i;
        out[k].a = j;
        out[k].r = scorer.score(subjects.rows[i], archetypes.rows[j]);
        out[k].distance = scorer.distance(subjects.rows[i], archetypes.rows[j]);
    });
    return out;
}

ojson rule_json(const PairToleranceRule& rule) {
    ojson j;
    j["source"] = rule.source;
    if (rule.source == "percent") j["pct"] = rule.pct;
    if (!rule.weight_names.empty()) {
        j["weight_names"] = rule.weight_names;
        j["weights"] = rule.weights;
    }
    return j;
}

}  // namespace

Report run_cross_similarity(const CrossConfig& cfg, const PairToleranceRule& rule, const FeatureTable& archetypes,
                            const std::vector<NamedTable>& subjects) {
    if (cfg.n_pairs < 1) fail(ErrorKind::Usage, "pair count must be >= 1");
    if (subjects.empty()) fail(ErrorKind::Usage, "cross similarity needs at least one subject ensemble");
    const PairScorer scorer(archetypes, rule, cfg.policy, cfg.min_universe);
    std::string csv = "ensemble,subject_id,archetype_id,universe,wsi_weighted,wsi_uniform,distance,flags\n";
    ojson per = ojson::array();
    for (std::size_t e = 0; e < subjects.size(); ++e) {
        const auto& sub = subjects[e];
        const auto pairs = sample_pairs(sub.table, archetypes, cfg.n_pairs, mix_seed(cfg.seed, e));
        const auto scored = score_pairs(scorer, sub.table, archetypes, pairs, cfg.jobs);
        std::vector<double> ww, wu, dd;
        std::size_t rejected = 0;
        for (const auto& p : scored) {
            csv += sub.name + "," + sub.table.ids[p.s] + "," + archetypes.ids[p.a] + "," +
                   std::to_string(p.r.universe) + "," + fmt(p.r.wsi_weighted) + "," + fmt(p.r.wsi_uniform) + "," +
                   fmt(p.distance) + "," + join(p.r.flags, ";") + "\n";
            if (p.r.rejected) {
                ++rejected;
                continue;
            }
            ww.push_back(p.r.wsi_weighted);
            wu.push_back(p.r.wsi_uniform);
            dd.push_back(p.distance);
        }
        ojson j;
        j["ensemble"] = sub.name;
        j["pairs"] = scored.size();
        j["rejected"] = rejected;
        j["wsi_weighted"] = quantile_summary(ww);
        j["wsi_uniform"] = quantile_summary(wu);
        j["distance"] = quantile_summary(dd);
        per.push_back(j);
    }
    Report rep;
    rep.files.emplace_back("cross_similarity.csv", csv);
    rep.summary["workflow"] = "cross_similarity";
    ojson c;
    c["n_pairs"] = cfg.n_pairs;
    c["min_universe"] = cfg.min_universe;
    c["tolerance"] = rule_json(rule);
    c["subjects"] = ojson::array();
    for (const auto& s : subjects) c["subjects"].push_back(s.name);
    rep.summary["config"] = c;
    rep.summary["seeds"] = {{"study", cfg.seed}};
    rep.summary["absent_policy"] = to_string(cfg.policy);
    rep.summary["spec_hash"] = scorer.spec_digest;
    rep.summary["results"] = per;
    return rep;
}

Report run_self_similarity(const SelfConfig& cfg, const PairToleranceRule& rule, const FeatureTable& archetypes,
                           const std::vector<NamedTable>& ensembles) {
    if (cfg.n_pairs < 1) fail(ErrorKind::Usage, "pair count must be >= 1");
    if (!(0.0 <= cfg.band_low && cfg.band_low < cfg.band_high && cfg.band_high <= 1.0))
        fail(ErrorKind::Usage, "band quantiles must satisfy 0 <= low < high <= 1");
    const PairScorer scorer(archetypes, rule, cfg.policy, cfg.min_universe);
    std::string csv = "ensemble,id_a,id_b,universe,wsi_weighted,wsi_uniform,flags\n";

    auto run = [&](const std::string& name, const FeatureTable& t, std::uint64_t stream) {
        const std::size_t n = t.ids.size();
        const std::size_t available = n * (n - 1) / 2;
        if (n < 2 || cfg.n_pairs > available)
            fail(ErrorKind::InvalidInput, "ensemble '" + name + "' has " + std::to_string(available) +
                                              " distinct pairs; " + std::to_string(cfg.n_pairs) + " requested");
        const auto pairs = sample_pairs(t, t, cfg.n_pairs, mix_seed(cfg.seed, stream), true);
        const auto scored = score_pairs(scorer, t, t, pairs, cfg.jobs);
        std::vector<double> w;
        for (const auto& p : scored) {
            csv += name + "," + t.ids[p.s] + "," + t.ids[p.a] + "," + std::to_string(p.r.universe) + "," +
                   fmt(p.r.wsi_weighted) + "," + fmt(p.r.wsi_uniform) + "," + join(p.r.flags, ";") + "\n";
            if (!p.r.rejected && std::isfinite(p.r.wsi_weighted)) w.push_back(p.r.wsi_weighted);
        }
        if (w.empty()) fail(ErrorKind::DegenerateComparison, "ensemble '" + name + "': every pair was rejected");
        return w;
    };

    const auto base = run("archetype", archetypes, 0);
    const double lo = quantile(base, cfg.band_low), hi = quantile(base, cfg.band_high);
    ojson per = ojson::array();
    auto assess = [&](const std::string& name, const std::vector<double>& w) {
        const double med = quantile(w, 0.5);
        ojson j;
        j["ensemble"] = name;
        j["pairs"] = w.size();
        j["median"] = med;
        j["wsi"] = quantile_summary(w);
        j["flag"] = med > hi ? "above_band" : (med < lo ? "below_band" : "none");
        per.push_back(j);
    };
    assess("archetype", base);
    for (std::size_t e = 0; e < ensembles.size(); ++e)
        assess(ensembles[e].name, run(ensembles[e].name, ensembles[e].table, e + 1));

    Report rep;
    rep.files.emplace_back("self_similarity.csv", csv);
    rep.summary["workflow"] = "self_similarity";
    ojson c;
    c["n_pairs"] = cfg.n_pairs;
    c["min_universe"] = cfg.min_universe;
    c["band_quantiles"] = {cfg.band_low, cfg.band_high};
    c["tolerance"] = rule_json(rule);
    c["ensembles"] = ojson::array();
    for (const auto& s : ensembles) c["ensembles"].push_back(s.name);
    rep.summary["config"] = c;
    rep.summary["seeds"] = {{"study", cfg.seed}};
    rep.summary["absent_policy"] = to_string(cfg.policy);
    rep.summary["spec_hash"] = scorer.spec_digest;
    rep.summary["band"] = {lo, hi};
    rep.summary["results"] = per;
    return rep;
}

std::pair<FeatureTable, FeatureTable> reconstruction_tables(const AgreementConfig& cfg) {
    if (cfg.n < 2) fail(ErrorKind::InvalidInput, "agreement fixture needs n >= 2");
    std::vector<GrayImage> gray(cfg.n);
    parallel_for(cfg.n, cfg.jobs, [&](std::size_t i) {
        WonostConfig w = cfg.wonost;
        w.seed = mix_seed(cfg.seed, i);
        gray[i] = to_grayscale(generate_wonost(w).rgb, ChannelSelect::Luma);
    });
    const Pca2dModel model = fit_pca2d(gray);
    const SelectionMask low = dose_mask(model, cfg.m_low, mix_seed(cfg.seed, 1ULL << 32));
    const SelectionMask high = dose_mask(model, cfg.m_high, mix_seed(cfg.seed, (1ULL << 32) + 1));
    std::vector<RgbImage> lo(cfg.n), hi(cfg.n);
    parallel_for(cfg.n, cfg.jobs, [&](std::size_t i) {
        const Eigen::MatrixXd L = project(model, gray[i]);
        const GrayImage a = reconstruct(model, L, low), b = reconstruct(model, L, high);
        lo[i] = RgbImage(a.rows(), a.cols());
        lo[i].red = lo[i].green = lo[i].blue = a;
        hi[i] = RgbImage(b.rows(), b.cols());
        hi[i].red = hi[i].green = hi[i].blue = b;
    });
    const auto ids = numbered_ids("img-", cfg.n);
    return {extract_table(lo, ids, ChannelSelect::Red, {}, cfg.jobs),
            extract_table(hi, ids, ChannelSelect::Red, {}, cfg.jobs)};
}

Report run_reconstruction_agreement(const AgreementConfig& cfg, const PairToleranceRule& rule,
                                    const FeatureTable& low, const FeatureTable& high) {
    if (low.names != high.names) fail(ErrorKind::SpecMismatch, "reconstruction tables have different features");
    for (double d : cfg.deltas)
        if (!(d > 0.0 && d < 1.0)) fail(ErrorKind::Usage, "agreement deltas must lie in (0, 1)");
    const PairScorer scorer(high, rule, cfg.policy, cfg.min_universe);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < low.ids.size(); ++i) {
        const auto it = std::find(high.ids.begin(), high.ids.end(), low.ids[i]);
        if (it == high.ids.end()) fail(ErrorKind::Data, "reconstruction '" + low.ids[i] + "' has no partner");
        pairs.emplace_back(i, static_cast<std::size_t>(it - high.ids.begin()));
    }
    if (pairs.empty()) fail(ErrorKind::Data, "no reconstruction pairs");
    const auto scored = score_pairs(scorer, low, high, pairs, cfg.jobs);
    std::vector<double> wsi, dist;
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < scored.size(); ++k) {
        if (scored[k].r.rejected || !std::isfinite(scored[k].r.wsi_weighted)) continue;
        kept.push_back(k);
        wsi.push_back(scored[k].r.wsi_weighted);
        dist.push_back(scored[k].distance);
    }
    if (kept.empty()) fail(ErrorKind::DegenerateComparison, "every reconstruction pair was rejected");
    const auto rescaled = quantile_match_rescale(dist, wsi);
    std::string csv = "pair_id,wsi,distance,rescaled_distance,flags\n";
    std::size_t next = 0;
    for (std::size_t k = 0; k < scored.size(); ++k) {
        const bool has = next < kept.size() && kept[next] == k;
        csv += low.ids[scored[k].s] + "," + fmt(scored[k].r.wsi_weighted) + "," + fmt(scored[k].distance) + "," +
               (has ? fmt(rescaled[next]) : std::string{}) + "," + join(scored[k].r.flags, ";") + "\n";
        if (has) ++next;
    }
    ojson bands = ojson::array();
    for (double d : cfg.deltas) {
        const AgreementReport a = agreement_analysis(wsi, rescaled, d);
        ojson j;
        j["delta"] = d;
        j["fraction_outside_band"] = a.fraction_outside_band;
        j["fraction_opposite_conclusion"] = a.fraction_opposite_conclusion;
        j["outside_band"] = a.outside_band;
        j["opposite_conclusion"] = a.opposite_conclusion;
        j["pairs"] = a.n;
        bands.push_back(j);
    }
    Report rep;
    rep.files.emplace_back("agreement.csv", csv);
    rep.summary["workflow"] = "reconstruction_agreement";
    ojson c = to_json(cfg);
    c["tolerance"] = rule_json(rule);
    rep.summary["config"] = c;
    rep.summary["seeds"] = {{"study", cfg.seed}};
    rep.summary["absent_policy"] = to_string(cfg.policy);
    rep.summary["spec_hash"] = scorer.spec_digest;
    rep.summary["wsi"] = quantile_summary(wsi);
    rep.summary["agreement"] = bands;
    return rep;
}

}  // namespace tally
