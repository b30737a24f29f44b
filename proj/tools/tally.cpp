// tally: command-line front end for phantoms, features, tolerances and studies.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tally/baselines.hpp"
#include "tally/cobalt.hpp"
#include "tally/error.hpp"
#include "tally/features.hpp"
#include "tally/io.hpp"
#include "tally/parallel.hpp"
#include "tally/pca2d.hpp"
#include "tally/plot.hpp"
#include "tally/rng.hpp"
#include "tally/study.hpp"
#include "tally/tolerance.hpp"
#include "tally/wonost.hpp"

using namespace tally;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Usage, "config '" + path + "' is not valid JSON: " + e.what());
    }
}

fs::path config_dir(const std::string& path) { return path.empty() ? fs::current_path() : fs::path(path).parent_path(); }

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
}

void require_out(const Globals& g) {
    if (g.out.empty()) fail(ErrorKind::Usage, "--out is required");
}

std::vector<double> column(const FeatureTable& t, std::size_t j) {
    std::vector<double> v;
    for (const auto& r : t.rows) v.push_back(r[j]);
    return v;
}

std::vector<double> finite(const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v)
        if (std::isfinite(x)) out.push_back(x);
    return out;
}

double finite_std(const std::vector<double>& v) {
    const auto f = finite(v);
    if (f.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : f) m += x;
    m /= static_cast<double>(f.size());
    double ss = 0.0;
    for (double x : f) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(f.size() - 1));
}

void ensure_same_features(const FeatureTable& a, const FeatureTable& b) {
    if (a.names != b.names) fail(ErrorKind::SpecMismatch, "feature tables list different features");
}

// ---- phantom ----

std::string provenance(const std::string& generator, const ojson& cfg, std::uint64_t seed,
                       const std::vector<std::string>& extra) {
    std::string p = "generator=" + generator + ";config=" + sha256_hex(cfg.dump()).substr(0, 16) +
                    ";seed=" + std::to_string(seed);
    for (const auto& e : extra) p += ";" + e;
    return p;
}

void cmd_phantom_cobalt(const Globals& g, std::size_t count, const std::vector<std::string>& ablate) {
    require_out(g);
    CobaltConfig base = cobalt_config_from_json(load_config(g.config));
    if (g.seed) base.seed = *g.seed;
    for (const auto& a : ablate)
        if (a != "spines" && a != "background") fail(ErrorKind::Usage, "unknown ablation '" + a + "'");
    const fs::path out(g.out);
    fs::create_directories(out / "masks");
    const auto ids = numbered_ids("cobalt-", count);
    std::vector<ManifestEntry> entries(count);
    parallel_for(count, g.jobs, [&](std::size_t i) {
        CobaltConfig c = base;
        c.seed = mix_seed(base.seed, i);
        CobaltRealization r = generate_cobalt(c);
        for (const auto& a : ablate)
            r = a == "spines" ? ablate_spines(std::move(r)) : shuffle_background(std::move(r), mix_seed(c.seed, 77));
        const std::string file = ids[i] + ".png";
        write_png(out / file, r.rgb);
        write_png(out / "masks" / (ids[i] + "_background.png"), r.background);
        write_png(out / "masks" / (ids[i] + "_foreground.png"), r.foreground);
        write_png(out / "masks" / (ids[i] + "_cell.png"), r.cell);
        write_png(out / "masks" / (ids[i] + "_edge.png"), r.edge);
        write_png(out / "masks" / (ids[i] + "_spines.png"), r.spines);
        std::vector<std::string> extra;
        if (!r.ablations.empty()) {
            std::string s = "ablations=";
            for (std::size_t k = 0; k < r.ablations.size(); ++k) s += (k ? "+" : "") + r.ablations[k];
            extra.push_back(s);
        }
        for (const auto& f : r.flags) extra.push_back("flag=" + f);
        entries[i] = {ids[i], file, sha256_file(out / file), provenance("cobalt", to_json(base), c.seed, extra)};
    });
    EnsembleManifest m{out, entries};
    write_file(out / "manifest.csv", to_csv(m));
    std::cout << "wrote " << count << " CoBaLT phantoms to " << out.string() << "\n";
}

void cmd_phantom_wonost(const Globals& g, std::size_t count) {
    require_out(g);
    WonostConfig base = wonost_config_from_json(load_config(g.config));
    if (g.seed) base.seed = *g.seed;
    const fs::path out(g.out);
    fs::create_directories(out / "masks");
    const auto ids = numbered_ids("wonost-", count);
    std::vector<ManifestEntry> entries(count);
    std::vector<std::string> seed_rows(count);
    parallel_for(count, g.jobs, [&](std::size_t i) {
        WonostConfig c = base;
        c.seed = mix_seed(base.seed, i);
        const WonostRealization r = generate_wonost(c);
        const std::string file = ids[i] + ".png";
        write_png(out / file, r.rgb);
        GrayImage marker(r.rgb.rows(), r.rgb.cols(), 0);
        for (std::size_t k = 0; k < marker.size(); ++k) marker[k] = r.rgb.green[k] ? 255 : 0;
        write_png(out / "masks" / (ids[i] + "_seeds.png"), marker);
        std::string rows;
        for (std::size_t k = 0; k < r.all_seeds.size(); ++k)
            rows += ids[i] + "," + std::to_string(k) + "," + format_double(r.all_seeds[k].row) + "," +
                    format_double(r.all_seeds[k].col) + "," + (k < r.base_seeds.size() ? "base" : "extra") + "\n";
        seed_rows[i] = rows;
        entries[i] = {ids[i], file, sha256_file(out / file), provenance("wonost", to_json(base), c.seed, {})};
    });
    std::string seeds = "id,index,row,col,kind\n";
    for (const auto& s : seed_rows) seeds += s;
    write_file(out / "seeds.csv", seeds);
    write_file(out / "manifest.csv", to_csv(EnsembleManifest{out, entries}));
    std::cout << "wrote " << count << " WonoST phantoms to " << out.string() << "\n";
}

// ---- perturb ----

void cmd_perturb(const Globals& g, const std::string& in, const std::string& channel, double pct) {
    require_out(g);
    if (channel != "red" && channel != "green" && channel != "blue" && channel != "all")
        fail(ErrorKind::Usage, "--channel must be red, green, blue or all");
    if (!(pct >= 0.0)) fail(ErrorKind::Usage, "--pct must be nonnegative");
    const EnsembleManifest src = ingest_ensemble(in);
    const std::uint64_t seed = g.seed.value_or(0);
    const fs::path out(g.out);
    if (fs::exists(out) && fs::equivalent(out, src.root))
        fail(ErrorKind::Usage, "--out must differ from the input ensemble");
    fs::create_directories(out);
    std::vector<ManifestEntry> entries(src.entries.size());
    parallel_for(src.entries.size(), g.jobs, [&](std::size_t i) {
        const auto& e = src.entries[i];
        const RgbImage img = read_png_rgb(src.root / e.path);
        const std::uint64_t s = mix_seed(seed, i);
        Perturbed p;
        if (channel == "red") p = perturb_red(img, pct);
        else if (channel == "green") p = perturb_green(img, pct, s);
        else if (channel == "blue") p = perturb_blue(img, pct, s);
        else p = perturb_all(img, pct, s);
        const std::string file = e.id + ".png";
        write_png(out / file, p.rgb);
        std::string prov = e.provenance.empty() ? "" : e.provenance + ";";
        char pbuf[32];
        std::snprintf(pbuf, sizeof pbuf, "%g", pct);
        prov += "perturb=" + channel + ":" + pbuf + ";perturb_seed=" + std::to_string(s);
        for (const auto& f : p.flags) prov += ";flag=" + f;
        entries[i] = {e.id, file, sha256_file(out / file), prov};
    });
    write_file(out / "manifest.csv", to_csv(EnsembleManifest{out, entries}));
    std::cout << "perturbed " << entries.size() << " images (" << channel << ", " << pct << "%)\n";
}

// ---- features ----

void cmd_features_extract(const Globals& g, const std::string& in, const std::string& channel, int levels,
                          const std::vector<int>& distances) {
    require_out(g);
    GlcmSpec spec;
    spec.levels = levels;
    if (!distances.empty()) spec.distances = distances;
    validate(spec);
    const EnsembleManifest m = ingest_ensemble(in);
    std::vector<RgbImage> images(m.entries.size());
    parallel_for(images.size(), g.jobs, [&](std::size_t i) { images[i] = read_png_rgb(m.root / m.entries[i].path); });
    std::vector<std::string> ids;
    for (const auto& e : m.entries) ids.push_back(e.id);
    const FeatureTable t = extract_table(images, ids, parse_channel_select(channel), spec, g.jobs);
    write_file(g.out, to_csv(t));
    std::cout << "extracted " << t.names.size() << " features from " << t.rows.size() << " images\n";
}

// ---- tolerance ----

void write_spec(const std::string& out, const ToleranceSpec& spec, const std::vector<std::vector<std::string>>& flags) {
    ojson j = to_json(spec);
    for (std::size_t i = 0; i < flags.size(); ++i)
        if (!flags[i].empty()) j["features"][i]["flags"] = flags[i];
    j["spec_hash"] = spec_hash(spec);
    write_file(out, j.dump(2) + "\n");
}

void cmd_tolerance_ks(const Globals& g, const std::string& arch, double q_low, double q_high, std::size_t draws) {
    require_out(g);
    const FeatureTable a = read_feature_table(arch);
    ToleranceSpec spec;
    std::vector<std::vector<std::string>> flags;
    for (std::size_t j = 0; j < a.names.size(); ++j) {
        const auto v = finite(column(a, j));
        const Interval iv = split_half_ks_tolerance(v, q_low, q_high, draws, mix_seed(g.seed.value_or(0), j));
        spec.names.push_back(a.names[j]);
        // Equal quantiles still need an open interval around the statistic.
        const bool deg = !(iv.lower < iv.upper);
        spec.lower.push_back(deg ? iv.lower - 1e-9 : iv.lower);
        spec.upper.push_back(deg ? iv.upper + 1e-9 : iv.upper);
        spec.weights.push_back(1.0);
        flags.push_back(iv.flags);
    }
    write_spec(g.out, spec, flags);
    std::cout << "KS tolerances for " << spec.size() << " features\n";
}

void cmd_tolerance_percent(const Globals& g, const std::string& arch, double pct) {
    require_out(g);
    const FeatureTable a = read_feature_table(arch);
    ToleranceSpec spec;
    std::vector<std::vector<std::string>> flags;
    for (std::size_t j = 0; j < a.names.size(); ++j) {
        const auto v = finite(column(a, j));
        if (v.empty()) fail(ErrorKind::DegenerateComparison, "feature '" + a.names[j] + "' has no finite values");
        const double sd = finite_std(v);
        const Interval iv = percent_tolerance(quantile(v, 0.5), pct, sd > 0.0 ? 0.2 * sd : 1e-12);
        spec.names.push_back(a.names[j]);
        spec.lower.push_back(iv.lower);
        spec.upper.push_back(iv.upper);
        spec.weights.push_back(1.0);
        flags.push_back(iv.flags);
    }
    write_spec(g.out, spec, flags);
    std::cout << "percent tolerances for " << spec.size() << " features\n";
}

void cmd_tolerance_kde(const Globals& g, const std::string& arch, const std::string& subj) {
    require_out(g);
    const FeatureTable a = read_feature_table(arch), s = read_feature_table(subj);
    ensure_same_features(a, s);
    ToleranceSpec spec;
    std::vector<std::vector<std::string>> flags;
    for (std::size_t j = 0; j < a.names.size(); ++j) {
        const auto va = finite(column(a, j)), vs = finite(column(s, j));
        spec.names.push_back(a.names[j]);
        spec.weights.push_back(1.0);
        try {
            const KdeTolerance k = kde_intersection_tolerance(va, vs);
            spec.lower.push_back(k.lower);
            spec.upper.push_back(k.upper);
            flags.push_back(k.flags);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateComparison || va.empty()) throw;
            // Constant archetype feature: fall back to a tight interval around it.
            const double v = quantile(va, 0.5);
            const Interval iv = percent_tolerance(v, 20.0, 1e-12);
            spec.lower.push_back(iv.lower);
            spec.upper.push_back(iv.upper);
            flags.push_back({"kde_degenerate"});
        }
    }
    write_spec(g.out, spec, flags);
    std::cout << "KDE tolerances for " << spec.size() << " features\n";
}

// ---- weights ----

void cmd_weights_forest(const Globals& g, const std::string& arch, const std::string& subj, std::size_t top_k,
                        int trees, int mtry) {
    require_out(g);
    const FeatureTable a = read_feature_table(arch), s = read_feature_table(subj);
    ensure_same_features(a, s);
    // Columns with any non-finite value cannot be split on; they get zero importance.
    std::vector<std::size_t> usable;
    for (std::size_t j = 0; j < a.names.size(); ++j) {
        bool ok = true;
        for (const auto* t : {&a, &s})
            for (const auto& r : t->rows) ok = ok && std::isfinite(r[j]);
        if (ok) usable.push_back(j);
    }
    if (usable.empty()) fail(ErrorKind::DegenerateComparison, "no feature is finite on every image");
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (const auto* t : {&a, &s}) {
        for (const auto& r : t->rows) {
            std::vector<double> row;
            for (auto j : usable) row.push_back(r[j]);
            x.push_back(row);
            y.push_back(t == &a ? 1 : 0);
        }
    }
    ForestOptions opt;
    opt.n_trees = trees;
    opt.max_features = mtry;
    opt.seed = g.seed.value_or(0);
    opt.jobs = g.jobs;
    const auto imp_used = random_forest_importance(x, y, opt);
    std::vector<double> imp(a.names.size(), 0.0);
    for (std::size_t k = 0; k < usable.size(); ++k) imp[usable[k]] = imp_used[k];
    const ImportanceWeights w = importance_weights(imp, top_k, a.names);
    ojson j;
    j["trees"] = trees;
    j["max_features"] = mtry;
    j["seed"] = opt.seed;
    j["importances"] = ojson::array();
    for (std::size_t k = 0; k < imp.size(); ++k) j["importances"].push_back({{"name", a.names[k]}, {"importance", imp[k]}});
    j["weights"] = ojson::array();
    for (std::size_t k = 0; k < w.names.size(); ++k)
        j["weights"].push_back({{"name", w.names[k]}, {"weight", w.weights[k]}});
    write_file(g.out, j.dump(2) + "\n");
    std::cout << "kept " << w.names.size() << " weighted features\n";
}

// ---- pca2d ----

std::vector<GrayImage> load_gray(const EnsembleManifest& m, ChannelSelect ch, int jobs) {
    std::vector<GrayImage> out(m.entries.size());
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = to_grayscale(read_png_rgb(m.root / m.entries[i].path), ch); });
    return out;
}

void cmd_pca2d_fit(const Globals& g, const std::string& in, const std::string& channel, const std::string& norm) {
    require_out(g);
    const EnsembleManifest m = ingest_ensemble(in);
    const Pca2dModel model = fit_pca2d(load_gray(m, parse_channel_select(channel), g.jobs), parse_cov_normalization(norm));
    save_model(model, g.out);
    std::cout << "fitted 2DPCA on " << model.n_images << " images of " << model.rows << "x" << model.cols << "\n";
}

void write_reconstructions(const Globals& g, const EnsembleManifest& m, const Pca2dModel& model,
                           const SelectionMask& mask, const std::string& prov) {
    const fs::path out(g.out);
    fs::create_directories(out);
    const auto imgs = load_gray(m, ChannelSelect::Luma, g.jobs);
    std::vector<ManifestEntry> entries(imgs.size());
    parallel_for(imgs.size(), g.jobs, [&](std::size_t i) {
        const GrayImage r = reconstruct(model, project(model, imgs[i]), mask);
        const std::string file = m.entries[i].id + ".png";
        write_png(out / file, r);
        entries[i] = {m.entries[i].id, file, sha256_file(out / file), prov};
    });
    write_file(out / "manifest.csv", to_csv(EnsembleManifest{out, entries}));
    std::cout << "reconstructed " << entries.size() << " images\n";
}

void cmd_pca2d_reconstruct(const Globals& g, const std::string& model_path, const std::string& in, int kr, int kc) {
    require_out(g);
    const Pca2dModel model = load_model(model_path);
    const SelectionMask mask = kr <= 0 && kc <= 0 ? full_mask(model)
                                                  : leading_mask(model, kr > 0 ? kr : model.rows, kc > 0 ? kc : model.cols);
    write_reconstructions(g, ingest_ensemble(in), model, mask,
                          "pca2d=leading;rows=" + std::to_string(kr) + ";cols=" + std::to_string(kc));
}

void cmd_pca2d_dose(const Globals& g, const std::string& model_path, const std::string& in, int m) {
    require_out(g);
    const Pca2dModel model = load_model(model_path);
    const std::uint64_t seed = g.seed.value_or(0);
    const SelectionMask mask = dose_mask(model, m, seed);
    write_reconstructions(g, ingest_ensemble(in), model, mask,
                          "pca2d=dose;m=" + std::to_string(m) + ";seed=" + std::to_string(seed));
}

// ---- study ----

struct PairInputs {
    PairToleranceRule rule;
    ojson inputs = ojson::object();
};

PairInputs pair_inputs(const json& j, const fs::path& base) {
    PairInputs p;
    if (j.contains("tolerance")) {
        const json& t = j.at("tolerance");
        p.rule.source = t.value("source", std::string("percent"));
        p.rule.pct = t.value("pct", 20.0);
        if (p.rule.source == "spec") {
            if (!t.contains("path")) fail(ErrorKind::Usage, "tolerance source 'spec' needs a 'path'");
            const fs::path sp = resolve(base, t.at("path").get<std::string>());
            p.rule.spec = read_tolerance_spec(sp);
            p.inputs["tolerance_spec"] = {{"path", sp.string()}, {"sha256", sha256_file(sp)}};
        }
    }
    if (j.contains("weights")) {
        const fs::path wp = resolve(base, j.at("weights").get<std::string>());
        const json w = json::parse(read_file(wp));
        for (const auto& e : w.at("weights")) {
            p.rule.weight_names.push_back(e.at("name").get<std::string>());
            p.rule.weights.push_back(e.at("weight").get<double>());
        }
        p.inputs["weights"] = {{"path", wp.string()}, {"sha256", sha256_file(wp)}};
    }
    return p;
}

FeatureTable load_table(const fs::path& base, const std::string& path, ojson& inputs, const std::string& key) {
    const fs::path p = resolve(base, path);
    inputs[key] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
    return read_feature_table(p);
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }) == allowed.end())
            fail(ErrorKind::Usage, std::string(what) + " config: unknown key '" + it.key() + "'");
}

std::vector<NamedTable> named_tables(const json& list, const fs::path& base, ojson& inputs, const char* what) {
    if (!list.is_array() || list.empty()) fail(ErrorKind::Usage, std::string("'") + what + "' must be a non-empty array");
    std::vector<NamedTable> out;
    for (const auto& e : list) {
        const std::string name = e.at("name").get<std::string>();
        out.push_back({name, load_table(base, e.at("table").get<std::string>(), inputs, name)});
    }
    return out;
}

Report study_cross(const Globals& g, const json& j) {
    only_keys(j, {"archetypes", "subjects", "tolerance", "weights", "n_pairs", "absent_policy", "min_universe", "seed"},
              "cross");
    const fs::path base = config_dir(g.config);
    if (!j.contains("archetypes") || !j.contains("subjects"))
        fail(ErrorKind::Usage, "cross config needs 'archetypes' and 'subjects'");
    PairInputs p = pair_inputs(j, base);
    CrossConfig c;
    c.seed = g.seed.value_or(j.value("seed", std::uint64_t{0}));
    c.jobs = g.jobs;
    c.n_pairs = j.value("n_pairs", c.n_pairs);
    c.policy = parse_absent_policy(j.value("absent_policy", std::string("count_as_common")));
    c.min_universe = j.value("min_universe", c.min_universe);
    const FeatureTable arch = load_table(base, j.at("archetypes").get<std::string>(), p.inputs, "archetypes");
    const auto subs = named_tables(j.at("subjects"), base, p.inputs, "subjects");
    Report r = run_cross_similarity(c, p.rule, arch, subs);
    r.summary["inputs"] = p.inputs;
    return r;
}

Report study_self(const Globals& g, const json& j) {
    only_keys(j, {"archetypes", "ensembles", "tolerance", "weights", "n_pairs", "absent_policy", "min_universe",
                  "seed", "band"},
              "self");
    const fs::path base = config_dir(g.config);
    if (!j.contains("archetypes")) fail(ErrorKind::Usage, "self config needs 'archetypes'");
    PairInputs p = pair_inputs(j, base);
    SelfConfig c;
    c.seed = g.seed.value_or(j.value("seed", std::uint64_t{0}));
    c.jobs = g.jobs;
    c.n_pairs = j.value("n_pairs", c.n_pairs);
    c.policy = parse_absent_policy(j.value("absent_policy", std::string("count_as_common")));
    c.min_universe = j.value("min_universe", c.min_universe);
    if (j.contains("band")) {
        const auto b = j.at("band").get<std::vector<double>>();
        if (b.size() != 2) fail(ErrorKind::Usage, "'band' must hold two quantiles");
        c.band_low = b[0];
        c.band_high = b[1];
    }
    const FeatureTable arch = load_table(base, j.at("archetypes").get<std::string>(), p.inputs, "archetypes");
    std::vector<NamedTable> ens;
    if (j.contains("ensembles")) ens = named_tables(j.at("ensembles"), base, p.inputs, "ensembles");
    Report r = run_self_similarity(c, p.rule, arch, ens);
    r.summary["inputs"] = p.inputs;
    return r;
}

Report study_agreement(const Globals& g, json j) {
    const fs::path base = config_dir(g.config);
    PairInputs p = pair_inputs(j, base);
    std::optional<std::string> low, high;
    if (j.contains("low")) low = j.at("low").get<std::string>();
    if (j.contains("high")) high = j.at("high").get<std::string>();
    if (low.has_value() != high.has_value()) fail(ErrorKind::Usage, "agreement config needs both 'low' and 'high'");
    for (const char* k : {"tolerance", "weights", "low", "high"}) j.erase(k);
    AgreementConfig c = agreement_config_from_json(j);
    if (g.seed) c.seed = *g.seed;
    c.jobs = g.jobs;
    Report r;
    if (low) {
        const FeatureTable lo = load_table(base, *low, p.inputs, "low");
        const FeatureTable hi = load_table(base, *high, p.inputs, "high");
        r = run_reconstruction_agreement(c, p.rule, lo, hi);
    } else {
        const auto [lo, hi] = reconstruction_tables(c);
        r = run_reconstruction_agreement(c, p.rule, lo, hi);
    }
    r.summary["inputs"] = p.inputs;
    return r;
}

void cmd_study(const Globals& g, const std::string& which) {
    require_out(g);
    json j = load_config(g.config);
    if (!j.is_object()) fail(ErrorKind::Usage, "study config must be a JSON object");
    Report r;
    if (which == "ablation") {
        AblationConfig c = ablation_config_from_json(j);
        if (g.seed) c.seed = *g.seed;
        c.jobs = g.jobs;
        r = run_ablation_study(c);
    } else if (which == "perturb") {
        PerturbationConfig c = perturbation_config_from_json(j);
        if (g.seed) c.seed = *g.seed;
        c.jobs = g.jobs;
        r = run_perturbation_study(c);
    } else if (which == "cross") {
        r = study_cross(g, j);
    } else if (which == "self") {
        r = study_self(g, j);
    } else {
        r = study_agreement(g, j);
    }
    write_report(g.out, r);
    std::cout << "wrote " << r.files.size() + 1 << " report files to " << g.out << "\n";
}

// ---- plot ----

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) fail(ErrorKind::Usage, "CSV has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

Csv read_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    Csv c;
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Data, "'" + path + "' is empty");
    c.header = split_csv_line(line);
    while (std::getline(in, line))
        if (!line.empty()) c.rows.push_back(split_csv_line(line));
    return c;
}

double cell(const std::vector<std::string>& row, std::size_t k) {
    if (k >= row.size() || row[k].empty()) return std::nan("");
    try {
        return std::stod(row[k]);
    } catch (const std::exception&) {
        fail(ErrorKind::Data, "'" + row[k] + "' is not a number");
    }
}

void cmd_plot_box(const Globals& g, const std::string& csv, const std::string& value, const std::string& group,
                  const std::string& title) {
    require_out(g);
    const Csv c = read_csv(csv);
    const std::size_t vk = c.col(value);
    std::vector<BoxGroup> groups;
    for (const auto& r : c.rows) {
        const std::string label = group.empty() ? value : r.at(c.col(group));
        auto it = std::find_if(groups.begin(), groups.end(), [&](const BoxGroup& b) { return b.label == label; });
        if (it == groups.end()) {
            groups.push_back({label, {}});
            it = groups.end() - 1;
        }
        it->values.push_back(cell(r, vk));
    }
    write_file(g.out, svg_boxplot(groups, title, value));
}

void cmd_plot_scatter(const Globals& g, const std::string& csv, const std::string& xcol, const std::string& ycol,
                      const std::vector<double>& hlines, const std::string& title) {
    require_out(g);
    const Csv c = read_csv(csv);
    const std::size_t xk = c.col(xcol), yk = c.col(ycol);
    std::vector<double> x, y;
    for (const auto& r : c.rows) {
        x.push_back(cell(r, xk));
        y.push_back(cell(r, yk));
    }
    write_file(g.out, svg_scatter(x, y, title, xcol, ycol, hlines));
}

void add_globals(CLI::App* sub, Globals& g, bool config = true) {
    if (config) sub->add_option("--config", g.config, "JSON config file");
    sub->add_option("--seed", g.seed, "base seed (u64)");
    sub->add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", g.out, "output path");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tally: phantom generation, feature tallies and similarity studies"};
    app.require_subcommand(1);
    Globals g;

    auto* phantom = app.add_subcommand("phantom", "generate a phantom ensemble")->require_subcommand(1);
    std::size_t count = 16;
    std::vector<std::string> ablate;
    auto* ph_cobalt = phantom->add_subcommand("cobalt", "CoBaLT phantoms");
    add_globals(ph_cobalt, g);
    ph_cobalt->add_option("--count", count, "number of images")->check(CLI::PositiveNumber);
    ph_cobalt->add_option("--ablate", ablate, "ablations: spines, background")->delimiter(',');
    auto* ph_wonost = phantom->add_subcommand("wonost", "WonoST phantoms");
    add_globals(ph_wonost, g);
    ph_wonost->add_option("--count", count, "number of images")->check(CLI::PositiveNumber);

    std::string in, channel = "all";
    double pct = 0.0;
    auto* perturb = app.add_subcommand("perturb", "perturb a WonoST ensemble");
    add_globals(perturb, g, false);
    perturb->add_option("--in", in, "input ensemble")->required();
    perturb->add_option("--channel", channel, "red, green, blue or all");
    perturb->add_option("--pct", pct, "perturbation percentage")->required();

    auto* features = app.add_subcommand("features", "feature extraction")->require_subcommand(1);
    auto* fx = features->add_subcommand("extract", "60 conventional features per image");
    std::string fchannel = "luma";
    int levels = 16;
    std::vector<int> distances;
    add_globals(fx, g, false);
    fx->add_option("--in", in, "input ensemble")->required();
    fx->add_option("--channel", fchannel, "luma, red, green or blue");
    fx->add_option("--levels", levels, "GLCM gray levels");
    fx->add_option("--distances", distances, "GLCM distances")->delimiter(',');

    auto* tol = app.add_subcommand("tolerance", "derive tolerance intervals")->require_subcommand(1);
    std::string arch, subj;
    double q_low = 0.05, q_high = 0.95;
    std::size_t draws = 200;
    auto* t_ks = tol->add_subcommand("ks", "split-half KS null quantiles");
    add_globals(t_ks, g, false);
    t_ks->add_option("--archetypes", arch, "archetype feature table")->required();
    t_ks->add_option("--q-low", q_low);
    t_ks->add_option("--q-high", q_high);
    t_ks->add_option("--draws", draws);
    double tpct = 20.0;
    auto* t_pct = tol->add_subcommand("percent", "median +/- pct");
    add_globals(t_pct, g, false);
    t_pct->add_option("--archetypes", arch, "archetype feature table")->required();
    t_pct->add_option("--pct", tpct);
    auto* t_kde = tol->add_subcommand("kde", "KDE intersection intervals");
    add_globals(t_kde, g, false);
    t_kde->add_option("--archetypes", arch, "archetype feature table")->required();
    t_kde->add_option("--subjects", subj, "subject feature table")->required();

    auto* weights = app.add_subcommand("weights", "feature importance weights")->require_subcommand(1);
    auto* w_forest = weights->add_subcommand("forest", "random-forest Gini importance");
    std::size_t top_k = 40;
    int trees = 64, mtry = 0;
    add_globals(w_forest, g, false);
    w_forest->add_option("--archetypes", arch, "archetype feature table")->required();
    w_forest->add_option("--subjects", subj, "subject feature table")->required();
    w_forest->add_option("--top-k", top_k);
    w_forest->add_option("--trees", trees)->check(CLI::PositiveNumber);
    w_forest->add_option("--max-features", mtry);

    auto* pca = app.add_subcommand("pca2d", "two-dimensional PCA")->require_subcommand(1);
    std::string norm = "as_printed", model;
    int kr = 0, kc = 0, m = 0;
    auto* p_fit = pca->add_subcommand("fit", "fit a model");
    add_globals(p_fit, g, false);
    p_fit->add_option("--in", in, "input ensemble")->required();
    p_fit->add_option("--channel", fchannel, "luma, red, green or blue");
    p_fit->add_option("--normalization", norm, "as_printed or ensemble_only");
    auto* p_rec = pca->add_subcommand("reconstruct", "reconstruct with leading components");
    add_globals(p_rec, g, false);
    p_rec->add_option("--model", model)->required();
    p_rec->add_option("--in", in, "input ensemble")->required();
    p_rec->add_option("--rows", kr, "leading row components (0 = all)");
    p_rec->add_option("--cols", kc, "leading column components (0 = all)");
    auto* p_dose = pca->add_subcommand("dose-sim", "reconstruct with a random dose mask");
    add_globals(p_dose, g, false);
    p_dose->add_option("--model", model)->required();
    p_dose->add_option("--in", in, "input ensemble")->required();
    p_dose->add_option("--m", m, "components kept per side")->required();

    auto* study = app.add_subcommand("study", "run a study workflow")->require_subcommand(1);
    std::vector<std::pair<std::string, CLI::App*>> studies;
    for (const char* name : {"ablation", "perturb", "cross", "self", "agreement"}) {
        auto* s = study->add_subcommand(name);
        add_globals(s, g);
        studies.emplace_back(name, s);
    }

    auto* plot = app.add_subcommand("plot", "emit SVG plots from report CSVs")->require_subcommand(1);
    std::string csv, value, group, xcol, ycol, title;
    std::vector<double> hlines;
    auto* pl_box = plot->add_subcommand("boxplot");
    add_globals(pl_box, g, false);
    pl_box->add_option("--csv", csv)->required();
    pl_box->add_option("--value", value)->required();
    pl_box->add_option("--group", group);
    pl_box->add_option("--title", title);
    auto* pl_sc = plot->add_subcommand("scatter");
    add_globals(pl_sc, g, false);
    pl_sc->add_option("--csv", csv)->required();
    pl_sc->add_option("--x", xcol)->required();
    pl_sc->add_option("--y", ycol)->required();
    pl_sc->add_option("--hline", hlines)->delimiter(',');
    pl_sc->add_option("--title", title);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*ph_cobalt) cmd_phantom_cobalt(g, count, ablate);
        else if (*ph_wonost) cmd_phantom_wonost(g, count);
        else if (*perturb) cmd_perturb(g, in, channel, pct);
        else if (*fx) cmd_features_extract(g, in, fchannel, levels, distances);
        else if (*t_ks) cmd_tolerance_ks(g, arch, q_low, q_high, draws);
        else if (*t_pct) cmd_tolerance_percent(g, arch, tpct);
        else if (*t_kde) cmd_tolerance_kde(g, arch, subj);
        else if (*w_forest) cmd_weights_forest(g, arch, subj, top_k, trees, mtry);
        else if (*p_fit) cmd_pca2d_fit(g, in, fchannel, norm);
        else if (*p_rec) cmd_pca2d_reconstruct(g, model, in, kr, kc);
        else if (*p_dose) cmd_pca2d_dose(g, model, in, m);
        else if (*pl_box) cmd_plot_box(g, csv, value, group, title);
        else if (*pl_sc) cmd_plot_scatter(g, csv, xcol, ycol, hlines, title);
        else
            for (const auto& [name, s] : studies)
                if (*s) cmd_study(g, name);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return e.exit_code();
    } catch (const json::exception& e) {
        std::cerr << "error (usage): " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (data): " << e.what() << "\n";
        return 2;
    }
    return 0;
}
