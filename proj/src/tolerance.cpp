#include "tally/tolerance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tally/baselines.hpp"
#include "tally/error.hpp"
#include "tally/parallel.hpp"
#include "tally/rng.hpp"

namespace tally {

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) fail(ErrorKind::InvalidInput, "KS statistic: empty sample");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == t) ++i;
        while (j < y.size() && y[j] == t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

namespace {

Interval quantile_interval(const std::vector<double>& stats, double q_low, double q_high) {
    if (!(0.0 <= q_low && q_low < q_high && q_high <= 1.0))
        fail(ErrorKind::InvalidInput, "KS tolerance: need 0 <= q_low < q_high <= 1");
    Interval out{quantile(stats, q_low), quantile(stats, q_high), {}};
    if (out.lower == out.upper) out.flags.push_back("degenerate");
    return out;
}

std::vector<double> pick(std::span<const double> v, const std::vector<std::size_t>& idx, std::size_t from,
                         std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = v[idx[from + i]];
    return out;
}

}  // namespace

Interval ks_tolerance(const std::vector<std::vector<double>>& archetypes, double q_low, double q_high,
                      std::size_t n_pairs, std::uint64_t seed) {
    if (archetypes.size() < 2) fail(ErrorKind::InvalidInput, "KS tolerance needs at least 2 archetype samples");
    if (n_pairs == 0) fail(ErrorKind::InvalidInput, "KS tolerance needs n_pairs >= 1");
    Rng rng(seed);
    std::vector<double> stats;
    stats.reserve(n_pairs);
    const std::uint64_t n = archetypes.size();
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const std::uint64_t i = rng.uniform_index(n);
        std::uint64_t j = rng.uniform_index(n - 1);
        if (j >= i) ++j;
        stats.push_back(ks_statistic(archetypes[i], archetypes[j]));
    }
    return quantile_interval(stats, q_low, q_high);
}

Interval split_half_ks_tolerance(std::span<const double> archetype, double q_low, double q_high, std::size_t n_draws,
                                 std::uint64_t seed) {
    if (archetype.size() < 4) fail(ErrorKind::InvalidInput, "split-half KS tolerance needs at least 4 values");
    if (n_draws == 0) fail(ErrorKind::InvalidInput, "split-half KS tolerance needs n_draws >= 1");
    Rng rng(seed);
    const std::size_t half = archetype.size() / 2;
    std::vector<double> stats;
    for (std::size_t d = 0; d < n_draws; ++d) {
        const auto perm = rng.permutation(archetype.size());
        stats.push_back(ks_statistic(pick(archetype, perm, 0, half), pick(archetype, perm, half, half)));
    }
    return quantile_interval(stats, q_low, q_high);
}

double split_half_ks_statistic(std::span<const double> subject, std::span<const double> archetype,
                               std::size_t n_draws, std::uint64_t seed, bool same_ensemble) {
    if (subject.size() < 2 || archetype.size() < 4)
        fail(ErrorKind::InvalidInput, "split-half KS statistic: ensembles too small");
    if (n_draws == 0) fail(ErrorKind::InvalidInput, "split-half KS statistic needs n_draws >= 1");
    Rng rng(seed);
    const std::size_t ha = archetype.size() / 2;
    std::vector<double> stats;
    for (std::size_t d = 0; d < n_draws; ++d) {
        const auto pa = rng.permutation(archetype.size());
        if (same_ensemble) {
            stats.push_back(ks_statistic(pick(archetype, pa, 0, ha), pick(archetype, pa, ha, ha)));
        } else {
            const auto ps = rng.permutation(subject.size());
            stats.push_back(ks_statistic(pick(subject, ps, 0, subject.size() / 2), pick(archetype, pa, 0, ha)));
        }
    }
    return quantile(stats, 0.5);
}

Interval percent_tolerance(double v, double pct, double eps0) {
    if (!(pct > 0.0)) fail(ErrorKind::InvalidInput, "percent tolerance needs pct > 0");
    if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "percent tolerance: non-finite archetype value");
    if (v == 0.0) {
        if (!(eps0 > 0.0)) fail(ErrorKind::InvalidInput, "percent tolerance: eps0 must be positive for v = 0");
        return {-eps0, eps0, {"zero_archetype_value"}};
    }
    const double w = std::abs(v) * pct / 100.0;
    return {v - w, v + w, {}};
}

double silverman_bandwidth(std::span<const double> x) {
    if (x.size() < 2) fail(ErrorKind::InvalidInput, "bandwidth needs at least 2 points");
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> v(x.begin(), x.end());
    const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    return 0.9 * spread * std::pow(n, -0.2);
}

namespace {

std::vector<double> kde(std::span<const double> x, const std::vector<double>& grid, double h) {
    std::vector<double> out(grid.size(), 0.0);
    const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * M_PI));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double s = 0.0;
        for (double v : x) {
            const double z = (grid[g] - v) / h;
            s += std::exp(-0.5 * z * z);
        }
        out[g] = s * norm;
    }
    return out;
}

}  // namespace

KdeTolerance kde_intersection_tolerance(std::span<const double> archetype, std::span<const double> subject) {
    if (archetype.size() < 20 || subject.size() < 20)
        fail(ErrorKind::InvalidInput, "KDE tolerance needs at least 20 points per sample");
    for (auto s : {archetype, subject})
        for (double v : s)
            if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "KDE tolerance: non-finite value");
    std::vector<double> pooled(archetype.begin(), archetype.end());
    pooled.insert(pooled.end(), subject.begin(), subject.end());
    const double h = silverman_bandwidth(pooled);
    if (!(h > 0.0)) fail(ErrorKind::DegenerateComparison, "KDE tolerance: pooled sample has zero spread");
    const auto [mn, mx] = std::minmax_element(pooled.begin(), pooled.end());
    const double lo = *mn - 3.0 * h, hi = *mx + 3.0 * h;
    constexpr std::size_t kGrid = 512;
    std::vector<double> grid(kGrid);
    for (std::size_t i = 0; i < kGrid; ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / (kGrid - 1);
    const auto fa = kde(archetype, grid, h);
    const auto fs = kde(subject, grid, h);

    KdeTolerance out;
    out.bandwidth = h;
    const std::size_t mode = static_cast<std::size_t>(std::max_element(fa.begin(), fa.end()) - fa.begin());
    out.mode = grid[mode];
    std::vector<double> g(kGrid);
    for (std::size_t i = 0; i < kGrid; ++i) g[i] = fa[i] - fs[i];
    // Relative guard so that identical samples do not dominate by round-off.
    const double tiny = 1e-12 * fa[mode];
    auto dominant = [&](std::size_t i) { return g[i] > tiny; };
    if (!dominant(mode))
        fail(ErrorKind::DegenerateComparison,
             "KDE tolerance: archetype density does not exceed subject density at the archetype mode");
    std::size_t a = mode, b = mode;
    while (a > 0 && dominant(a - 1)) --a;
    while (b + 1 < kGrid && dominant(b + 1)) ++b;
    auto cross = [&](std::size_t i, std::size_t j) {
        // g[i] > 0 >= g[j]; linear zero of g between grid[i] and grid[j].
        const double t = g[i] / (g[i] - g[j]);
        return grid[i] + t * (grid[j] - grid[i]);
    };
    if (a == 0) {
        out.lower = grid[0];
        out.flags.push_back("open_lower");
    } else {
        out.lower = cross(a, a - 1);
    }
    if (b + 1 == kGrid) {
        out.upper = grid[kGrid - 1];
        out.flags.push_back("open_upper");
    } else {
        out.upper = cross(b, b + 1);
    }
    for (std::size_t i = 0; i < kGrid; ++i) {
        if ((i < a || i > b) && dominant(i) && fa[i] > 1e-6 * fa[mode]) {
            out.flags.push_back("multimodal");
            break;
        }
    }
    return out;
}

namespace {

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<int>& y;
    std::size_t m_features;
    std::size_t mtry;
    Rng rng;
    std::vector<double> importance;

    static double gini(double n0, double n1) {
        const double n = n0 + n1;
        if (n == 0.0) return 0.0;
        const double p0 = n0 / n, p1 = n1 / n;
        return 1.0 - p0 * p0 - p1 * p1;
    }

    struct Split {
        std::size_t feature = 0;
        double threshold = 0.0;
        double decrease = -1.0;
        bool found = false;
    };

    Split best_for_feature(std::vector<std::size_t>& idx, std::size_t f, double n0, double n1) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
        });
        Split best;
        const double n = n0 + n1;
        const double parent = n * gini(n0, n1);
        double l0 = 0.0, l1 = 0.0;
        for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
            (y[idx[i]] ? l1 : l0) += 1.0;
            const double v = x[idx[i]][f], w = x[idx[i + 1]][f];
            if (v == w) continue;
            const double nl = l0 + l1, nr = n - nl;
            const double dec = parent - nl * gini(l0, l1) - nr * gini(n0 - l0, n1 - l1);
            if (!best.found || dec > best.decrease) {
                best = {f, 0.5 * (v + w), dec, true};
                if (best.threshold == w) best.threshold = v;  // midpoint rounded up onto w
            }
        }
        return best;
    }

    void build(std::vector<std::size_t> root) {
        std::vector<std::vector<std::size_t>> stack;
        stack.push_back(std::move(root));
        std::vector<std::size_t> feats(m_features);
        while (!stack.empty()) {
            std::vector<std::size_t> idx = std::move(stack.back());
            stack.pop_back();
            double n0 = 0.0, n1 = 0.0;
            for (auto i : idx) (y[i] ? n1 : n0) += 1.0;
            if (idx.size() < 2 || n0 == 0.0 || n1 == 0.0) continue;
            std::iota(feats.begin(), feats.end(), std::size_t{0});
            Split best;
            // Draw features without replacement; beyond mtry, continue only
            // while no splittable feature has been seen.
            for (std::size_t t = 0; t < m_features; ++t) {
                if (t >= mtry && best.found) break;
                const std::size_t j = t + static_cast<std::size_t>(rng.uniform_index(m_features - t));
                std::swap(feats[t], feats[j]);
                const Split s = best_for_feature(idx, feats[t], n0, n1);
                if (s.found && (!best.found || s.decrease > best.decrease)) best = s;
            }
            if (!best.found) continue;
            importance[best.feature] += best.decrease;
            std::vector<std::size_t> left, right;
            for (auto i : idx) (x[i][best.feature] <= best.threshold ? left : right).push_back(i);
            stack.push_back(std::move(right));
            stack.push_back(std::move(left));
        }
    }
};

}  // namespace

std::vector<double> random_forest_importance(const std::vector<std::vector<double>>& x,
                                             const std::vector<int>& labels, const ForestOptions& opt) {
    const std::size_t n = x.size();
    if (n != labels.size()) fail(ErrorKind::InvalidInput, "forest: feature rows and labels differ in count");
    if (n < 20) fail(ErrorKind::InvalidInput, "forest: need at least 20 samples");
    const std::size_t m = x[0].size();
    if (m == 0) fail(ErrorKind::InvalidInput, "forest: no features");
    std::size_t c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i].size() != m) fail(ErrorKind::InvalidInput, "forest: ragged feature table");
        for (double v : x[i])
            if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "forest: non-finite feature value");
        if (labels[i] == 0)
            ++c0;
        else if (labels[i] == 1)
            ++c1;
        else
            fail(ErrorKind::InvalidInput, "forest: labels must be 0 or 1");
    }
    if (c0 == 0 || c1 == 0) fail(ErrorKind::InvalidInput, "forest: labels contain a single class");
    if (opt.n_trees < 1) fail(ErrorKind::InvalidInput, "forest: n_trees must be >= 1");
    const std::size_t mtry = opt.max_features > 0
                                 ? std::min<std::size_t>(static_cast<std::size_t>(opt.max_features), m)
                                 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));

    std::vector<std::vector<double>> per_tree(static_cast<std::size_t>(opt.n_trees));
    parallel_for(per_tree.size(), opt.jobs, [&](std::size_t t) {
        TreeBuilder tb{x, labels, m, mtry, Rng(mix_seed(opt.seed, t)), std::vector<double>(m, 0.0)};
        std::vector<std::size_t> boot(n);
        for (auto& b : boot) b = static_cast<std::size_t>(tb.rng.uniform_index(n));
        tb.build(std::move(boot));
        for (auto& v : tb.importance) v /= static_cast<double>(n);
        per_tree[t] = std::move(tb.importance);
    });
    std::vector<double> imp(m, 0.0);
    for (const auto& t : per_tree)
        for (std::size_t j = 0; j < m; ++j) imp[j] += t[j];
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0)
        for (auto& v : imp) v /= total;
    return imp;
}

ImportanceWeights importance_weights(std::span<const double> importances, std::size_t top_k,
                                     const std::vector<std::string>& names) {
    const std::size_t m = importances.size();
    if (top_k < 1 || top_k > m) fail(ErrorKind::InvalidInput, "importance weights: top_k must lie in [1, M]");
    if (!names.empty() && names.size() != m) fail(ErrorKind::InvalidInput, "importance weights: names length mismatch");
    bool any = false;
    for (double v : importances) {
        if (!std::isfinite(v) || v < 0.0) fail(ErrorKind::InvalidInput, "importances must be finite and nonnegative");
        any = any || v > 0.0;
    }
    if (!any) fail(ErrorKind::InvalidInput, "importances are all zero");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
    ImportanceWeights out;
    out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
    const double floor = importances[out.indices.back()];
    if (!(floor > 0.0))
        fail(ErrorKind::InvalidWeights, "least important retained feature has zero importance; choose a smaller top_k");
    for (auto i : out.indices) {
        out.weights.push_back(i == out.indices.back() ? 1.0 : importances[i] / floor);
        if (!names.empty()) out.names.push_back(names[i]);
    }
    return out;
}

}  // namespace tally
