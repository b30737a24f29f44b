#include "tally/wonost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/beta.hpp>

#include "tally/image_ops.hpp"
#include "tally/rng.hpp"

namespace tally {

void validate(const WonostConfig& cfg) {
    if (cfg.rows < 1 || cfg.cols < 1) fail(ErrorKind::InvalidInput, "WonoST dimensions must be positive");
    if (cfg.seed_count < 1) fail(ErrorKind::InvalidInput, "seed_count must be >= 1");
    if (!(cfg.extra_seed_factor > 1.0)) fail(ErrorKind::InvalidInput, "extra_seed_factor must exceed 1");
    if (!(cfg.green_threshold > 0.0 && cfg.green_threshold < 1.0))
        fail(ErrorKind::InvalidInput, "green_threshold must lie in (0, 1)");
    if (!(cfg.min_seed_separation >= 0.0) || !(cfg.min_extra_separation >= 0.0))
        fail(ErrorKind::InvalidInput, "seed separations must be nonnegative");
    if (!(cfg.beta_alpha > 0.0 && cfg.beta_beta > 0.0))
        fail(ErrorKind::InvalidInput, "Beta parameters must be positive");
}

Field worley_f1(int rows, int cols, const SeedSet& seeds) {
    if (seeds.empty()) fail(ErrorKind::InvalidInput, "worley_f1: empty seed set");
    // Bucket side chosen so each bucket holds about two seeds.
    const double area = static_cast<double>(rows) * cols;
    const double side = std::max(1.0, std::sqrt(2.0 * area / static_cast<double>(seeds.size())));
    const int br = std::max(1, static_cast<int>(std::ceil(rows / side)));
    const int bc = std::max(1, static_cast<int>(std::ceil(cols / side)));
    auto bucket_of = [&](double v, int nb) {
        return std::clamp(static_cast<int>(std::floor((v + 0.5) / side)), 0, nb - 1);
    };
    std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(br) * bc);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        buckets[static_cast<std::size_t>(bucket_of(seeds[i].row, br)) * bc + bucket_of(seeds[i].col, bc)]
            .push_back(i);

    Field f(rows, cols);
    const int max_ring = std::max(br, bc);
    for (int r = 0; r < rows; ++r) {
        const int pr = bucket_of(r, br);
        for (int c = 0; c < cols; ++c) {
            const int pc = bucket_of(c, bc);
            double best2 = std::numeric_limits<double>::infinity();
            for (int k = 0; k <= max_ring; ++k) {
                for (int i = pr - k; i <= pr + k; ++i) {
                    if (i < 0 || i >= br) continue;
                    const bool edge_row = (i == pr - k || i == pr + k);
                    for (int j = pc - k; j <= pc + k; ++j) {
                        if (j < 0 || j >= bc) continue;
                        if (!edge_row && j != pc - k && j != pc + k) continue;
                        for (auto s : buckets[static_cast<std::size_t>(i) * bc + j]) {
                            const double dr = r - seeds[s].row, dc = c - seeds[s].col;
                            best2 = std::min(best2, dr * dr + dc * dc);
                        }
                    }
                }
                // Seeds in ring k+1 are at least k * side away.
                const double reach = k * side;
                if (best2 <= reach * reach) break;
            }
            f(r, c) = std::sqrt(best2);
        }
    }
    return f;
}

SeedSet place_seeds(int rows, int cols, int count, double min_sep, std::uint64_t seed, const SeedSet& existing) {
    Rng rng(seed);
    SeedSet all = existing;
    const double sep2 = min_sep * min_sep;
    const std::size_t max_tries = 10000 + 1000 * static_cast<std::size_t>(count);
    std::size_t tries = 0;
    SeedSet out;
    while (out.size() < static_cast<std::size_t>(count)) {
        if (++tries > max_tries)
            fail(ErrorKind::Numerical, "seed placement: cannot fit " + std::to_string(count) +
                                           " seeds at separation " + std::to_string(min_sep));
        const SeedPoint p{rng.uniform(-0.5, rows - 0.5), rng.uniform(-0.5, cols - 0.5)};
        bool ok = true;
        for (const auto& q : all) {
            const double dr = p.row - q.row, dc = p.col - q.col;
            const double d2 = dr * dr + dc * dc;
            if (d2 < sep2 || d2 == 0.0) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        all.push_back(p);
        out.push_back(p);
    }
    return out;
}

namespace {

std::uint8_t quantize_unit(double q) {
    return static_cast<std::uint8_t>(std::clamp(std::round(255.0 * q), 0.0, 255.0));
}

template <class T>
GrayImage rank_match(const Grid<T>& img, double a, double b) {
    if (img.empty()) fail(ErrorKind::InvalidInput, "histogram match: empty image");
    const boost::math::beta_distribution<double> dist(a, b);
    const std::size_t n = img.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return img[x] < img[y]; });
    GrayImage out(img.rows(), img.cols());
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && img[order[j]] == img[order[i]]) ++j;
        const double u = (static_cast<double>(i) + 0.5 * static_cast<double>(j - i)) / static_cast<double>(n);
        const std::uint8_t v = quantize_unit(boost::math::quantile(dist, u));
        for (std::size_t k = i; k < j; ++k) out[order[k]] = v;
        i = j;
    }
    return out;
}

GrayImage scale_by_max(const Field& f) {
    double mx = 0.0;
    for (double v : f.data()) mx = std::max(mx, v);
    GrayImage out(f.rows(), f.cols(), 0);
    if (mx <= 0.0) return out;
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = quantize_unit(f[i] / mx);
    return out;
}

}  // namespace

GrayImage match_to_beta(const GrayImage& img, double a, double b) { return rank_match(img, a, b); }
GrayImage match_to_beta(const Field& f, double a, double b) { return rank_match(f, a, b); }

WonostRealization generate_wonost(const WonostConfig& cfg) {
    validate(cfg);
    WonostRealization out;
    out.base_seeds = place_seeds(cfg.rows, cfg.cols, cfg.seed_count, cfg.min_seed_separation, mix_seed(cfg.seed, 0));
    const int total = static_cast<int>(std::llround(cfg.seed_count * cfg.extra_seed_factor));
    const SeedSet extra = place_seeds(cfg.rows, cfg.cols, total - cfg.seed_count, cfg.min_extra_separation,
                                      mix_seed(cfg.seed, 1), out.base_seeds);
    out.all_seeds = out.base_seeds;
    out.all_seeds.insert(out.all_seeds.end(), extra.begin(), extra.end());

    out.red_f1 = worley_f1(cfg.rows, cfg.cols, out.base_seeds);
    out.blue_f1 = worley_f1(cfg.rows, cfg.cols, out.all_seeds);

    out.rgb = RgbImage(cfg.rows, cfg.cols);
    out.rgb.red = match_to_beta(out.red_f1, cfg.beta_alpha, cfg.beta_beta);
    for (std::size_t i = 0; i < out.rgb.red.size(); ++i) {
        const int r = out.rgb.red[i];
        out.rgb.green[i] = (r / 255.0 < cfg.green_threshold) ? static_cast<std::uint8_t>(255 - r) : 0;
    }
    out.rgb.blue = scale_by_max(out.blue_f1);
    return out;
}

double beta_median(double a, double b) {
    return boost::math::quantile(boost::math::beta_distribution<double>(a, b), 0.5);
}

double solve_alpha_for_median(double pct, double a0, double b, double alpha_max) {
    if (!std::isfinite(pct)) fail(ErrorKind::InvalidInput, "perturbation percentage must be finite");
    if (pct == 0.0) return a0;
    const double target = (1.0 + pct / 100.0) * beta_median(a0, b);
    if (!(target > 0.0 && target < 1.0) || beta_median(alpha_max, b) < target)
        fail(ErrorKind::Numerical, "no alpha in (0, " + std::to_string(alpha_max) + "] reaches the requested median");
    double lo = 1e-6, hi = alpha_max;
    if (beta_median(lo, b) > target)
        fail(ErrorKind::Numerical, "requested median is below the reachable range");
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        (beta_median(mid, b) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Perturbed perturb_red(const RgbImage& img, double pct, double a0, double b) {
    Perturbed out{img, {}, 0, 0};
    if (pct == 0.0) return out;
    const double alpha = solve_alpha_for_median(pct, a0, b);
    out.rgb.red = match_to_beta(img.red, alpha, b);
    return out;
}

Perturbed perturb_green(const RgbImage& img, double pct, std::uint64_t seed) {
    if (!(pct >= 0.0)) fail(ErrorKind::InvalidInput, "perturbation percentage must be nonnegative");
    Mask m(img.rows(), img.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = img.green[i] > 0;
    const Components cc = connected_components(m);
    if (cc.count == 0) fail(ErrorKind::InvalidInput, "perturb_green: green channel has no components");
    Perturbed out{img, {}, static_cast<std::size_t>(cc.count), 0};
    std::size_t k = static_cast<std::size_t>(std::llround(pct / 100.0 * cc.count));
    if (pct >= 100.0) {
        k = static_cast<std::size_t>(cc.count);
        out.flags.push_back("green:all_removed");
    }
    Rng rng(seed);
    const auto perm = rng.permutation(static_cast<std::size_t>(cc.count));
    std::vector<std::uint8_t> drop(static_cast<std::size_t>(cc.count) + 1, 0);
    for (std::size_t i = 0; i < k; ++i) drop[perm[i] + 1] = 1;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (drop[static_cast<std::size_t>(cc.labels[i])]) out.rgb.green[i] = 0;
    out.removed = k;
    return out;
}

std::vector<SeedPoint> detect_cell_centers(const GrayImage& blue) {
    const Field s = gaussian_blur(to_field(blue), 1.0);
    const auto t = otsu_threshold(s);
    if (!t) return {};
    std::vector<SeedPoint> centers;
    const int R = s.rows(), C = s.cols();
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            const double v = s(r, c);
            if (v > *t) continue;
            bool is_min = true;
            for (int dr = -1; dr <= 1 && is_min; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if ((dr == 0 && dc == 0) || !s.inside(r + dr, c + dc)) continue;
                    const double w = s(r + dr, c + dc);
                    const bool earlier = dr < 0 || (dr == 0 && dc < 0);
                    if (earlier ? w <= v : w < v) {
                        is_min = false;
                        break;
                    }
                }
            }
            if (is_min) centers.push_back({static_cast<double>(r), static_cast<double>(c)});
        }
    }
    return centers;
}

std::size_t count_cells(const GrayImage& blue) { return detect_cell_centers(blue).size(); }

std::size_t count_green_components(const GrayImage& green) {
    Mask m(green.rows(), green.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = green[i] > 0;
    return static_cast<std::size_t>(connected_components(m).count);
}

namespace {

// Scale c with sum_i min(1, c * a_i) = target, all a_i > 0.
double removal_scale(const std::vector<double>& areas, double target) {
    double lo = 0.0, hi = 1.0 / *std::min_element(areas.begin(), areas.end());
    auto total = [&](double c) {
        double s = 0.0;
        for (double a : areas) s += std::min(1.0, c * a);
        return s;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < target ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace

Perturbed perturb_blue(const RgbImage& img, double pct, std::uint64_t seed) {
    if (!(pct >= 0.0)) fail(ErrorKind::InvalidInput, "perturbation percentage must be nonnegative");
    const auto centers = detect_cell_centers(img.blue);
    if (centers.empty()) fail(ErrorKind::InvalidInput, "perturb_blue: no small-cell centers found");
    Perturbed out{img, {}, centers.size(), 0};
    const std::size_t n = centers.size();

    // Large cells: Voronoi regions of the green component centroids.
    Mask gm(img.rows(), img.cols());
    for (std::size_t i = 0; i < gm.size(); ++i) gm[i] = img.green[i] > 0;
    const Components cc = connected_components(gm);
    std::vector<double> areas(n, 1.0);
    if (cc.count == 0) {
        out.flags.push_back("blue:no_large_cells");
    } else {
        std::vector<double> sr(cc.count, 0.0), sc(cc.count, 0.0), cnt(cc.count, 0.0);
        for (int r = 0; r < img.rows(); ++r)
            for (int c = 0; c < img.cols(); ++c)
                if (int l = cc.labels(r, c)) {
                    sr[l - 1] += r;
                    sc[l - 1] += c;
                    cnt[l - 1] += 1;
                }
        std::vector<SeedPoint> cent(cc.count);
        for (int k = 0; k < cc.count; ++k) cent[k] = {sr[k] / cnt[k], sc[k] / cnt[k]};
        auto nearest = [&](double r, double c) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int k = 0; k < cc.count; ++k) {
                const double dr = r - cent[k].row, dc = c - cent[k].col;
                const double d = dr * dr + dc * dc;
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            return best;
        };
        std::vector<double> region(cc.count, 0.0);
        for (int r = 0; r < img.rows(); ++r)
            for (int c = 0; c < img.cols(); ++c) region[nearest(r, c)] += 1.0;
        for (std::size_t i = 0; i < n; ++i) areas[i] = region[nearest(centers[i].row, centers[i].col)];
    }

    const double target = std::min(1.0, pct / 100.0) * static_cast<double>(n);
    std::vector<double> p(n, 0.0);
    if (pct >= 100.0) {
        std::fill(p.begin(), p.end(), 1.0);
        out.flags.push_back("blue:all_removed");
    } else if (target > 0.0) {
        const double c = removal_scale(areas, target);
        for (std::size_t i = 0; i < n; ++i) p[i] = std::min(1.0, c * areas[i]);
    }
    Rng rng(seed);
    SeedSet survivors;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        if (u < p[i])
            ++out.removed;
        else
            survivors.push_back(centers[i]);
    }
    if (out.removed == 0) return out;
    if (survivors.empty()) {
        std::fill(out.rgb.blue.data().begin(), out.rgb.blue.data().end(), std::uint8_t{0});
        return out;
    }
    out.rgb.blue = scale_by_max(worley_f1(img.rows(), img.cols(), survivors));
    return out;
}

Perturbed perturb_all(const RgbImage& img, double pct, std::uint64_t seed) {
    Perturbed b = perturb_blue(img, pct, mix_seed(seed, 0));
    Perturbed g = perturb_green(b.rgb, pct, mix_seed(seed, 1));
    Perturbed r = perturb_red(g.rgb, pct);
    r.before = b.before;
    r.removed = b.removed;
    r.flags = b.flags;
    r.flags.insert(r.flags.end(), g.flags.begin(), g.flags.end());
    return r;
}

int median_intensity(const GrayImage& img) {
    if (img.empty()) fail(ErrorKind::InvalidInput, "median of empty image");
    const Histogram h = histogram(img);
    const std::size_t rank = (img.size() - 1) / 2;
    std::size_t acc = 0;
    for (int v = 0; v < 256; ++v) {
        acc += h[v];
        if (acc > rank) return v;
    }
    return 255;
}

}  // namespace tally
