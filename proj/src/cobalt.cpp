#include "tally/cobalt.hpp"

#include <algorithm>
#include <cmath>

#include "tally/image_ops.hpp"
#include "tally/rng.hpp"

namespace tally {

void validate(const CobaltConfig& cfg) {
    if (cfg.rows < 64 || cfg.cols < 64) fail(ErrorKind::InvalidInput, "CoBaLT dimensions must be at least 64x64");
    if (!(cfg.lump_count_mean >= 0.0)) fail(ErrorKind::InvalidInput, "lump_count_mean must be nonnegative");
    if (!(cfg.lump_width > 0.0)) fail(ErrorKind::InvalidInput, "lump_width must be positive");
    if (!(0.0 < cfg.background_quantile && cfg.background_quantile < cfg.cell_quantile &&
          cfg.cell_quantile < 1.0))
        fail(ErrorKind::InvalidInput, "CoBaLT thresholds must satisfy 0 < background < cell < 1");
    for (const auto& s : {cfg.background_dog, cfg.cell_dog})
        if (!(0.0 < s[0] && s[0] < s[1])) fail(ErrorKind::InvalidInput, "DoG sigmas must satisfy 0 < narrow < wide");
    if (!(cfg.hessian_sigma > 0.0)) fail(ErrorKind::InvalidInput, "hessian_sigma must be positive");
    if (cfg.max_attempts < 1) fail(ErrorKind::InvalidInput, "max_attempts must be >= 1");
}

Field lump_field(int rows, int cols, const std::vector<LumpCenter>& centers, double width) {
    Field f(rows, cols, 0.0);
    const double reach = 4.0 * width;
    const double inv2w2 = 1.0 / (2.0 * width * width);
    for (const auto& c : centers) {
        const int r0 = std::max(0, static_cast<int>(std::ceil(c.row - reach)));
        const int r1 = std::min(rows - 1, static_cast<int>(std::floor(c.row + reach)));
        const int c0 = std::max(0, static_cast<int>(std::ceil(c.col - reach)));
        const int c1 = std::min(cols - 1, static_cast<int>(std::floor(c.col + reach)));
        for (int r = r0; r <= r1; ++r) {
            const double dr = r - c.row;
            for (int cc = c0; cc <= c1; ++cc) {
                const double dc = cc - c.col;
                f(r, cc) += std::exp(-(dr * dr + dc * dc) * inv2w2);
            }
        }
    }
    return f;
}

Field lumpy_background(const CobaltConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const auto n = rng.poisson(cfg.lump_count_mean);
    std::vector<LumpCenter> centers(n);
    for (auto& c : centers) {
        c.row = rng.uniform(-0.5, cfg.rows - 0.5);
        c.col = rng.uniform(-0.5, cfg.cols - 0.5);
    }
    return lump_field(cfg.rows, cfg.cols, centers, cfg.lump_width);
}

namespace {

double field_quantile(const Field& f, double q) {
    std::vector<double> v = f.data();
    const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

Field standardized_noise_texture(int rows, int cols, Rng& rng, double narrow, double wide) {
    Field noise(rows, cols);
    for (auto& v : noise.data()) v = rng.normal();
    Field t = difference_of_gaussians(noise, narrow, wide);
    double mean = 0.0, sq = 0.0;
    for (double v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    for (double v : t.data()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(t.size()));
    for (auto& v : t.data()) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return t;
}

Mask mask_and_not(const Mask& a, const Mask& b) {
    Mask out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && !b[i];
    return out;
}

Mask band(const Mask& m) { return mask_and_not(dilate(m), erode(m)); }

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

Field hessian_ridge_strength(const Field& f, double sigma) {
    const Field s = gaussian_blur(f, sigma);
    const int R = s.rows(), C = s.cols();
    auto at = [&](int r, int c) {
        r = std::clamp(r, 0, R - 1);
        c = std::clamp(c, 0, C - 1);
        return s(r, c);
    };
    Field out(R, C, 0.0);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            const double hrr = at(r + 1, c) - 2.0 * at(r, c) + at(r - 1, c);
            const double hcc = at(r, c + 1) - 2.0 * at(r, c) + at(r, c - 1);
            const double hrc = 0.25 * (at(r + 1, c + 1) - at(r + 1, c - 1) - at(r - 1, c + 1) + at(r - 1, c - 1));
            const double mean = 0.5 * (hrr + hcc);
            const double dev = std::sqrt(0.25 * (hrr - hcc) * (hrr - hcc) + hrc * hrc);
            const double lambda_min = mean - dev;
            out(r, c) = std::max(0.0, -lambda_min);
        }
    }
    return out;
}

CobaltRealization generate_cobalt(const CobaltConfig& cfg) {
    validate(cfg);
    const int R = cfg.rows, C = cfg.cols;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const std::uint64_t sub = attempt == 0 ? cfg.seed : mix_seed(cfg.seed, 1000 + attempt);
        const Field lumps = lumpy_background(cfg, mix_seed(sub, 0));
        const double t_low = field_quantile(lumps, cfg.background_quantile);
        const double t_high = field_quantile(lumps, cfg.cell_quantile);

        Mask bg_raw(R, C), fg_raw(R, C), cell_raw(R, C), tissue(R, C);
        for (std::size_t i = 0; i < lumps.size(); ++i) {
            const double v = lumps[i];
            bg_raw[i] = v <= t_low;
            cell_raw[i] = v > t_high;
            fg_raw[i] = v > t_low && v <= t_high;
            tissue[i] = v > t_low;
        }
        Mask edge = band(tissue);
        const Mask cell_band = band(cell_raw);
        for (std::size_t i = 0; i < edge.size(); ++i) edge[i] = edge[i] || cell_band[i];

        CobaltRealization out;
        out.seed = cfg.seed;
        out.attempts = attempt + 1;
        out.background = mask_and_not(bg_raw, edge);
        out.foreground = mask_and_not(fg_raw, edge);
        out.cell = mask_and_not(cell_raw, edge);
        out.edge = edge;
        if (count_set(out.cell) == 0) continue;

        Rng rng(mix_seed(sub, 1));
        const Field bg_tex = standardized_noise_texture(R, C, rng, cfg.background_dog[0], cfg.background_dog[1]);
        const Field cell_tex = standardized_noise_texture(R, C, rng, cfg.cell_dog[0], cfg.cell_dog[1]);

        Field tissue_edm = distance_map(tissue);
        double edm_max = 0.0;
        for (double v : tissue_edm.data()) edm_max = std::max(edm_max, v);
        if (edm_max > 0.0)
            for (auto& v : tissue_edm.data()) v /= edm_max;

        const Field ridge = hessian_ridge_strength(distance_map(cell_raw), cfg.hessian_sigma);
        out.spines = Mask(R, C, 0);

        out.rgb = RgbImage(R, C);
        for (std::size_t i = 0; i < lumps.size(); ++i) {
            double red = 0.0, green = 0.0, blue = 0.0;
            if (out.background[i]) {
                red = 50.0 + 18.0 * bg_tex[i];
                green = 35.0 + 14.0 * bg_tex[i];
            } else if (out.foreground[i]) {
                red = 150.0 + 80.0 * tissue_edm[i] + 10.0 * cell_tex[i];
                green = 80.0 + 70.0 * tissue_edm[i] + 8.0 * cell_tex[i];
            } else if (out.cell[i]) {
                red = 230.0 + 8.0 * cell_tex[i];
                green = 215.0 + 8.0 * cell_tex[i];
                if (ridge[i] > cfg.ridge_threshold) {
                    out.spines[i] = 1;
                    blue = 80.0 + 175.0 * std::min(1.0, ridge[i] / 0.8);
                }
            } else {
                red = 235.0;
                green = 90.0;
            }
            out.rgb.red[i] = to_u8(red);
            out.rgb.green[i] = to_u8(green);
            out.rgb.blue[i] = to_u8(blue);
        }
        return out;
    }
    fail(ErrorKind::Numerical, "CoBaLT: cell mask empty after " + std::to_string(cfg.max_attempts) +
                                   " attempts (seed " + std::to_string(cfg.seed) + ")");
}

CobaltRealization ablate_spines(CobaltRealization r) {
    std::fill(r.rgb.blue.data().begin(), r.rgb.blue.data().end(), std::uint8_t{0});
    r.ablations.push_back("spines");
    return r;
}

CobaltRealization shuffle_background(CobaltRealization r, std::uint64_t seed) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r.background.size(); ++i)
        if (r.background[i]) idx.push_back(i);
    if (idx.empty()) {
        r.flags.push_back("shuffle_background:empty_background");
        return r;
    }
    Rng rng(seed);
    const auto perm = rng.permutation(idx.size());
    const GrayImage red = r.rgb.red, green = r.rgb.green;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        r.rgb.red[idx[k]] = red[idx[perm[k]]];
        r.rgb.green[idx[k]] = green[idx[perm[k]]];
    }
    r.ablations.push_back("background");
    return r;
}

}  // namespace tally
