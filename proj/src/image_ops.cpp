#include "tally/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tally {

Field to_field(const GrayImage& img) {
    Field f(img.rows(), img.cols());
    for (std::size_t i = 0; i < img.size(); ++i) f[i] = img[i];
    return f;
}

GrayImage to_gray(const Field& f) {
    GrayImage g(f.rows(), f.cols());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double v = std::clamp(std::round(f[i]), 0.0, 255.0);
        g[i] = static_cast<std::uint8_t>(v);
    }
    return g;
}

GrayImage normalize_to_gray(const Field& f) {
    GrayImage g(f.rows(), f.cols());
    if (f.empty()) return g;
    const auto [lo, hi] = std::minmax_element(f.data().begin(), f.data().end());
    const double span = *hi - *lo;
    if (span <= 0.0) return g;
    for (std::size_t i = 0; i < f.size(); ++i) {
        g[i] = static_cast<std::uint8_t>(std::lround(255.0 * (f[i] - *lo) / span));
    }
    return g;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[i + radius] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

int mirror(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

Field gaussian_blur(const Field& f, double sigma) {
    if (sigma <= 0.0) return f;
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int R = f.rows(), C = f.cols();
    Field tmp(R, C), out(R, C);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j) acc += k[j + radius] * f(r, mirror(c + j, C));
            tmp(r, c) = acc;
        }
    }
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j) acc += k[j + radius] * tmp(mirror(r + j, R), c);
            out(r, c) = acc;
        }
    }
    return out;
}

Field difference_of_gaussians(const Field& f, double s_narrow, double s_wide) {
    Field a = gaussian_blur(f, s_narrow);
    const Field b = gaussian_blur(f, s_wide);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, 1-D squared EDT.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == inf) continue;
        if (f[v[k]] == inf) {
            v[k] = q;
            continue;
        }
        double s;
        for (;;) {
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = double(q) - v[k];
        d[q] = (f[v[k]] == inf) ? inf : dq * dq + f[v[k]];
    }
}

// Squared distance to nearest seed pixel (seed = true) over a padded frame.
Field squared_edt(const Grid<std::uint8_t>& seeds) {
    const int R = seeds.rows(), C = seeds.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();
    Field g(R, C);
    const int n = std::max(R, C);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int c = 0; c < C; ++c) {
        f.resize(R);
        d.resize(R);
        for (int r = 0; r < R; ++r) f[r] = seeds(r, c) ? 0.0 : inf;
        edt_1d(f, d, v, z);
        for (int r = 0; r < R; ++r) g(r, c) = d[r];
    }
    for (int r = 0; r < R; ++r) {
        f.resize(C);
        d.resize(C);
        for (int c = 0; c < C; ++c) f[c] = g(r, c);
        edt_1d(f, d, v, z);
        for (int c = 0; c < C; ++c) g(r, c) = d[c];
    }
    return g;
}

}  // namespace

Field distance_map(const Mask& m) {
    const int R = m.rows(), C = m.cols();
    // Pad so the exterior of the frame acts as the unset region.
    Grid<std::uint8_t> seeds(R + 2, C + 2, 1);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) seeds(r + 1, c + 1) = m(r, c) ? 0 : 1;
    const Field sq = squared_edt(seeds);
    Field out(R, C);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) out(r, c) = m(r, c) ? std::sqrt(sq(r + 1, c + 1)) : 0.0;
    return out;
}

Field distance_to_set(const Mask& m) {
    if (count_set(m) == 0) fail(ErrorKind::InvalidInput, "distance_to_set: empty mask");
    Field sq = squared_edt(m);
    for (auto& v : sq.data()) v = std::sqrt(v);
    return sq;
}

namespace {

template <bool Dilate>
Mask morph3x3(const Mask& m) {
    const int R = m.rows(), C = m.cols();
    Mask out(R, C);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            bool acc = !Dilate;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const bool v = m.inside(r + dr, c + dc) && m(r + dr, c + dc);
                    if constexpr (Dilate) acc = acc || v;
                    else acc = acc && v;
                }
            }
            out(r, c) = acc ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

Mask dilate(const Mask& m) { return morph3x3<true>(m); }
Mask erode(const Mask& m) { return morph3x3<false>(m); }

Components connected_components(const Mask& m) {
    const int R = m.rows(), C = m.cols();
    Components out{LabelImage(R, C, 0), 0};
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            if (!m(r, c) || out.labels(r, c)) continue;
            const int label = ++out.count;
            out.labels(r, c) = label;
            stack.emplace_back(r, c);
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int qr = pr + dr, qc = pc + dc;
                        if (m.inside(qr, qc) && m(qr, qc) && !out.labels(qr, qc)) {
                            out.labels(qr, qc) = label;
                            stack.emplace_back(qr, qc);
                        }
                    }
                }
            }
        }
    }
    return out;
}

Histogram histogram(const GrayImage& img) {
    Histogram h{};
    for (auto v : img.data()) ++h[v];
    return h;
}

Histogram histogram(const GrayImage& img, const Mask& roi) {
    Histogram h{};
    for (std::size_t i = 0; i < img.size(); ++i)
        if (roi[i]) ++h[img[i]];
    return h;
}

namespace {

struct Moments {
    std::array<double, 257> w{};   // cumulative counts
    std::array<double, 257> mu{};  // cumulative intensity sums
    double at_w(int lo, int hi) const { return w[hi + 1] - w[lo]; }
    double at_mu(int lo, int hi) const { return mu[hi + 1] - mu[lo]; }
};

Moments cumulative(const Histogram& h) {
    Moments m;
    for (int i = 0; i < 256; ++i) {
        m.w[i + 1] = m.w[i] + static_cast<double>(h[i]);
        m.mu[i + 1] = m.mu[i] + static_cast<double>(h[i]) * i;
    }
    return m;
}

std::pair<int, int> occupied_range(const Histogram& h) {
    int lo = 0, hi = 255;
    while (lo < 256 && h[lo] == 0) ++lo;
    while (hi >= 0 && h[hi] == 0) --hi;
    return {lo, hi};
}

// Sum over classes of w_k * mu_k^2; maximizing it maximizes between-class
// variance because the total mean is fixed.
double class_term(const Moments& m, int lo, int hi) {
    const double w = m.at_w(lo, hi);
    if (w <= 0.0) return 0.0;
    const double s = m.at_mu(lo, hi);
    return s * s / w;
}

}  // namespace

std::optional<int> otsu_threshold(const Histogram& h) {
    const auto [lo, hi] = occupied_range(h);
    if (lo >= hi) return std::nullopt;
    const Moments m = cumulative(h);
    int best_t = lo;
    double best = -1.0;
    for (int t = lo; t < hi; ++t) {
        const double v = class_term(m, 0, t) + class_term(m, t + 1, 255);
        if (v > best * (1.0 + 1e-12) + 1e-300) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

std::optional<double> otsu_threshold(const Field& f, int bins) {
    if (f.empty()) return std::nullopt;
    const auto [pmin, pmax] = std::minmax_element(f.data().begin(), f.data().end());
    const double lo = *pmin, hi = *pmax;
    if (!(hi > lo)) return std::nullopt;
    std::vector<double> w(bins, 0.0), s(bins, 0.0);
    const double width = (hi - lo) / bins;
    for (double v : f.data()) {
        int b = static_cast<int>((v - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        w[b] += 1.0;
        s[b] += v;
    }
    double total_w = 0.0, total_s = 0.0;
    for (int b = 0; b < bins; ++b) {
        total_w += w[b];
        total_s += s[b];
    }
    double cw = 0.0, cs = 0.0, best = -1.0;
    int best_b = 0;
    for (int b = 0; b < bins - 1; ++b) {
        cw += w[b];
        cs += s[b];
        const double w2 = total_w - cw;
        if (cw <= 0.0 || w2 <= 0.0) continue;
        const double v = cs * cs / cw + (total_s - cs) * (total_s - cs) / w2;
        if (v > best * (1.0 + 1e-12)) {
            best = v;
            best_b = b;
        }
    }
    if (best < 0.0) return std::nullopt;
    return lo + width * (best_b + 1);
}

std::optional<OtsuPair> otsu_two_thresholds(const Histogram& h) {
    const auto [lo, hi] = occupied_range(h);
    if (lo >= hi) return std::nullopt;
    const Moments m = cumulative(h);
    OtsuPair best_pair{lo, lo + 1};
    double best = -1.0;
    for (int t1 = lo; t1 < hi; ++t1) {
        const double c0 = class_term(m, 0, t1);
        for (int t2 = t1 + 1; t2 <= hi; ++t2) {
            const double v = c0 + class_term(m, t1 + 1, t2) + class_term(m, t2 + 1, 255);
            if (v > best * (1.0 + 1e-12) + 1e-300) {
                best = v;
                best_pair = {t1, t2};
            }
        }
    }
    return best_pair;
}

}  // namespace tally
