#include "tally/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tally/error.hpp"
#include "tally/rng.hpp"

namespace tally {

namespace {

// Cholesky that also rejects pivots negligible against the diagonal scale.
bool factorizes(const Eigen::MatrixXd& a, Eigen::LLT<Eigen::MatrixXd>& llt) {
    llt.compute(a);
    if (llt.info() != Eigen::Success) return false;
    const double scale = a.diagonal().cwiseAbs().maxCoeff();
    const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (!(d(i) * d(i) > 1e-12 * scale)) return false;
    return true;
}

Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, "covariance is not positive definite");
    return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

GaussianFit fit_gaussian(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows(), k = points.cols();
    if (n < 2) fail(ErrorKind::InvalidInput, "Gaussian fit needs at least 2 points");
    if (k < 1) fail(ErrorKind::InvalidInput, "Gaussian fit needs at least 1 feature");
    if (!points.allFinite()) fail(ErrorKind::InvalidInput, "point cloud has non-finite entries");
    GaussianFit g;
    g.n = static_cast<std::size_t>(n);
    g.mean = points.colwise().mean().transpose();
    const Eigen::MatrixXd centered = points.rowwise() - g.mean.transpose();
    g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    g.cov = 0.5 * (g.cov + g.cov.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (factorizes(g.cov, llt)) return g;
    const double trace = g.cov.trace();
    double eps = trace > 0.0 ? 1e-10 * trace / static_cast<double>(k) : 1e-10;
    for (int it = 0; it < 200; ++it, eps *= 2.0) {
        Eigen::MatrixXd reg = g.cov;
        reg.diagonal().array() += eps;
        if (factorizes(reg, llt)) {
            g.cov = reg;
            g.epsilon = eps;
            return g;
        }
    }
    fail(ErrorKind::Numerical, "covariance regularization did not converge");
}

double kld_gaussian(const GaussianFit& p, const GaussianFit& q) {
    const Eigen::Index k = p.mean.size();
    if (q.mean.size() != k || p.cov.rows() != k || q.cov.rows() != k)
        fail(ErrorKind::InvalidInput, "KLD: dimension mismatch");
    const auto lp = cholesky(p.cov);
    const auto lq = cholesky(q.cov);
    // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    const Eigen::MatrixXd Lp = lp.matrixL();
    const Eigen::MatrixXd m = lq.matrixL().solve(Lp);
    const Eigen::VectorXd diff = q.mean - p.mean;
    const Eigen::VectorXd z = lq.matrixL().solve(diff);
    const double v = 0.5 * (m.squaredNorm() + z.squaredNorm() - static_cast<double>(k) + log_det(lq) - log_det(lp));
    return std::max(0.0, v);
}

double mahalanobis(const Eigen::VectorXd& x, const GaussianFit& g) {
    if (x.size() != g.mean.size()) fail(ErrorKind::InvalidInput, "Mahalanobis: dimension mismatch");
    const auto l = cholesky(g.cov);
    const Eigen::VectorXd z = l.matrixL().solve(x - g.mean);
    return z.norm();
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) fail(ErrorKind::InvalidInput, "quantile of empty sample");
    std::sort(v.begin(), v.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

IntraKld intra_ensemble_kld(const Eigen::MatrixXd& cloud, int n_folds, std::uint64_t seed, bool shuffle,
                            bool allow_regularized) {
    if (n_folds < 1) fail(ErrorKind::InvalidInput, "n_folds must be >= 1");
    const auto n = static_cast<std::size_t>(cloud.rows());
    const auto k = static_cast<std::size_t>(cloud.cols());
    const std::size_t parts = 2 * static_cast<std::size_t>(n_folds);
    const std::size_t need = allow_regularized ? parts * 2 : parts * (k + 2);
    if (n < need)
        fail(ErrorKind::InvalidInput, "intra-ensemble KLD needs N >= " + std::to_string(need) + " (2 * n_folds * " +
                                          (allow_regularized ? std::string("2") : "(k + 2)") + "), got " +
                                          std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(order);
    }
    const std::size_t part = n / parts;
    auto slice = [&](std::size_t p) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(part), cloud.cols());
        for (std::size_t i = 0; i < part; ++i)
            m.row(static_cast<Eigen::Index>(i)) = cloud.row(static_cast<Eigen::Index>(order[p * part + i]));
        return m;
    };
    IntraKld out;
    for (std::size_t f = 0; f < static_cast<std::size_t>(n_folds); ++f) {
        const GaussianFit a = fit_gaussian(slice(2 * f));
        const GaussianFit b = fit_gaussian(slice(2 * f + 1));
        out.max_epsilon = std::max({out.max_epsilon, a.epsilon, b.epsilon});
        out.values.push_back(kld_gaussian(a, b));
    }
    out.median = quantile(out.values, 0.5);
    const double iqr = quantile(out.values, 0.75) - quantile(out.values, 0.25);
    out.iqr_percent = out.median > 0.0 ? 100.0 * iqr / out.median : 0.0;
    return out;
}

std::vector<double> quantile_match_rescale(std::span<const double> distances, std::span<const double> reference) {
    if (distances.empty() || reference.empty()) fail(ErrorKind::InvalidInput, "rescale: empty input");
    for (double d : distances)
        if (!std::isfinite(d)) fail(ErrorKind::InvalidInput, "rescale: non-finite distance");
    std::vector<double> ref(reference.begin(), reference.end());
    std::sort(ref.begin(), ref.end());
    const std::size_t n = distances.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return distances[a] > distances[b]; });
    std::vector<double> out(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && distances[order[j + 1]] == distances[order[i]]) ++j;
        const double p = n > 1 ? 0.5 * static_cast<double>(i + j) / static_cast<double>(n - 1) : 0.5;
        const double pos = p * static_cast<double>(ref.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, ref.size() - 1);
        const double v = ref[lo] + (pos - static_cast<double>(lo)) * (ref[hi] - ref[lo]);
        for (std::size_t t = i; t <= j; ++t) out[order[t]] = v;
        i = j + 1;
    }
    return out;
}

AgreementReport agreement_analysis(std::span<const double> s, std::span<const double> d, double delta) {
    if (s.size() != d.size()) fail(ErrorKind::InvalidInput, "agreement analysis: length mismatch");
    if (s.empty()) fail(ErrorKind::InvalidInput, "agreement analysis: empty input");
    if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::InvalidInput, "agreement analysis: delta must lie in (0, 1)");
    AgreementReport r;
    r.n = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool outside = std::abs(s[i] - d[i]) > delta;
        r.outside_band += outside;
        r.opposite_conclusion += outside && (s[i] - 0.5) * (d[i] - 0.5) < 0.0;
    }
    r.fraction_outside_band = static_cast<double>(r.outside_band) / static_cast<double>(r.n);
    r.fraction_opposite_conclusion = static_cast<double>(r.opposite_conclusion) / static_cast<double>(r.n);
    return r;
}

}  // namespace tally
