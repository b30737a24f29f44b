#include "doctest.h"

#include <cmath>
#include <sstream>

#include "tally/error.hpp"
#include "tally/pca2d.hpp"
#include "tally/rng.hpp"

using namespace tally;

namespace {

GrayImage random_image(int r, int c, Rng& rng) {
    GrayImage g(r, c);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::uint8_t>(rng.uniform_index(256));
    return g;
}

// Smooth-ish images so that leading components carry most of the energy.
GrayImage blob_image(int r, int c, Rng& rng) {
    GrayImage g(r, c);
    const double a = rng.uniform(0, r), b = rng.uniform(0, c), w = rng.uniform(3, 10);
    for (int y = 0; y < r; ++y)
        for (int x = 0; x < c; ++x) {
            const double v = 40 + 180 * std::exp(-((y - a) * (y - a) + (x - b) * (x - b)) / (2 * w * w)) +
                             10 * rng.uniform01();
            g(y, x) = static_cast<std::uint8_t>(std::lround(v));
        }
    return g;
}

// Direct double loops over the averaged row- and column-side covariances.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> naive_covs(const std::vector<GrayImage>& imgs) {
    const int R = imgs[0].rows(), C = imgs[0].cols();
    const double N = static_cast<double>(imgs.size());
    Eigen::MatrixXd sr = Eigen::MatrixXd::Zero(C, C), sc = Eigen::MatrixXd::Zero(R, R);
    for (const auto& g : imgs) {
        std::vector<double> cm(C, 0.0), rm(R, 0.0);
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < C; ++x) {
                cm[x] += g(y, x) / static_cast<double>(R);
                rm[y] += g(y, x) / static_cast<double>(C);
            }
        for (int a = 0; a < C; ++a)
            for (int b = 0; b < C; ++b)
                for (int y = 0; y < R; ++y) sr(a, b) += (g(y, a) - cm[a]) * (g(y, b) - cm[b]) / (N * R);
        for (int a = 0; a < R; ++a)
            for (int b = 0; b < R; ++b)
                for (int x = 0; x < C; ++x) sc(a, b) += (g(a, x) - rm[a]) * (g(b, x) - rm[b]) / (N * C);
    }
    return {sr, sc};
}

double max_err(const GrayImage& a, const GrayImage& b) {
    double e = 0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(double(a[i]) - double(b[i])));
    return e;
}

}  // namespace

TEST_CASE("2dpca: constant images give zero covariances") {
    std::vector<GrayImage> imgs(3, GrayImage(5, 7, 42));
    const auto m = fit_pca2d(imgs);
    CHECK(m.cov_rows.norm() == 0.0);
    CHECK(m.cov_cols.norm() == 0.0);
}

TEST_CASE("2dpca: covariances match the naive oracle") {
    GrayImage a(2, 2), b(2, 2);
    a(0, 1) = a(1, 1) = 1;
    b(0, 0) = b(1, 0) = 1;
    const auto tiny = fit_pca2d({a, b});
    const auto [r0, c0] = naive_covs({a, b});
    CHECK((tiny.cov_rows - r0).norm() == 0.0);
    CHECK((tiny.cov_cols - c0).norm() == 0.0);

    Rng rng(4);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 8; ++i) imgs.push_back(random_image(16, 16, rng));
    const auto m = fit_pca2d(imgs);
    const auto [r, c] = naive_covs(imgs);
    CHECK((m.cov_rows - r).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m.cov_cols - c).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m.cov_rows - m.cov_rows.transpose()).cwiseAbs().maxCoeff() < 1e-12);

    const auto e = fit_pca2d(imgs, CovNormalization::EnsembleOnly);
    CHECK((e.cov_rows - 16.0 * m.cov_rows).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((e.proj_rows.cwiseAbs() - m.proj_rows.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("2dpca: orthonormal eigenbases, descending spectra") {
    Rng rng(5);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 10; ++i) imgs.push_back(random_image(12, 20, rng));
    const auto m = fit_pca2d(imgs);
    CHECK((m.proj_rows.transpose() * m.proj_rows - Eigen::MatrixXd::Identity(20, 20)).norm() < 1e-8);
    CHECK((m.proj_cols.transpose() * m.proj_cols - Eigen::MatrixXd::Identity(12, 12)).norm() < 1e-8);
    for (Eigen::Index i = 1; i < m.eigvals_rows.size(); ++i) CHECK(m.eigvals_rows[i] <= m.eigvals_rows[i - 1]);
    CHECK(m.eigvals_rows.minCoeff() >= 0.0);
    CHECK(m.eigvals_cols.minCoeff() >= 0.0);
}

TEST_CASE("2dpca: projection is complete and energy preserving") {
    Rng rng(6);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 6; ++i) imgs.push_back(random_image(10, 14, rng));
    const auto m = fit_pca2d(imgs);
    const GrayImage holdout = random_image(10, 14, rng);
    const Eigen::MatrixXd I = to_matrix(holdout);
    const Eigen::MatrixXd L = project(m, holdout);
    CHECK(std::abs(L.norm() - I.norm()) < 1e-9 * I.norm());
    const Eigen::MatrixXd back = reconstruct_raw(m, L, full_mask(m));
    CHECK((back - I).norm() / I.norm() < 1e-6);
    CHECK(max_err(reconstruct(m, L, full_mask(m)), holdout) <= 1.0);

    Pca2dModel id = m;
    id.proj_rows = Eigen::MatrixXd::Identity(14, 14);
    id.proj_cols = Eigen::MatrixXd::Identity(10, 10);
    CHECK((project(id, holdout) - I).norm() == 0.0);
    CHECK_THROWS_AS(project(m, GrayImage(3, 3)), Error);
}

TEST_CASE("2dpca: rank-one mask and nested masks") {
    Rng rng(7);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 20; ++i) imgs.push_back(blob_image(24, 24, rng));
    const auto m = fit_pca2d(imgs);
    for (const auto& img : imgs) {
        const Eigen::MatrixXd L = project(m, img);
        const Eigen::MatrixXd r1 = reconstruct_raw(m, L, leading_mask(m, 1, 1));
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(r1);
        CHECK(svd.singularValues()[1] < 1e-9 * std::max(1.0, svd.singularValues()[0]));
        // Raw residual energy shrinks as nested masks grow.
        const Eigen::MatrixXd I = to_matrix(img);
        double prev = INFINITY;
        for (int k : {3, 6, 12, 24}) {
            const double e = (reconstruct_raw(m, L, leading_mask(m, k, k)) - I).norm();
            CHECK(e <= prev + 1e-9);
            prev = e;
        }
    }
    SelectionMask none = full_mask(m);
    std::fill(none.rows_kept.begin(), none.rows_kept.end(), 0);
    CHECK_THROWS_AS(reconstruct(m, project(m, imgs[0]), none), Error);
}

TEST_CASE("2dpca: inverse-rank sampling") {
    CHECK(sample_inverse_rank(8, 8, 1).size() == 8u);
    CHECK(sample_inverse_rank(9, 4, 3) == sample_inverse_rank(9, 4, 3));
    CHECK_THROWS_AS(sample_inverse_rank(4, 5, 0), Error);
    CHECK_THROWS_AS(sample_inverse_rank(4, 0, 0), Error);

    const int n = 6, draws = 100000;
    double h = 0;
    for (int r = 1; r <= n; ++r) h += 1.0 / r;
    std::vector<int> counts(n, 0);
    for (int t = 0; t < draws; ++t) ++counts[sample_inverse_rank(n, 1, mix_seed(8, static_cast<std::uint64_t>(t)))[0]];
    for (int r = 0; r < n; ++r) {
        const double p = 1.0 / (r + 1) / h;
        const double sigma = std::sqrt(draws * p * (1 - p));
        CHECK(std::abs(counts[r] - draws * p) < 3 * sigma);
    }

    Rng rng(9);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(random_image(6, 8, rng));
    const auto m = fit_pca2d(imgs);
    const auto full = dose_mask(m, 6, 1);
    CHECK(std::count(full.rows_kept.begin(), full.rows_kept.end(), 1) == 6);
    CHECK(std::count(full.cols_kept.begin(), full.cols_kept.end(), 1) == 6);
    const auto d = dose_mask(m, 3, 2);
    CHECK(std::count(d.rows_kept.begin(), d.rows_kept.end(), 1) == 3);
    CHECK(d.cols_kept == dose_mask(m, 3, 2).cols_kept);
}

TEST_CASE("2dpca: model round trip") {
    Rng rng(10);
    std::vector<GrayImage> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(random_image(5, 9, rng));
    const auto m = fit_pca2d(imgs, CovNormalization::EnsembleOnly);
    std::stringstream ss;
    save_model(m, ss);
    const auto back = load_model(ss);
    CHECK(back.rows == 5);
    CHECK(back.cols == 9);
    CHECK(back.normalization == CovNormalization::EnsembleOnly);
    CHECK(back.proj_rows == m.proj_rows);
    CHECK(back.eigvals_cols == m.eigvals_cols);
    CHECK(back.gray_max == m.gray_max);
    std::stringstream junk("not a model");
    CHECK_THROWS_AS(load_model(junk), Error);
}
