#include "tally/pca2d.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "tally/rng.hpp"

namespace tally {

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

const char* to_string(CovNormalization n) {
    return n == CovNormalization::AsPrinted ? "as_printed" : "ensemble_only";
}

CovNormalization parse_cov_normalization(const std::string& s) {
    if (s == "as_printed") return CovNormalization::AsPrinted;
    if (s == "ensemble_only") return CovNormalization::EnsembleOnly;
    fail(ErrorKind::Usage, "unknown covariance normalization '" + s + "'");
}

Eigen::MatrixXd to_matrix(const GrayImage& img) {
    Eigen::MatrixXd m(img.rows(), img.cols());
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c) m(r, c) = img(r, c);
    return m;
}

EigenPairs sorted_eigen(const Eigen::MatrixXd& a) {
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) fail(ErrorKind::Numerical, "eigendecomposition failed");
    const Eigen::Index n = sym.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto& ev = es.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return ev(x) > ev(y); });
    EigenPairs out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = ev(order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = es.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    }
    const double top = n > 0 ? std::max(0.0, out.values(0)) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (out.values(i) < 1e-12 * top || out.values(i) < 0.0) out.values(i) = 0.0;
    return out;
}

Pca2dModel fit_pca2d(const std::vector<GrayImage>& images, CovNormalization norm) {
    if (images.size() < 2) fail(ErrorKind::InvalidInput, "2DPCA fit needs at least 2 images");
    const int R = images[0].rows(), C = images[0].cols();
    if (R == 0 || C == 0) fail(ErrorKind::InvalidInput, "2DPCA fit: empty image");
    Pca2dModel m;
    m.rows = R;
    m.cols = C;
    m.n_images = images.size();
    m.normalization = norm;
    m.cov_rows = Eigen::MatrixXd::Zero(C, C);
    m.cov_cols = Eigen::MatrixXd::Zero(R, R);
    m.gray_min = 255.0;
    m.gray_max = 0.0;
    for (const auto& img : images) {
        if (img.rows() != R || img.cols() != C)
            fail(ErrorKind::Data, "2DPCA fit: images differ in dimensions");
        const Eigen::MatrixXd I = to_matrix(img);
        m.gray_min = std::min(m.gray_min, I.minCoeff());
        m.gray_max = std::max(m.gray_max, I.maxCoeff());
        const Eigen::RowVectorXd col_means = I.colwise().mean();
        const Eigen::VectorXd row_means = I.rowwise().mean();
        const Eigen::MatrixXd Dr = I.rowwise() - col_means;
        const Eigen::MatrixXd Dc = I.colwise() - row_means;
        m.cov_rows.noalias() += Dr.transpose() * Dr;
        m.cov_cols.noalias() += Dc * Dc.transpose();
    }
    const double n = static_cast<double>(images.size());
    if (norm == CovNormalization::AsPrinted) {
        m.cov_rows /= n * R;
        m.cov_cols /= n * C;
    } else {
        m.cov_rows /= n;
        m.cov_cols /= n;
    }
    const EigenPairs er = sorted_eigen(m.cov_rows);
    const EigenPairs ec = sorted_eigen(m.cov_cols);
    m.eigvals_rows = er.values;
    m.proj_rows = er.vectors;
    m.eigvals_cols = ec.values;
    m.proj_cols = ec.vectors;
    return m;
}

Eigen::MatrixXd project(const Pca2dModel& m, const GrayImage& img) {
    if (img.rows() != m.rows || img.cols() != m.cols)
        fail(ErrorKind::Data, "2DPCA project: image dimensions do not match the model");
    return m.proj_cols.transpose() * to_matrix(img) * m.proj_rows;
}

SelectionMask full_mask(const Pca2dModel& m) {
    return {std::vector<std::uint8_t>(static_cast<std::size_t>(m.rows), 1),
            std::vector<std::uint8_t>(static_cast<std::size_t>(m.cols), 1)};
}

SelectionMask leading_mask(const Pca2dModel& m, int k_rows, int k_cols) {
    SelectionMask s{std::vector<std::uint8_t>(static_cast<std::size_t>(m.rows), 0),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(m.cols), 0)};
    for (int i = 0; i < std::min(k_rows, m.rows); ++i) s.rows_kept[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < std::min(k_cols, m.cols); ++i) s.cols_kept[static_cast<std::size_t>(i)] = 1;
    return s;
}

namespace {

void check_mask(const Pca2dModel& m, const SelectionMask& s) {
    if (s.rows_kept.size() != static_cast<std::size_t>(m.rows) ||
        s.cols_kept.size() != static_cast<std::size_t>(m.cols))
        fail(ErrorKind::InvalidInput, "selection mask dimensions do not match the model");
    const auto any = [](const std::vector<std::uint8_t>& v) {
        return std::any_of(v.begin(), v.end(), [](std::uint8_t b) { return b != 0; });
    };
    if (!any(s.rows_kept) || !any(s.cols_kept))
        fail(ErrorKind::InvalidInput, "selection mask keeps no components on one side");
}

}  // namespace

Eigen::MatrixXd reconstruct_raw(const Pca2dModel& m, const Eigen::MatrixXd& L, const SelectionMask& mask) {
    check_mask(m, mask);
    if (L.rows() != m.rows || L.cols() != m.cols)
        fail(ErrorKind::InvalidInput, "loading matrix dimensions do not match the model");
    Eigen::MatrixXd B = L;
    for (int r = 0; r < m.rows; ++r)
        if (!mask.rows_kept[static_cast<std::size_t>(r)]) B.row(r).setZero();
    for (int c = 0; c < m.cols; ++c)
        if (!mask.cols_kept[static_cast<std::size_t>(c)]) B.col(c).setZero();
    return m.proj_cols * B * m.proj_rows.transpose();
}

GrayImage reconstruct(const Pca2dModel& m, const Eigen::MatrixXd& L, const SelectionMask& mask) {
    const Eigen::MatrixXd masked = reconstruct_raw(m, L, mask);
    const Eigen::MatrixXd full = m.proj_cols * L * m.proj_rows.transpose();
    const double omin = full.minCoeff(), omax = full.maxCoeff();
    const double lo = masked.minCoeff(), hi = masked.maxCoeff();
    GrayImage out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            const double v = hi > lo ? omin + (masked(r, c) - lo) * (omax - omin) / (hi - lo) : 0.5 * (omin + omax);
            out(r, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
    }
    return out;
}

std::vector<int> sample_inverse_rank(int n, int m, std::uint64_t seed) {
    if (m < 1 || m > n) fail(ErrorKind::InvalidInput, "inverse-rank sampling: need 1 <= m <= n");
    Rng rng(seed);
    std::vector<int> picked;
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(n), 0);
    for (int k = 0; k < m; ++k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            if (!taken[static_cast<std::size_t>(i)]) total += 1.0 / (i + 1);
        double u = rng.uniform01() * total;
        int choice = -1;
        for (int i = 0; i < n; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            choice = i;
            u -= 1.0 / (i + 1);
            if (u < 0.0) break;
        }
        taken[static_cast<std::size_t>(choice)] = 1;
        picked.push_back(choice);
    }
    return picked;
}

SelectionMask dose_mask(const Pca2dModel& model, int m, std::uint64_t seed) {
    if (m < 1 || m > std::min(model.rows, model.cols))
        fail(ErrorKind::InvalidInput, "dose mask: component count must lie in [1, min(R, C)]");
    SelectionMask s{std::vector<std::uint8_t>(static_cast<std::size_t>(model.rows), 0),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(model.cols), 0)};
    for (int i : sample_inverse_rank(model.rows, m, mix_seed(seed, 0))) s.rows_kept[static_cast<std::size_t>(i)] = 1;
    for (int i : sample_inverse_rank(model.cols, m, mix_seed(seed, 1))) s.cols_kept[static_cast<std::size_t>(i)] = 1;
    return s;
}

namespace {

constexpr char kMagic[8] = {'T', 'A', 'L', 'L', 'Y', 'P', '2', 'D'};

void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) fail(ErrorKind::Data, "2DPCA model: truncated array data");
}

// Arrays are stored row-major.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    write_doubles(out, rm.data(), static_cast<std::size_t>(rm.size()));
}

Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index r, Eigen::Index c) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(r, c);
    read_doubles(in, rm.data(), static_cast<std::size_t>(rm.size()));
    return rm;
}

}  // namespace

void save_model(const Pca2dModel& m, std::ostream& out) {
    nlohmann::ordered_json h;
    h["format"] = "tally-pca2d";
    h["version"] = 1;
    h["rows"] = m.rows;
    h["cols"] = m.cols;
    h["n_images"] = m.n_images;
    h["normalization"] = to_string(m.normalization);
    h["gray_min"] = m.gray_min;
    h["gray_max"] = m.gray_max;
    h["eigvals_rows"] = std::vector<double>(m.eigvals_rows.data(), m.eigvals_rows.data() + m.eigvals_rows.size());
    h["eigvals_cols"] = std::vector<double>(m.eigvals_cols.data(), m.eigvals_cols.data() + m.eigvals_cols.size());
    h["arrays"] = {"cov_rows", "cov_cols", "proj_rows", "proj_cols"};
    const std::string header = h.dump();
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_matrix(out, m.cov_rows);
    write_matrix(out, m.cov_cols);
    write_matrix(out, m.proj_rows);
    write_matrix(out, m.proj_cols);
    if (!out) fail(ErrorKind::Data, "2DPCA model: write failed");
}

Pca2dModel load_model(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorKind::Data, "2DPCA model: bad magic");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) fail(ErrorKind::Data, "2DPCA model: bad header length");
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) fail(ErrorKind::Data, "2DPCA model: truncated header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Data, std::string("2DPCA model: header is not JSON: ") + e.what());
    }
    Pca2dModel m;
    try {
        m.rows = h.at("rows").get<int>();
        m.cols = h.at("cols").get<int>();
        m.n_images = h.at("n_images").get<std::size_t>();
        m.normalization = parse_cov_normalization(h.at("normalization").get<std::string>());
        m.gray_min = h.at("gray_min").get<double>();
        m.gray_max = h.at("gray_max").get<double>();
        const auto er = h.at("eigvals_rows").get<std::vector<double>>();
        const auto ec = h.at("eigvals_cols").get<std::vector<double>>();
        if (er.size() != static_cast<std::size_t>(m.cols) || ec.size() != static_cast<std::size_t>(m.rows))
            fail(ErrorKind::Data, "2DPCA model: spectrum length mismatch");
        m.eigvals_rows = Eigen::Map<const Eigen::VectorXd>(er.data(), m.cols);
        m.eigvals_cols = Eigen::Map<const Eigen::VectorXd>(ec.data(), m.rows);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Data, std::string("2DPCA model: bad header: ") + e.what());
    }
    if (m.rows <= 0 || m.cols <= 0) fail(ErrorKind::Data, "2DPCA model: bad dimensions");
    m.cov_rows = read_matrix(in, m.cols, m.cols);
    m.cov_cols = read_matrix(in, m.rows, m.rows);
    m.proj_rows = read_matrix(in, m.cols, m.cols);
    m.proj_cols = read_matrix(in, m.rows, m.rows);
    return m;
}

void save_model(const Pca2dModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Data, "cannot open '" + path + "' for writing");
    save_model(m, out);
}

Pca2dModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Data, "cannot open '" + path + "'");
    return load_model(in);
}

}  // namespace tally
