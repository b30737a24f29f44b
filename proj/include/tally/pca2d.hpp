#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tally/grid.hpp"

namespace tally {

/// How the two averaged covariances are scaled. `AsPrinted` divides the
/// row-side sum by N*R and the column-side sum by N*C; `EnsembleOnly`
/// divides both by N. Eigenvectors do not depend on the choice.
enum class CovNormalization { AsPrinted, EnsembleOnly };

const char* to_string(CovNormalization n);
CovNormalization parse_cov_normalization(const std::string& s);

struct Pca2dModel {
    int rows = 0;
    int cols = 0;
    std::size_t n_images = 0;
    CovNormalization normalization = CovNormalization::AsPrinted;
    /// C x C, from rows as samples (mean row repeated down the image).
    Eigen::MatrixXd cov_rows;
    /// R x R, from columns as samples (mean column repeated across).
    Eigen::MatrixXd cov_cols;
    /// Eigenvectors as columns, eigenvalues descending.
    Eigen::MatrixXd proj_rows;  // P_R, C x C
    Eigen::MatrixXd proj_cols;  // P_C, R x R
    Eigen::VectorXd eigvals_rows;
    Eigen::VectorXd eigvals_cols;
    /// Intensity range over the training ensemble.
    double gray_min = 0.0;
    double gray_max = 0.0;
};

Pca2dModel fit_pca2d(const std::vector<GrayImage>& images,
                     CovNormalization norm = CovNormalization::AsPrinted);

struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

/// Symmetric eigendecomposition of (A + A^T)/2, eigenvalues descending with
/// ties kept in solver order, values below 1e-12 * max clamped to zero.
EigenPairs sorted_eigen(const Eigen::MatrixXd& a);

Eigen::MatrixXd to_matrix(const GrayImage& img);

/// L = P_C^T I P_R.
Eigen::MatrixXd project(const Pca2dModel& m, const GrayImage& img);

struct SelectionMask {
    std::vector<std::uint8_t> rows_kept;  // length R, diagonal of B_C
    std::vector<std::uint8_t> cols_kept;  // length C, diagonal of B_R
};

SelectionMask full_mask(const Pca2dModel& m);
/// Keeps the first k_rows / k_cols eigen-directions.
SelectionMask leading_mask(const Pca2dModel& m, int k_rows, int k_cols);

/// P_C B_C L B_R^T P_R^T without rescaling.
Eigen::MatrixXd reconstruct_raw(const Pca2dModel& m, const Eigen::MatrixXd& L, const SelectionMask& mask);

/// Masked reconstruction mapped affinely onto the min/max of the image
/// that L came from (recovered from the unmasked product), then rounded.
/// A constant masked result maps to the midpoint of that range.
GrayImage reconstruct(const Pca2dModel& m, const Eigen::MatrixXd& L, const SelectionMask& mask);

/// m indices per side drawn without replacement, each draw choosing among
/// the remaining indices with probability proportional to 1/rank. Row side
/// first, then column side, from one stream.
SelectionMask dose_mask(const Pca2dModel& model, int m, std::uint64_t seed);

/// Draws `m` of `n` ranks (0-based) as dose_mask does for one side.
std::vector<int> sample_inverse_rank(int n, int m, std::uint64_t seed);

/// Binary container: 8-byte magic, little-endian uint64 header length,
/// JSON header, then little-endian float64 arrays in header order.
void save_model(const Pca2dModel& m, std::ostream& out);
Pca2dModel load_model(std::istream& in);
void save_model(const Pca2dModel& m, const std::string& path);
Pca2dModel load_model(const std::string& path);

}  // namespace tally
