#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tally {

/// Rows are points, columns are features.
struct PointCloud {
    Eigen::MatrixXd points;
    std::vector<std::string> names;
};

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    /// Ridge added to the diagonal; 0 when the sample covariance factorized.
    double epsilon = 0.0;
    std::size_t n = 0;
};

/// Sample mean and covariance (N-1). If the covariance is not numerically
/// positive definite, eps I is added with eps doubling from
/// 1e-10 * trace / k (1e-10 when the trace is zero) until it is.
GaussianFit fit_gaussian(const Eigen::MatrixXd& points);

/// Closed-form KL(P || Q) via Cholesky solves and log-determinants.
double kld_gaussian(const GaussianFit& p, const GaussianFit& q);

double mahalanobis(const Eigen::VectorXd& x, const GaussianFit& g);

struct IntraKld {
    double median = 0.0;
    double iqr_percent = 0.0;
    std::vector<double> values;
    double max_epsilon = 0.0;
};

/// One permutation of the rows (identity when `shuffle` is false) cut into
/// 2 * n_folds equal parts; fold i compares part 2i against part 2i+1.
/// Without `allow_regularized`, each part must hold at least k + 2 points.
IntraKld intra_ensemble_kld(const Eigen::MatrixXd& cloud, int n_folds, std::uint64_t seed, bool shuffle = true,
                            bool allow_regularized = false);

/// Larger distance gets smaller similarity: distances ranked descending take
/// the reference quantiles ranked ascending. A tie group spanning sorted
/// positions a..b takes the reference quantile at ((a+b)/2) / (n-1),
/// linearly interpolated; a single distance takes the reference median.
std::vector<double> quantile_match_rescale(std::span<const double> distances, std::span<const double> reference);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q);

struct AgreementReport {
    double fraction_outside_band = 0.0;
    double fraction_opposite_conclusion = 0.0;
    std::size_t outside_band = 0;
    std::size_t opposite_conclusion = 0;
    std::size_t n = 0;
};

AgreementReport agreement_analysis(std::span<const double> similarities, std::span<const double> rescaled,
                                   double delta);

}  // namespace tally
