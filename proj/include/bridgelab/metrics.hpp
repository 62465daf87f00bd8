#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <utility>

namespace bridgelab {

// Gaussian-kernel density estimate over a 1D sample.
struct Kde1d {
  Eigen::VectorXd samples;
  double bandwidth = 0.0;

  double operator()(double x) const;
};

// Default bandwidth: Silverman's rule 1.06 * std * n^{-1/5}. Throws on a
// degenerate (all-equal) sample.
Kde1d kde_fit(const Eigen::VectorXd& samples,
              std::optional<double> bandwidth = std::nullopt);

using DensityFn = std::function<double(double)>;

// Probability mass per bin over `bins` equal cells of [range.first,
// range.second); sample mass outside the range is dropped before
// normalization of density inputs is applied per bin by Simpson's rule.
Eigen::VectorXd bin_masses(const Eigen::VectorXd& samples, int bins,
                           std::pair<double, double> range);
Eigen::VectorXd bin_masses(const DensityFn& density, int bins,
                           std::pair<double, double> range);

// Half L1 distance between binned probability vectors; accepts samples or
// densities on either side.
double tv_histogram(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                    int bins, std::pair<double, double> range);
double tv_histogram(const Eigen::VectorXd& a, const DensityFn& b, int bins,
                    std::pair<double, double> range);
double tv_histogram(const DensityFn& a, const Eigen::VectorXd& b, int bins,
                    std::pair<double, double> range);
double tv_histogram(const DensityFn& a, const DensityFn& b, int bins,
                    std::pair<double, double> range);

struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;      // unbiased
  Eigen::VectorXd mean_se;  // per-coordinate standard error of the mean
};

MomentSummary moment_summary(const Eigen::Ref<const Eigen::MatrixXd>& samples);

}  // namespace bridgelab
