#include "bridgelab/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace bridgelab {

double Kde1d::operator()(double x) const {
  const double h = bandwidth;
  const double norm = 1.0 / (samples.size() * h * std::sqrt(2.0 * M_PI));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double z = (x - samples[i]) / h;
    acc += std::exp(-0.5 * z * z);
  }
  return norm * acc;
}

Kde1d kde_fit(const Eigen::VectorXd& samples, std::optional<double> bandwidth) {
  if (samples.size() < 2)
    throw std::invalid_argument("kde_fit: need at least 2 samples");
  Kde1d kde;
  kde.samples = samples;
  if (bandwidth) {
    if (*bandwidth <= 0.0)
      throw std::invalid_argument("kde_fit: bandwidth must be > 0");
    kde.bandwidth = *bandwidth;
    return kde;
  }
  const double n = static_cast<double>(samples.size());
  const double mean = samples.mean();
  const double sd =
      std::sqrt((samples.array() - mean).square().sum() / (n - 1.0));
  if (sd == 0.0)
    throw std::invalid_argument("kde_fit: degenerate sample (zero spread)");
  kde.bandwidth = 1.06 * sd * std::pow(n, -0.2);
  return kde;
}

Eigen::VectorXd bin_masses(const Eigen::VectorXd& samples, int bins,
                           std::pair<double, double> range) {
  if (samples.size() == 0) throw std::invalid_argument("bin_masses: empty sample");
  if (bins < 1 || !(range.second > range.first))
    throw std::invalid_argument("bin_masses: bad binning");
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(bins);
  const double w = (range.second - range.first) / bins;
  std::int64_t inside = 0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double x = samples[i];
    if (x < range.first || x >= range.second) continue;
    const int b = std::min(bins - 1, static_cast<int>((x - range.first) / w));
    mass[b] += 1.0;
    ++inside;
  }
  if (inside == 0)
    throw std::invalid_argument("bin_masses: no samples in range");
  return mass / static_cast<double>(samples.size());
}

Eigen::VectorXd bin_masses(const DensityFn& density, int bins,
                           std::pair<double, double> range) {
  if (!density) throw std::invalid_argument("bin_masses: empty density");
  if (bins < 1 || !(range.second > range.first))
    throw std::invalid_argument("bin_masses: bad binning");
  Eigen::VectorXd mass(bins);
  const double w = (range.second - range.first) / bins;
  for (int b = 0; b < bins; ++b) {
    const double lo = range.first + b * w;
    // Simpson's rule per bin.
    mass[b] = w / 6.0 *
              (density(lo) + 4.0 * density(lo + 0.5 * w) + density(lo + w));
  }
  return mass;
}

namespace {

double tv_from_masses(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).array().abs().sum();
}

}  // namespace

double tv_histogram(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                    int bins, std::pair<double, double> range) {
  return tv_from_masses(bin_masses(a, bins, range), bin_masses(b, bins, range));
}

double tv_histogram(const Eigen::VectorXd& a, const DensityFn& b, int bins,
                    std::pair<double, double> range) {
  return tv_from_masses(bin_masses(a, bins, range), bin_masses(b, bins, range));
}

double tv_histogram(const DensityFn& a, const Eigen::VectorXd& b, int bins,
                    std::pair<double, double> range) {
  return tv_from_masses(bin_masses(a, bins, range), bin_masses(b, bins, range));
}

double tv_histogram(const DensityFn& a, const DensityFn& b, int bins,
                    std::pair<double, double> range) {
  return tv_from_masses(bin_masses(a, bins, range), bin_masses(b, bins, range));
}

MomentSummary moment_summary(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 1) throw std::invalid_argument("moment_summary: empty sample");
  MomentSummary s;
  s.mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
  s.cov = n > 1 ? Eigen::MatrixXd(centered.transpose() * centered /
                                  static_cast<double>(n - 1))
                : Eigen::MatrixXd::Zero(d, d);
  s.mean_se = (s.cov.diagonal().array() / static_cast<double>(n)).sqrt();
  return s;
}

}  // namespace bridgelab
