#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

// Test-only oracles, kept independent of the library code paths they check.
namespace testutil {

// Composite Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int intervals) {
  if (intervals % 2 != 0) ++intervals;
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i)
    acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Central finite difference of a scalar function of a vector argument.
inline Eigen::VectorXd gradient_fd(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double normal_log_density(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd d = x - mean;
  const double quad = d.dot(llt.solve(d));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (x.size() * std::log(2.0 * M_PI) + logdet + quad);
}

struct SampleStats {
  double mean;
  double var;
  double mean_se;
  double var_se;
};

inline SampleStats stats(const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  SampleStats s;
  s.mean = x.mean();
  const Eigen::ArrayXd c = x.array() - s.mean;
  s.var = c.square().sum() / (n - 1.0);
  s.mean_se = std::sqrt(s.var / n);
  // Fourth-moment-based standard error of the sample variance.
  const double m4 = c.pow(4).sum() / n;
  s.var_se = std::sqrt(std::max(0.0, m4 - s.var * s.var) / n);
  return s;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

}  // namespace testutil
