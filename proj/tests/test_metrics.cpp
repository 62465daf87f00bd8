#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "bridgelab/metrics.hpp"
#include "bridgelab/rng.hpp"
#include "test_util.hpp"

using namespace bridgelab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("kde_fit") {
  CounterRng rng(1);
  SUBCASE("standard normal density at the origin") {
    const VectorXd s = rng.normal_vector(100000);
    const Kde1d kde = kde_fit(s);
    CHECK(std::abs(kde(0.0) - 1.0 / std::sqrt(2.0 * M_PI)) < 0.02);
  }
  SUBCASE("normalization") {
    const VectorXd s = rng.normal_vector(2000);
    const Kde1d kde = kde_fit(s);
    const double mass = testutil::simpson([&](double x) { return kde(x); },
                                          -10.0, 10.0, 4000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("degenerate sample is rejected") {
    CHECK_THROWS(kde_fit(VectorXd::Constant(2, 1.0)));
    CHECK_THROWS(kde_fit(VectorXd::Constant(1, 1.0)));
  }
  SUBCASE("symmetrized sample gives a symmetric estimate") {
    const VectorXd half = rng.normal_vector(500).array() + 0.5;
    VectorXd s(1000);
    s << half, -half;
    const Kde1d kde = kde_fit(s);
    for (double x : {0.3, 1.1, 2.4})
      CHECK(kde(x) == doctest::Approx(kde(-x)).epsilon(1e-12));
  }
}

TEST_CASE("tv_histogram") {
  CounterRng rng(2);
  const std::pair<double, double> range{-6.0, 6.0};
  SUBCASE("identical inputs") {
    const VectorXd s = rng.normal_vector(5000);
    CHECK(tv_histogram(s, s, 100, range) == 0.0);
  }
  SUBCASE("disjoint supports") {
    const VectorXd a = VectorXd::Constant(100, -3.0);
    const VectorXd b = VectorXd::Constant(100, 3.0);
    CHECK(tv_histogram(a, b, 100, range) == doctest::Approx(1.0));
  }
  SUBCASE("shifted normals against the CDF oracle") {
    const DensityFn f0 = [](double x) {
      return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    };
    const DensityFn f1 = [](double x) {
      return std::exp(-0.5 * (x - 0.1) * (x - 0.1)) / std::sqrt(2.0 * M_PI);
    };
    const double got = tv_histogram(f0, f1, 200, range);
    // Exact per-bin masses from the normal CDF.
    const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    double want = 0.0;
    for (int b = 0; b < 200; ++b) {
      const double lo = -6.0 + b * 0.06, hi = lo + 0.06;
      want += std::abs((cdf(hi) - cdf(lo)) - (cdf(hi - 0.1) - cdf(lo - 0.1)));
    }
    want *= 0.5;
    CHECK(std::abs(got - want) < 1e-3);
  }
  SUBCASE("symmetry and triangle inequality on a fixed binning") {
    for (int trial = 0; trial < 10; ++trial) {
      const VectorXd a = rng.normal_vector(2000).array() * (0.5 + rng.uniform());
      const VectorXd b = rng.normal_vector(2000).array() + rng.normal();
      const VectorXd c = rng.normal_vector(2000).array() * 2.0;
      const double ab = tv_histogram(a, b, 64, range);
      const double ba = tv_histogram(b, a, 64, range);
      const double ac = tv_histogram(a, c, 64, range);
      const double cb = tv_histogram(c, b, 64, range);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
      CHECK(ab <= ac + cb + 1e-12);
      CHECK(ab >= 0.0);
      CHECK(ab <= 1.0);
    }
  }
}

TEST_CASE("moment_summary") {
  SUBCASE("constant sample") {
    const MomentSummary m = moment_summary(MatrixXd::Constant(50, 2, 3.0));
    CHECK(m.cov.norm() == 0.0);
    CHECK(m.mean[0] == 3.0);
    CHECK(m.mean_se.norm() == 0.0);
  }
  SUBCASE("standard normal mean accuracy") {
    CounterRng rng(3);
    const MatrixXd s = rng.normal_matrix(1000000, 1);
    const MomentSummary m = moment_summary(s);
    CHECK(std::abs(m.mean[0]) < 4e-3);
    CHECK(m.cov(0, 0) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(m.mean_se[0] == doctest::Approx(1e-3).epsilon(0.01));
  }
  SUBCASE("affine equivariance") {
    CounterRng rng(4);
    const MatrixXd s = rng.normal_matrix(5000, 2);
    MatrixXd a(2, 2);
    a << 2.0, -1.0, 0.5, 3.0;
    const VectorXd b = (Eigen::Vector2d() << 1.0, -2.0).finished();
    const MatrixXd mapped = (s * a.transpose()).rowwise() + b.transpose();
    const MomentSummary m0 = moment_summary(s);
    const MomentSummary m1 = moment_summary(mapped);
    CHECK((m1.mean - (a * m0.mean + b)).norm() < 1e-12);
    CHECK((m1.cov - a * m0.cov * a.transpose()).norm() < 1e-10);
  }
}
