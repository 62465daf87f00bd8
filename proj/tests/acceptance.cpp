// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier Monte-Carlo checks live here rather than in the unit
// suites.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bridgelab/gaussian_bridge.hpp"
#include "bridgelab/metrics.hpp"
#include "bridgelab/mixture.hpp"
#include "bridgelab/procedures.hpp"
#include "bridgelab/sinkhorn.hpp"

using namespace bridgelab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

GaussianDist gauss1(double mean, double var) {
  return GaussianDist{VectorXd::Constant(1, mean),
                      MatrixXd::Constant(1, 1, var)};
}

LinearRefSde brownian(int d, double sigma2) {
  return LinearRefSde::isotropic(d, 0.0, sigma2, BetaSchedule::constant(1.0),
                                 1.0);
}

GaussianMixture trimodal() {
  GaussianMixture gm;
  gm.weights = VectorXd::Constant(3, 1.0 / 3.0);
  gm.means = (Eigen::Vector3d() << -3.0, 0.5, 3.0).finished();
  gm.vars = VectorXd::Constant(3, 0.04);
  return gm;
}

GaussianDist random_wishart_gauss(int d, double scale, CounterRng& rng) {
  GaussianDist g;
  g.mean = VectorXd::NullaryExpr(
      d, [&](Eigen::Index) { return 2.0 * rng.uniform() - 1.0; });
  MatrixXd w = MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    const VectorXd z = std::sqrt(scale) * rng.normal_vector(d);
    w += z * z.transpose();
  }
  g.cov = symmetrize(w);
  return g;
}

DriftField mixture_drift_field(const GaussianMixture& c0,
                               const GaussianMixture& c1,
                               const LinearRefSde& sde, Direction dir) {
  return [c0, c1, sde, dir](const Eigen::Ref<const MatrixXd>& x,
                            double t) -> MatrixXd {
    MatrixXd out(x.rows(), x.cols());
    const int n = static_cast<int>(x.rows());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      out.row(i) =
          gm_dbm_drift(c0, c1, sde, x.row(i).transpose(), t, dir).transpose();
    return out;
  };
}

double histogram_tv_vs_density(const VectorXd& samples,
                               const std::function<double(double)>& density,
                               int bins, double lo, double hi) {
  const double w = (hi - lo) / bins;
  VectorXd emp = VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    if (samples[i] < lo || samples[i] >= hi) continue;
    emp[static_cast<int>((samples[i] - lo) / w)] += 1.0;
  }
  emp /= static_cast<double>(samples.size());
  double tv = 0.0;
  for (int b = 0; b < bins; ++b)
    tv += std::abs(emp[b] - density(lo + (b + 0.5) * w) * w);
  return 0.5 * tv;
}

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::ostringstream&)> run;
};

// ------------------------------------------------------------------ 1 ----

bool crit_fixed_point(std::ostringstream& msg) {
  const double target = (std::sqrt(5.0) - 1.0) / 2.0;
  double rho = 0.0;
  int it = 0;
  for (; it < 200; ++it) {
    rho = rho_m_1d(rho, 1.0, 1.0, 1.0);
    if (std::abs(rho - target) < 1e-10) break;
  }
  msg << "reached |rho - (sqrt(5)-1)/2| = " << std::abs(rho - target)
      << " after " << it + 1 << " iterations";
  return std::abs(rho - target) < 1e-10 && it < 200;
}

// ------------------------------------------------------------------ 2 ----

bool crit_ode_vs_closed_form(std::ostringstream& msg) {
  CounterRng rng(4242);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double rho = 1.9 * rng.uniform() - 0.95;
    const double sd0 = 0.6 + 1.2 * rng.uniform();
    const double sd1 = 0.6 + 1.2 * rng.uniform();
    const double sigma = 0.15 + 1.65 * rng.uniform();
    const GaussianCoupling c{gauss1(0.0, sd0 * sd0), gauss1(0.0, sd1 * sd1),
                             MatrixXd::Constant(1, 1, rho * sd0 * sd1)};
    const double p1 = integrate_transfer_ode(c, sigma)(0, 0);
    const double rho_ode = sd0 * p1 / sd1;
    const double rho_cf = rho_m_1d(rho, sd0, sd1, sigma);
    worst = std::max(worst, std::abs(rho_ode - rho_cf));
  }
  msg << "max |ode - closed form| = " << worst << " over 100 draws";
  return worst <= 1e-6;
}

// ------------------------------------------------------------------ 3 ----

bool crit_kl_monotone(std::ostringstream& msg) {
  // Dominance is checked at the d = 5 ensemble's own noise level (0.2);
  // at sigma = 1 the same ensemble admits scenarios where the half-bridge
  // iteration contracts faster, so there only monotonicity is asserted.
  bool ok = true;
  double worst_gap = std::numeric_limits<double>::infinity();
  for (int scen = 0; scen < 20; ++scen) {
    CounterRng rng(9000 + scen);
    const GaussianDist g0 = random_wishart_gauss(5, 0.2, rng);
    const GaussianDist g1 = random_wishart_gauss(5, 0.2, rng);
    for (const double sigma : {0.2, 1.0}) {
      const GaussianCoupling star = eot_gaussian(g0, g1, sigma);
      GaussianCoupling c{g0, g1, MatrixXd::Zero(5, 5)};
      GaussianCoupling f = ipf_initial(g0, sigma);
      double prev_idbm = gaussian_kl(c, star);
      double prev_ipf = gaussian_kl(f, star);
      for (int i = 1; i <= 10; ++i) {
        c = idbm_step_gaussian(c, sigma);
        f = i % 2 == 1 ? ipf_step_gaussian(f, g1, IpfSide::Second)
                       : ipf_step_gaussian(f, g0, IpfSide::First);
        const double kl_idbm = gaussian_kl(c, star);
        const double kl_ipf = gaussian_kl(f, star);
        ok = ok && kl_idbm <= prev_idbm + 1e-10;
        ok = ok && kl_ipf <= prev_ipf + 1e-10;
        if (sigma == 0.2) {
          ok = ok && kl_idbm < kl_ipf;
          worst_gap = std::min(worst_gap, kl_ipf - kl_idbm);
        }
        prev_idbm = kl_idbm;
        prev_ipf = kl_ipf;
      }
    }
  }
  msg << "20 scenarios x 10 iterations; min (ipf - idbm) KL gap at "
         "sigma=0.2: "
      << worst_gap << "; both sequences monotone at sigma in {0.2, 1}";
  return ok;
}

// ------------------------------------------------------------------ 4 ----

bool crit_small_noise_ipf(std::ostringstream& msg) {
  const double sigma = 0.01;
  const GaussianDist g0 = gauss1(-1.0, 1.0);
  const GaussianDist g1 = gauss1(1.0, 1.0);
  const GaussianCoupling star = eot_gaussian(g0, g1, sigma);

  const double rho1 = rho_m_1d(0.0, 1.0, 1.0, sigma);
  const GaussianCoupling m1{g0, g1, MatrixXd::Constant(1, 1, rho1)};
  const GaussianCoupling f1 =
      ipf_step_gaussian(ipf_initial(g0, sigma), g1, IpfSide::Second);
  const double kl_idbm = gaussian_kl(m1, star);
  const double kl_ipf = gaussian_kl(f1, star);
  msg << "first-iterate KL: time-reversal " << kl_ipf << " vs bridge-mixture "
      << kl_idbm << " (ratio " << kl_ipf / kl_idbm << ")";
  return kl_ipf >= 10.0 * kl_idbm;
}

// ------------------------------------------------------------------ 5 ----

bool crit_limit_constants(std::ostringstream& msg) {
  const double k_pi =
      0.25 * (M_PI + std::log(4.0) - 2.0 * (1.0 + std::log(M_PI)));

  // Wide-marginal limit at unit noise.
  const double s2 = 1e4;
  const double sd = std::sqrt(s2);
  const GaussianDist g0 = gauss1(-1.0, s2);
  const GaussianDist g1 = gauss1(1.0, s2);
  const GaussianCoupling star = eot_gaussian(g0, g1, 1.0);
  const double rho1 = rho_m_1d(0.0, sd, sd, 1.0);
  const GaussianCoupling m1{g0, g1, MatrixXd::Constant(1, 1, rho1 * s2)};
  const double kl_wide = gaussian_kl(m1, star);

  // High-noise limit at unit marginals.
  const double sigma = 100.0;
  const GaussianDist u0 = gauss1(-1.0, 1.0);
  const GaussianDist u1 = gauss1(1.0, 1.0);
  const GaussianCoupling star_hn = eot_gaussian(u0, u1, sigma);
  const double rho_hn = rho_m_1d(0.0, 1.0, 1.0, sigma);
  const GaussianCoupling m_hn{u0, u1, MatrixXd::Constant(1, 1, rho_hn)};
  const GaussianCoupling f_hn =
      ipf_step_gaussian(ipf_initial(u0, sigma), u1, IpfSide::Second);
  const double kl_m_hn = gaussian_kl(m_hn, star_hn);
  const double kl_f_hn = gaussian_kl(f_hn, star_hn);

  msg << "|KL - K_pi| = " << std::abs(kl_wide - k_pi)
      << " at marginal variance 1e4; high-noise first iterates " << kl_m_hn
      << " / " << kl_f_hn;
  return std::abs(kl_wide - k_pi) <= 1e-3 && kl_m_hn <= 1e-3 &&
         kl_f_hn <= 1e-3;
}

// ------------------------------------------------------------------ 6 ----

bool crit_mc_cross_covariance(std::ostringstream& msg) {
  const int d = 5;
  const double sigma = 0.8;
  CounterRng rng(515);
  const GaussianDist g0 = random_wishart_gauss(d, 0.2, rng);
  const GaussianDist g1 = random_wishart_gauss(d, 0.2, rng);
  GaussianCoupling c{g0, g1, MatrixXd::Zero(d, d)};
  c.cross = 0.3 * eot_gaussian(g0, g1, sigma).cross;  // a generic coupling
  const MatrixXd target =
      g0.cov * integrate_transfer_ode(c, sigma).transpose();

  const LinearRefSde sde = brownian(d, sigma * sigma);
  const DriftField drift = [&](const Eigen::Ref<const MatrixXd>& x,
                               double t) -> MatrixXd {
    const LinearDriftCoeffs lc = dbm_linear_coefficients(c, sigma, t);
    return (x * lc.a.transpose()).rowwise() + lc.c.transpose();
  };

  const int n = 1000000, steps = 1000;
  CounterRng draw(616);
  const Eigen::LLT<MatrixXd> llt(g0.cov);
  const MatrixXd x0 =
      (draw.normal_matrix(n, d) * MatrixXd(llt.matrixU())).rowwise() +
      g0.mean.transpose();
  const MatrixXd x1 = euler_terminal(drift, sde, x0, steps, 717);

  const VectorXd m0 = x0.colwise().mean();
  const VectorXd m1 = x1.colwise().mean();
  int violations = 0;
  double worst_pull = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      const Eigen::ArrayXd prod =
          (x0.col(a).array() - m0[a]) * (x1.col(b).array() - m1[b]);
      const double cov = prod.sum() / (n - 1);
      const double se =
          std::sqrt((prod - prod.mean()).square().sum() / (n - 1.0) / n);
      const double pull = std::abs(cov - target(a, b)) / (4.0 * se);
      worst_pull = std::max(worst_pull, pull);
      if (pull > 1.0) ++violations;
    }
  msg << "max |cov - S0 P1^T| in units of 4 MC std errors = " << worst_pull
      << " (" << violations << "/25 entries out)";
  return violations == 0;
}

// ------------------------------------------------------------------ 7 ----

bool crit_sinkhorn_agreement(std::ostringstream& msg) {
  const int bins = 2000;
  VectorXd grid(bins);
  for (int i = 0; i < bins; ++i) grid[i] = -6.0 + (i + 0.5) * 12.0 / bins;
  const auto density = [](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  };
  const GaussianDist g = gauss1(0.0, 1.0);
  bool ok = true;
  for (const double sigma : {0.2, 1.0}) {
    DiscreteEotProblem prob;
    prob.mu = discretize_density(density, grid);
    prob.nu = prob.mu;
    prob.cost = squared_cost(grid, grid);
    prob.eps = 2.0 * sigma * sigma;
    const DiscreteCoupling plan = sinkhorn_solve(prob, 1e-9, 20000);
    const double corr = plan_correlation(plan.plan, grid, grid);
    const double want = eot_gaussian(g, g, sigma).correlation();
    msg << "sigma=" << sigma << ": |corr err| = " << std::abs(corr - want)
        << ", iterations = " << plan.iterations << "; ";
    ok = ok && plan.converged && std::abs(corr - want) <= 1e-3 &&
         plan.iterations <= 10000;
    // The reported thousands-of-iterations regime belongs to the small
    // regularization level; our stopping rule converges much faster at
    // sigma = 1.
    if (sigma == 0.2) ok = ok && plan.iterations >= 100;
  }
  return ok;
}

// ------------------------------------------------------------------ 8 ----

bool crit_mixture_end_to_end(std::ostringstream& msg) {
  const double sigma = 0.2;
  const GaussianMixture gamma = trimodal();
  const GaussianMixture upsilon =
      GaussianMixture::single(VectorXd::Zero(1), 4.0);

  ProcedureConfig cfg{brownian(1, sigma * sigma)};
  cfg.gamma = [gamma](int n, CounterRng& rng) { return gamma.sample(n, rng); };
  cfg.upsilon = [upsilon](int n, CounterRng& rng) {
    return upsilon.sample(n, rng);
  };
  cfg.n_iterations = 1;
  cfg.sgd_steps = 3000;
  cfg.batch_size = 256;
  cfg.euler_steps = 1000;       // dt = 1e-3
  cfg.coupling_cache = 100000;  // paths
  cfg.policy = DirectionPolicy::BackwardOnly;
  cfg.hidden = {128, 128, 128};
  cfg.hyper.lr = 1e-3;
  cfg.hyper.ema_decay = 0.999;
  cfg.seed = 2718;

  const IdbmResult idbm = run_idbm(cfg);
  ProcedureConfig dcfg = cfg;
  dcfg.dipf_cache_paths = 4096;
  dcfg.dipf_cache_refresh = 100;
  const DipfResult dipf = run_dipf(dcfg);

  const auto gamma_density = [&](double x) {
    return gamma.density(VectorXd::Constant(1, x));
  };
  const double tv_idbm = histogram_tv_vs_density(
      idbm.couplings.back().x0.col(0), gamma_density, 200, -6.0, 6.0);
  const double tv_dipf = histogram_tv_vs_density(
      dipf.couplings.back().x0.col(0), gamma_density, 200, -6.0, 6.0);
  msg << "terminal TV: bridge-mixture " << tv_idbm << ", time-reversal "
      << tv_dipf << " (ratio " << tv_dipf / std::max(tv_idbm, 1e-12) << ")";
  return tv_idbm <= 0.05 && tv_dipf >= 2.0 * tv_idbm;
}

// ------------------------------------------------------------------ 9 ----

bool crit_marginal_matching(std::ostringstream& msg) {
  const double sigma = 0.2;
  const LinearRefSde sde = brownian(1, sigma * sigma);
  const GaussianMixture c0 = GaussianMixture::single(VectorXd::Zero(1), 4.0);
  const GaussianMixture c1 = trimodal();
  const DriftField drift = mixture_drift_field(c0, c1, sde, Direction::Forward);

  const int n = 100000, m = 500;
  const double dt = 1.0 / m;
  CounterRng rng(31415);
  MatrixXd x = c0.sample(n, rng);
  int checked = 0;
  bool ok = true;
  double worst = 0.0;
  for (int s = 0; s < m; ++s) {
    const double t = s * dt;
    x += drift(x, t) * dt;
    CounterRng noise(27180 + s);
    x += (sigma * std::sqrt(dt)) * noise.normal_matrix(n, 1);
    const double t_next = (s + 1) * dt;
    for (const double c : {0.25, 0.5, 0.75}) {
      if (std::abs(t_next - c) > 0.5 * dt) continue;
      const BridgeMoments b = bridge_moments(sde, 0.0, t_next, 1.0);
      double mean = 0.0, second = 0.0;
      for (int j = 0; j < c0.components(); ++j)
        for (int k = 0; k < c1.components(); ++k) {
          const double w = c0.weights[j] * c1.weights[k];
          const double mu =
              b.a_hat * c0.means(j, 0) + b.a_check * c1.means(k, 0);
          const double v = b.a_hat * b.a_hat * c0.vars[j] +
                           b.a_check * b.a_check * c1.vars[k] +
                           b.v_bridge * sigma * sigma;
          mean += w * mu;
          second += w * (v + mu * mu);
        }
      const double var = second - mean * mean;
      const double got_mean = x.col(0).mean();
      const Eigen::ArrayXd csq = x.col(0).array() - got_mean;
      const double got_var = csq.square().sum() / (n - 1.0);
      const double se_mean = std::sqrt(got_var / n);
      const double m4 = csq.pow(4).sum() / n;
      const double se_var =
          std::sqrt(std::max(0.0, m4 - got_var * got_var) / n);
      // Euler discretization allowance on top of 4 MC std errors.
      const double pull_mean =
          std::abs(got_mean - mean) / (4.0 * se_mean + 4.0 * dt);
      const double pull_var =
          std::abs(got_var - var) / (4.0 * se_var + 8.0 * dt);
      worst = std::max({worst, pull_mean, pull_var});
      ok = ok && pull_mean <= 1.0 && pull_var <= 1.0;
      ++checked;
    }
  }
  msg << checked << " checkpoints, worst normalized moment mismatch = "
      << worst;
  return ok && checked == 3;
}

// ----------------------------------------------------------------- 10 ----

bool crit_projection_property(std::ostringstream& msg) {
  const double sigma = 0.5;
  const LinearRefSde sde = brownian(1, sigma * sigma);
  const GaussianMixture gamma = trimodal();
  const GaussianMixture upsilon =
      GaussianMixture::single(VectorXd::Zero(1), 4.0);

  CounterRng rng(6021);
  const int n = 2000000;
  const MatrixXd x0 = gamma.sample(n, rng);
  const MatrixXd x1 = upsilon.sample(n, rng);
  const CouplingSamples coupling{x0, x1};

  CounterRng r1(1), r2(2), r3(3);
  const LossBatch dbm = make_dbm_batch(coupling, sde, n, r1, 1.0);
  const LossBatch bdbm = make_bdbm_batch(coupling, sde, n, r2, 1.0);
  const Sampler gsamp = [&gamma](int k, CounterRng& rr) {
    return gamma.sample(k, rr);
  };
  const LossBatch sgm = make_sgm_batch(gsamp, sde, n, r3);

  // Per-row analytic conditional mean of sigma^2 * target; binned residual
  // means must vanish within MC error.
  const auto check = [&](const LossBatch& b,
                         const std::function<double(double, double)>& analytic,
                         const char* tag) {
    const int bins = 12;
    std::vector<double> acc(bins, 0.0), acc2(bins, 0.0);
    std::vector<int> count(bins, 0);
    for (int i = 0; i < b.size(); ++i) {
      if (std::abs(b.t[i] - 0.5) > 0.02) continue;
      const double x = b.x_t(i, 0);
      if (x < -3.0 || x >= 3.0) continue;
      const int bin = static_cast<int>((x + 3.0) / 0.5);
      const double resid =
          sigma * sigma * b.target(i, 0) - analytic(x, b.t[i]);
      acc[bin] += resid;
      acc2[bin] += resid * resid;
      ++count[bin];
    }
    double worst = 0.0;
    int used = 0;
    for (int k = 0; k < bins; ++k) {
      if (count[k] < 400) continue;
      const double mean = acc[k] / count[k];
      const double se =
          std::sqrt((acc2[k] / count[k] - mean * mean) / count[k]);
      worst = std::max(worst, std::abs(mean) / (4.0 * se));
      ++used;
    }
    msg << tag << ": " << used << " bins, worst pull " << worst << "; ";
    return worst <= 1.0 && used >= 6;
  };

  const bool ok_dbm = check(
      dbm,
      [&](double x, double t) {
        return gm_dbm_drift(gamma, upsilon, sde, VectorXd::Constant(1, x), t,
                            Direction::Forward)[0];
      },
      "forward-score");
  const bool ok_bdbm = check(
      bdbm,
      [&](double x, double t) {
        return gm_dbm_drift(gamma, upsilon, sde, VectorXd::Constant(1, x),
                            1.0 - t, Direction::Backward)[0];
      },
      "backward-score");
  const bool ok_sgm = check(
      sgm,
      [&](double x, double t) {
        return gm_reverse_drift(gamma, sde, VectorXd::Constant(1, x),
                                1.0 - t)[0];
      },
      "score-matching");
  return ok_dbm && ok_bdbm && ok_sgm;
}

// ----------------------------------------------------------------- 11 ----

bool crit_gradient_correctness(std::ostringstream& msg) {
  // Network gradients on a 2-16-2 architecture.
  MlpParams p = mlp_init(MlpSpec{2, {16}, 2, 8086});
  CounterRng rng(9091);
  for (auto& b : p.b) b = 0.05 * rng.normal_vector(b.size());
  const MatrixXd x = rng.normal_matrix(9, 1);
  const VectorXd t = rng.normal_vector(9);
  const MatrixXd target = rng.normal_matrix(9, 2);
  MlpCache cache;
  const MatrixXd out = mlp_forward(p, x, t, &cache);
  const MlpParams grads = mlp_backward(p, cache, 2.0 * (out - target));
  const auto loss = [&](const MlpParams& q) {
    return (mlp_forward(q, x, t) - target).squaredNorm();
  };
  double worst_mlp = 0.0;
  const double h = 1e-6;
  for (int l = 0; l < p.layers(); ++l) {
    for (Eigen::Index i = 0; i < p.w[l].rows(); ++i)
      for (Eigen::Index j = 0; j < p.w[l].cols(); ++j) {
        MlpParams pp = p, pm = p;
        pp.w[l](i, j) += h;
        pm.w[l](i, j) -= h;
        const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
        worst_mlp = std::max(worst_mlp, std::abs(grads.w[l](i, j) - fd) /
                                            std::max(1.0, std::abs(fd)));
      }
    for (Eigen::Index i = 0; i < p.b[l].size(); ++i) {
      MlpParams pp = p, pm = p;
      pp.b[l][i] += h;
      pm.b[l][i] -= h;
      const double fd = (loss(pp) - loss(pm)) / (2.0 * h);
      worst_mlp = std::max(worst_mlp, std::abs(grads.b[l][i] - fd) /
                                          std::max(1.0, std::abs(fd)));
    }
  }

  // Transition scores against finite differences of the Gaussian log
  // density.
  double worst_score = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const double alpha = trial % 2 == 0 ? 0.0 : 1.5 * rng.uniform();
    const LinearRefSde sde = LinearRefSde::isotropic(
        2, alpha, 0.5 + rng.uniform(),
        BetaSchedule::constant(0.5 + rng.uniform()), 1.0);
    const double s = 0.4 * rng.uniform();
    const double tt = s + 0.05 + 0.5 * rng.uniform();
    const VectorXd ys = rng.normal_vector(2);
    const VectorXd yt = rng.normal_vector(2);
    const TransitionMoments m = transition_moments(sde, s, tt);
    const MatrixXd cov = m.v * sde.sigma_cov();
    const auto logp = [&](const VectorXd& y, const VectorXd& mean) {
      const Eigen::LLT<MatrixXd> llt(cov);
      const VectorXd d = y - mean;
      return -0.5 * (2.0 * std::log(2.0 * M_PI) +
                     2.0 * llt.matrixLLT().diagonal().array().log().sum() +
                     d.dot(llt.solve(d)));
    };
    const VectorXd back = score_backward(sde, s, tt, ys, yt);
    const VectorXd fwd = score_forward(sde, s, tt, ys, yt);
    for (int i = 0; i < 2; ++i) {
      VectorXd yp = yt, ym = yt;
      yp[i] += 1e-5;
      ym[i] -= 1e-5;
      const double fd = (logp(yp, m.a * ys) - logp(ym, m.a * ys)) / 2e-5;
      worst_score = std::max(worst_score, std::abs(back[i] - fd) /
                                              std::max(1.0, std::abs(fd)));
      VectorXd sp = ys, sm = ys;
      sp[i] += 1e-5;
      sm[i] -= 1e-5;
      const double fds = (logp(yt, m.a * sp) - logp(yt, m.a * sm)) / 2e-5;
      worst_score = std::max(worst_score, std::abs(fwd[i] - fds) /
                                              std::max(1.0, std::abs(fds)));
    }
  }
  msg << "worst network-gradient rel err " << worst_mlp
      << ", worst score rel err " << worst_score;
  return worst_mlp <= 1e-5 && worst_score <= 1e-6;
}

// ----------------------------------------------------------------- 12 ----

bool crit_toy_transfer_ranking(std::ostringstream& msg) {
  msg << "full-scale image benchmarks (FID on CIFAR-10 and MNIST/EMNIST) "
         "are NOT reproducible at desk scale; substituted by this ranking "
         "plus criteria 8-10. ";

  const auto moons = [](int n, CounterRng& rng) {
    MatrixXd out(n, 2);
    for (int i = 0; i < n; ++i) {
      const double t = rng.uniform() * M_PI;
      double x, y;
      if (rng.uniform() < 0.5) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      out(i, 0) = x - 0.5 + 0.05 * rng.normal();
      out(i, 1) = y - 0.25 + 0.05 * rng.normal();
    }
    return out;
  };
  const auto rings = [](int n, CounterRng& rng) {
    MatrixXd out(n, 2);
    for (int i = 0; i < n; ++i) {
      const double r = rng.uniform() < 0.5 ? 0.6 : 1.2;
      const double a = rng.uniform() * 2.0 * M_PI;
      out(i, 0) = r * std::cos(a) + 0.05 * rng.normal();
      out(i, 1) = r * std::sin(a) + 0.05 * rng.normal();
    }
    return out;
  };

  bool ok = true;
  for (const double sigma : {1.0, 0.5}) {
    ProcedureConfig cfg{LinearRefSde::isotropic(
        2, 0.0, sigma * sigma, BetaSchedule::constant(1.0), 1.0)};
    cfg.gamma = moons;
    cfg.upsilon = rings;
    cfg.n_iterations = 4;
    cfg.sgd_steps = 1200;
    cfg.batch_size = 256;
    cfg.euler_steps = 60;
    cfg.coupling_cache = 6000;
    cfg.policy = DirectionPolicy::Alternate;
    cfg.hidden = {96, 96};
    cfg.hyper.lr = 2e-3;
    cfg.hyper.ema_decay = 0.995;
    cfg.seed = 1234;

    const IdbmResult idbm = run_idbm(cfg);
    ProcedureConfig dcfg = cfg;
    dcfg.dipf_cache_paths = 2048;
    dcfg.dipf_cache_refresh = 100;
    const DipfResult dipf = run_dipf(dcfg);

    // Mean over the last two iterations, covering both directions.
    const auto summarize = [](const std::vector<IterationDiagnostics>& d) {
      double l_oc = 0.0, moment = 0.0;
      for (std::size_t i = d.size() - 2; i < d.size(); ++i) {
        l_oc += d[i].l_oc / 2.0;
        moment += (d[i].terminal_mean_err + d[i].terminal_var_err) / 2.0;
      }
      return std::pair<double, double>(l_oc, moment);
    };
    const auto [idbm_loc, idbm_mom] = summarize(idbm.diagnostics);
    const auto [dipf_loc, dipf_mom] = summarize(dipf.diagnostics);
    msg << "sigma=" << sigma << ": control cost " << idbm_loc << " vs "
        << dipf_loc << ", moment err " << idbm_mom << " vs " << dipf_mom
        << "; ";
    ok = ok && idbm_loc < dipf_loc && idbm_mom < dipf_mom;
  }
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "1D correlation fixed point", crit_fixed_point},
      {2, "transfer ODE vs closed-form correlation", crit_ode_vs_closed_form},
      {3, "KL monotonicity and dominance (d=5 scenarios)", crit_kl_monotone},
      {4, "small-noise first-iterate gap", crit_small_noise_ipf},
      {5, "limit constants (wide marginals, high noise)",
       crit_limit_constants},
      {6, "Monte-Carlo terminal cross-covariance (d=5)",
       crit_mc_cross_covariance},
      {7, "discrete EOT vs Gaussian closed form", crit_sinkhorn_agreement},
      {8, "1D mixture transfer end-to-end", crit_mixture_end_to_end},
      {9, "marginal matching of the mixture drift", crit_marginal_matching},
      {10, "projection property of regression targets",
       crit_projection_property},
      {11, "gradient and score correctness", crit_gradient_correctness},
      {12, "toy 2D transfer ranking (desk-scale substitute)",
       crit_toy_transfer_ranking},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::ostringstream msg;
    bool pass = false;
    const double t0 = now();
    try {
      pass = c.run(msg);
    } catch (const std::exception& e) {
      msg << "exception: " << e.what();
    }
    const double dt = now() - t0;
    std::printf("criterion %2d [%s] %s (%.1f s): %s\n", c.id,
                pass ? "PASS" : "FAIL", c.name.c_str(), dt,
                msg.str().c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures > 0)
    std::printf("acceptance: %d criterion(s) FAILED\n", failures);
  else
    std::printf("acceptance: all %zu criteria passed\n", criteria.size());
  return failures;
}
