#include "bridgelab/mixture.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bridgelab {

namespace {

double require_scalar_sigma(const LinearRefSde& sde, const char* who) {
  if (!sde.sigma_is_scalar())
    throw std::invalid_argument(std::string(who) +
                                ": mixture arithmetic needs scalar noise covariance");
  return sde.sigma_scalar();
}

double log_normal_iso(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& mean,
                      double var) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * M_PI * var) -
         0.5 * (x - mean).squaredNorm() / var;
}

}  // namespace

void GaussianMixture::validate() const {
  if (weights.size() == 0 || means.rows() != weights.size() ||
      vars.size() != weights.size())
    throw std::invalid_argument("mixture: inconsistent component counts");
  if ((weights.array() <= 0.0).any())
    throw std::invalid_argument("mixture: weights must be > 0");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("mixture: weights must sum to 1");
  if ((vars.array() < 0.0).any())
    throw std::invalid_argument("mixture: variances must be >= 0");
}

GaussianMixture GaussianMixture::single(const Eigen::VectorXd& mean,
                                        double var) {
  GaussianMixture gm;
  gm.weights = Eigen::VectorXd::Ones(1);
  gm.means = mean.transpose();
  gm.vars = Eigen::VectorXd::Constant(1, var);
  return gm;
}

GaussianMixture GaussianMixture::point_mass(const Eigen::VectorXd& at) {
  return single(at, 0.0);
}

double GaussianMixture::log_density(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if ((vars.array() == 0.0).any())
    throw std::domain_error("mixture density undefined with point-mass components");
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd lp(components());
  for (int k = 0; k < components(); ++k) {
    lp[k] = std::log(weights[k]) + log_normal_iso(x, means.row(k), vars[k]);
    best = std::max(best, lp[k]);
  }
  double acc = 0.0;
  for (int k = 0; k < components(); ++k) acc += std::exp(lp[k] - best);
  return best + std::log(acc);
}

double GaussianMixture::density(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return std::exp(log_density(x));
}

Eigen::MatrixXd GaussianMixture::sample(int n, CounterRng& rng) const {
  Eigen::MatrixXd out(n, dim());
  Eigen::VectorXd cum(components());
  double acc = 0.0;
  for (int k = 0; k < components(); ++k) cum[k] = (acc += weights[k]);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    int k = 0;
    while (k + 1 < components() && u > cum[k]) ++k;
    const double sd = std::sqrt(vars[k]);
    for (int j = 0; j < dim(); ++j)
      out(i, j) = means(k, j) + sd * rng.normal();
  }
  return out;
}

GaussianMixture gm_pushforward(const GaussianMixture& gm,
                               const LinearRefSde& sde, double t) {
  const double sigma_s = require_scalar_sigma(sde, "gm_pushforward");
  if (!(t > 0.0 && t <= sde.tau()))
    throw std::domain_error("gm_pushforward: need t in (0, tau]");
  const TransitionMoments m = transition_moments(sde, 0.0, t);
  GaussianMixture out = gm;
  out.means = gm.means * m.a;
  out.vars = (gm.vars.array() * m.a * m.a + m.v * sigma_s).matrix();
  return out;
}

Eigen::VectorXd gm_score(const GaussianMixture& gm,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  if ((gm.vars.array() == 0.0).any())
    throw std::domain_error("gm_score: point-mass component in mixture");
  const int k = gm.components();
  Eigen::VectorXd lp(k);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    lp[i] = std::log(gm.weights[i]) + log_normal_iso(x, gm.means.row(i), gm.vars[i]);
    best = std::max(best, lp[i]);
  }
  double norm = 0.0;
  Eigen::VectorXd score = Eigen::VectorXd::Zero(gm.dim());
  for (int i = 0; i < k; ++i) {
    const double w = std::exp(lp[i] - best);
    norm += w;
    score += w * (gm.means.row(i).transpose() - x) / gm.vars[i];
  }
  return score / norm;
}

Eigen::VectorXd gm_reverse_drift(const GaussianMixture& gm_initial,
                                 const LinearRefSde& sde,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 double t) {
  const double sigma_s = require_scalar_sigma(sde, "gm_reverse_drift");
  if (!(t >= 0.0 && t < sde.tau()))
    throw std::domain_error("gm_reverse_drift: need reverse time in [0, tau)");
  const double r = sde.tau() - t;
  const double beta_r = sde.beta(r);
  const GaussianMixture marginal = gm_pushforward(gm_initial, sde, r);
  return sde.alpha() * beta_r * x +
         beta_r * sigma_s * gm_score(marginal, x);
}

Eigen::VectorXd gm_dbm_posterior_endpoint(
    const GaussianMixture& c0, const GaussianMixture& c1,
    const LinearRefSde& sde, const Eigen::Ref<const Eigen::VectorXd>& x,
    double t, Direction direction) {
  const double sigma_s = require_scalar_sigma(sde, "gm_dbm_drift");
  if (!(t >= 0.0 && t < sde.tau()))
    throw std::domain_error("gm_dbm_drift: need t in [0, tau)");
  const bool forward = (direction == Direction::Forward);
  // Endpoint being predicted: terminal (c1) on the forward axis, initial
  // (c0) seen as terminal on the reversed axis.
  const GaussianMixture& other = forward ? c0 : c1;
  const GaussianMixture& pinned = forward ? c1 : c0;
  const double interior = forward ? t : sde.tau() - t;

  if (t == 0.0) {
    // Conditioning collapses onto the start point, which is independent of
    // the predicted endpoint under the product coupling.
    return pinned.weights.transpose() * pinned.means;
  }

  const BridgeMoments b = bridge_moments(sde, 0.0, interior, sde.tau());
  // Weights on the (start, predicted-endpoint) pair on this axis.
  const double w_other = forward ? b.a_hat : b.a_check;
  const double w_pinned = forward ? b.a_check : b.a_hat;

  const int kj = other.components();
  const int kk = pinned.components();
  Eigen::MatrixXd lr(kj, kk);
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < kj; ++j) {
    for (int k = 0; k < kk; ++k) {
      const Eigen::VectorXd mean_jk = w_other * other.means.row(j).transpose() +
                                      w_pinned * pinned.means.row(k).transpose();
      const double var_jk = w_other * w_other * other.vars[j] +
                            w_pinned * w_pinned * pinned.vars[k] +
                            b.v_bridge * sigma_s;
      lr(j, k) = std::log(other.weights[j]) + std::log(pinned.weights[k]) +
                 log_normal_iso(x, mean_jk, var_jk);
      best = std::max(best, lr(j, k));
    }
  }

  double norm = 0.0;
  Eigen::VectorXd posterior = Eigen::VectorXd::Zero(other.dim());
  for (int j = 0; j < kj; ++j) {
    for (int k = 0; k < kk; ++k) {
      if (lr(j, k) < best - 45.0) continue;  // float64 underflow guard
      const double w = std::exp(lr(j, k) - best);
      const Eigen::VectorXd mean_jk = w_other * other.means.row(j).transpose() +
                                      w_pinned * pinned.means.row(k).transpose();
      const double var_jk = w_other * w_other * other.vars[j] +
                            w_pinned * w_pinned * pinned.vars[k] +
                            b.v_bridge * sigma_s;
      const Eigen::VectorXd cond_mean =
          pinned.means.row(k).transpose() +
          (w_pinned * pinned.vars[k] / var_jk) * (x - mean_jk);
      posterior += w * cond_mean;
      norm += w;
    }
  }
  return posterior / norm;
}

Eigen::VectorXd gm_dbm_drift(const GaussianMixture& c0,
                             const GaussianMixture& c1,
                             const LinearRefSde& sde,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             double t, Direction direction) {
  const Eigen::VectorXd endpoint =
      gm_dbm_posterior_endpoint(c0, c1, sde, x, t, direction);
  const double beta_t = sde.beta(direction == Direction::Forward
                                     ? t
                                     : sde.tau() - t);
  if (direction == Direction::Forward) {
    const TransitionMoments m = transition_moments(sde, t, sde.tau());
    return -sde.alpha() * beta_t * x +
           beta_t * (endpoint * m.a - x * (m.a * m.a)) / m.v;
  }
  const double r = sde.tau() - t;
  const TransitionMoments m = transition_moments(sde, 0.0, r);
  return sde.alpha() * beta_t * x + beta_t * (endpoint * m.a - x) / m.v;
}

}  // namespace bridgelab
