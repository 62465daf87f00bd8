#include "bridgelab/reference_sde.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

BetaSchedule BetaSchedule::constant(double c) {
  if (c <= 0.0) throw std::invalid_argument("beta schedule: c must be > 0");
  BetaSchedule s;
  s.kind = Kind::Constant;
  s.c = c;
  return s;
}

BetaSchedule BetaSchedule::ve(double sigma_min, double sigma_max) {
  if (!(sigma_max > sigma_min && sigma_min > 0.0))
    throw std::invalid_argument("beta schedule: need sigma_max > sigma_min > 0");
  BetaSchedule s;
  s.kind = Kind::Ve;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  return s;
}

double BetaSchedule::beta(double t) const {
  if (kind == Kind::Constant) return c;
  const double ratio = sigma_max / sigma_min;
  return sigma_min * sigma_min * std::pow(ratio, 2.0 * t) * 2.0 *
         std::log(ratio);
}

double BetaSchedule::integral(double t) const {
  if (kind == Kind::Constant) return c * t;
  const double ratio = sigma_max / sigma_min;
  // Closed form, never quadrature: keeps outputs bit-stable.
  return sigma_min * sigma_min * (std::pow(ratio, 2.0 * t) - 1.0);
}

LinearRefSde::LinearRefSde(double alpha, Eigen::MatrixXd sigma_cov,
                           BetaSchedule beta, double tau)
    : alpha_(alpha),
      sigma_(std::move(sigma_cov)),
      beta_(beta),
      tau_(tau),
      dim_(static_cast<int>(sigma_.rows())) {
  if (alpha_ < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (tau_ <= 0.0) throw std::invalid_argument("tau must be > 0");
  if (sigma_.rows() != sigma_.cols() || sigma_.rows() == 0)
    throw std::invalid_argument("sigma_cov must be square and non-empty");
  if (!sigma_.isApprox(sigma_.transpose(), 1e-12))
    throw std::invalid_argument("sigma_cov must be symmetric");
  llt_.compute(sigma_);
  if (llt_.info() != Eigen::Success)
    throw std::invalid_argument("sigma_cov must be positive definite");
  chol_ = llt_.matrixL();

  scalar_sigma_ = -1.0;
  const double s00 = sigma_(0, 0);
  if (sigma_.isApprox(s00 * Eigen::MatrixXd::Identity(dim_, dim_), 1e-14))
    scalar_sigma_ = s00;
}

LinearRefSde LinearRefSde::isotropic(int dim, double alpha, double sigma2,
                                     BetaSchedule beta, double tau) {
  return LinearRefSde(alpha, sigma2 * Eigen::MatrixXd::Identity(dim, dim),
                      beta, tau);
}

double LinearRefSde::integrate_beta(double t) const {
  if (t < 0.0 || t > tau_)
    throw std::domain_error("integrate_beta: t outside [0, tau]");
  return beta_.integral(t);
}

Eigen::VectorXd LinearRefSde::sigma_inv_apply(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (sigma_is_scalar()) return x / scalar_sigma_;
  return llt_.solve(x);
}

Eigen::VectorXd LinearRefSde::sigma_apply(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (sigma_is_scalar()) return scalar_sigma_ * x;
  return sigma_ * x;
}

namespace {

// Variance factor of the b-time transition over an increment db >= 0.
// Explicit alpha = 0 branch; series fallback when alpha*db is tiny, where
// (1 - exp(-2 a db)) / (2a) cancels catastrophically.
double variance_factor(double alpha, double db) {
  if (alpha == 0.0) return db;
  const double x = alpha * db;
  if (x < 1e-8) return db * (1.0 - x + (2.0 / 3.0) * x * x);
  return (1.0 - std::exp(-2.0 * x)) / (2.0 * alpha);
}

TransitionMoments moments_from_db(double alpha, double db) {
  TransitionMoments m;
  m.a = std::exp(-alpha * db);
  m.v = variance_factor(alpha, db);
  return m;
}

}  // namespace

TransitionMoments transition_moments(const LinearRefSde& sde, double s,
                                     double t) {
  if (!(s >= 0.0 && s < t && t <= sde.tau()))
    throw std::domain_error("transition_moments: need 0 <= s < t <= tau");
  const double db = sde.integrate_beta(t) - sde.integrate_beta(s);
  return moments_from_db(sde.alpha(), db);
}

Eigen::VectorXd score_backward(const LinearRefSde& sde, double s, double t,
                               const Eigen::Ref<const Eigen::VectorXd>& y_s,
                               const Eigen::Ref<const Eigen::VectorXd>& y_t) {
  const TransitionMoments m = transition_moments(sde, s, t);
  return sde.sigma_inv_apply((y_s * m.a - y_t) / m.v);
}

Eigen::VectorXd score_forward(const LinearRefSde& sde, double s, double t,
                              const Eigen::Ref<const Eigen::VectorXd>& y_s,
                              const Eigen::Ref<const Eigen::VectorXd>& y_t) {
  const TransitionMoments m = transition_moments(sde, s, t);
  return sde.sigma_inv_apply((y_t / m.a - y_s) * (m.a * m.a / m.v));
}

BridgeMoments bridge_moments(const LinearRefSde& sde, double s, double t,
                             double u) {
  if (!(s >= 0.0 && s < t && t < u && u <= sde.tau()))
    throw std::domain_error("bridge_moments: need 0 <= s < t < u <= tau");
  const double bs = sde.integrate_beta(s);
  const double bt = sde.integrate_beta(t);
  const double bu = sde.integrate_beta(u);
  const TransitionMoments st = moments_from_db(sde.alpha(), bt - bs);
  const TransitionMoments tu = moments_from_db(sde.alpha(), bu - bt);
  const double denom = st.v * tu.a * tu.a + tu.v;
  BridgeMoments b;
  b.a_hat = tu.v * st.a / denom;
  b.a_check = st.v * tu.a / denom;
  b.v_bridge = st.v * tu.v / denom;
  return b;
}

Eigen::VectorXd bridge_drift(const LinearRefSde& sde,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             double t,
                             const Eigen::Ref<const Eigen::VectorXd>& x_end) {
  if (t >= sde.tau()) throw std::domain_error("bridge_drift: t >= tau");
  const double beta_t = sde.beta(t);
  const TransitionMoments m = transition_moments(sde, t, sde.tau());
  // mu_R + Sigma_R * forward score; the S and S^{-1} factors cancel.
  return -sde.alpha() * beta_t * x +
         beta_t * (x_end * m.a - x * (m.a * m.a)) / m.v;
}

Eigen::VectorXd sample_bridge_point(const LinearRefSde& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& x0,
                                    const Eigen::Ref<const Eigen::VectorXd>& x_end,
                                    double t, CounterRng& rng) {
  if (!(t > 0.0 && t < sde.tau()))
    throw std::domain_error("sample_bridge_point: need 0 < t < tau");
  const BridgeMoments b = bridge_moments(sde, 0.0, t, sde.tau());
  const double sd = std::sqrt(b.v_bridge);
  Eigen::VectorXd z = rng.normal_vector(sde.dim());
  if (sde.sigma_is_scalar())
    return b.a_hat * x0 + b.a_check * x_end +
           sd * std::sqrt(sde.sigma_scalar()) * z;
  return b.a_hat * x0 + b.a_check * x_end + sd * (sde.sigma_chol() * z);
}

}  // namespace bridgelab
