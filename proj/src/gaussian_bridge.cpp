#include "bridgelab/gaussian_bridge.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bridgelab/errors.hpp"

namespace bridgelab {

namespace {

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::Ref<const Eigen::MatrixXd>& m,
                                        const char* who) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::domain_error(std::string(who) + ": matrix not positive definite");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Eigen::VectorXd GaussianCoupling::joint_mean() const {
  Eigen::VectorXd m(2 * dim());
  m << marg0.mean, marg1.mean;
  return m;
}

Eigen::MatrixXd GaussianCoupling::joint_cov() const {
  const int d = dim();
  Eigen::MatrixXd s(2 * d, 2 * d);
  s.topLeftCorner(d, d) = marg0.cov;
  s.topRightCorner(d, d) = cross;
  s.bottomLeftCorner(d, d) = cross.transpose();
  s.bottomRightCorner(d, d) = marg1.cov;
  return s;
}

double GaussianCoupling::correlation() const {
  if (dim() != 1)
    throw std::invalid_argument("correlation defined for 1D couplings only");
  return cross(0, 0) / std::sqrt(marg0.cov(0, 0) * marg1.cov(0, 0));
}

Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd spd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m));
  if (es.info() != Eigen::Success)
    throw std::domain_error("spd_sqrt: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < 0.0)
    throw std::domain_error("spd_sqrt: matrix has negative eigenvalues");
  return es.operatorSqrt();
}

GaussianCoupling eot_gaussian(const GaussianDist& gamma,
                              const GaussianDist& upsilon, double sigma) {
  if (gamma.dim() != upsilon.dim())
    throw std::invalid_argument("eot_gaussian: dimension mismatch");
  if (sigma < 0.0) throw std::invalid_argument("eot_gaussian: sigma < 0");
  const int d = gamma.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(gamma.cov));
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw std::domain_error("eot_gaussian: initial covariance not SPD");
  const Eigen::MatrixXd s0_half = es.operatorSqrt();
  const Eigen::MatrixXd s0_half_inv = es.operatorInverseSqrt();
  checked_llt(upsilon.cov, "eot_gaussian (terminal covariance)");

  // sqrt(S0 S1 + sigma^4/4 I) through the similarity transform
  // S0^{1/2} sqrt(S0^{1/2} S1 S0^{1/2} + sigma^4/4 I) S0^{-1/2}, so the
  // square root acts on an SPD matrix.
  const double q = 0.25 * sigma * sigma * sigma * sigma;
  const Eigen::MatrixXd inner =
      symmetrize(s0_half * upsilon.cov * s0_half) + q * id;
  const Eigen::MatrixXd root = s0_half * spd_sqrt(inner) * s0_half_inv;

  GaussianCoupling c;
  c.marg0 = gamma;
  c.marg1 = upsilon;
  c.cross = root - 0.5 * sigma * sigma * id;
  return c;
}

namespace {

// Covariance blocks of (X_0, X_t, X_1) for the sigma-Brownian bridge
// interpolation X_t = (1-t) X_0 + t X_1 + sigma sqrt(t(1-t)) Z.
struct Blocks {
  Eigen::MatrixXd cov0t, cov_tt, cov_t1;
  Eigen::VectorXd mean_t;
};

Blocks interpolation_blocks(const GaussianCoupling& c, double sigma,
                            double t) {
  const int d = c.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  Blocks b;
  b.mean_t = (1.0 - t) * c.marg0.mean + t * c.marg1.mean;
  b.cov0t = (1.0 - t) * c.marg0.cov + t * c.cross;
  b.cov_tt = (1.0 - t) * (1.0 - t) * c.marg0.cov + t * t * c.marg1.cov +
             t * (1.0 - t) *
                 (c.cross + c.cross.transpose() + sigma * sigma * id);
  b.cov_t1 = (1.0 - t) * c.cross + t * c.marg1.cov;
  return b;
}

}  // namespace

Eigen::VectorXd PiJoint::joint_mean() const {
  Eigen::VectorXd m(3 * mean0.size());
  m << mean0, mean_t, mean1;
  return m;
}

Eigen::MatrixXd PiJoint::joint_cov() const {
  const Eigen::Index d = mean0.size();
  Eigen::MatrixXd s(3 * d, 3 * d);
  s.block(0, 0, d, d) = cov00;
  s.block(0, d, d, d) = cov0t;
  s.block(0, 2 * d, d, d) = cov01;
  s.block(d, 0, d, d) = cov0t.transpose();
  s.block(d, d, d, d) = cov_tt;
  s.block(d, 2 * d, d, d) = cov_t1;
  s.block(2 * d, 0, d, d) = cov01.transpose();
  s.block(2 * d, d, d, d) = cov_t1.transpose();
  s.block(2 * d, 2 * d, d, d) = cov11;
  return s;
}

Eigen::VectorXd PiJoint::conditional_terminal_mean(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::LLT<Eigen::MatrixXd> llt = checked_llt(cov_tt, "pi_joint conditional");
  return mean1 + cov_t1.transpose() * llt.solve(x - mean_t);
}

PiJoint pi_joint(const GaussianCoupling& c, double sigma, double t) {
  if (!(t > 0.0 && t < 1.0))
    throw std::domain_error("pi_joint: need t in (0, 1)");
  const Blocks b = interpolation_blocks(c, sigma, t);
  PiJoint j;
  j.t = t;
  j.mean0 = c.marg0.mean;
  j.mean_t = b.mean_t;
  j.mean1 = c.marg1.mean;
  j.cov00 = c.marg0.cov;
  j.cov0t = b.cov0t;
  j.cov_tt = b.cov_tt;
  j.cov_t1 = b.cov_t1;
  j.cov01 = c.cross;
  j.cov11 = c.marg1.cov;
  return j;
}

LinearDriftCoeffs dbm_linear_coefficients(const GaussianCoupling& c,
                                          double sigma, double t) {
  constexpr double kEndGuard = 1e-6;
  if (!(t >= 0.0 && t < 1.0 - kEndGuard))
    throw std::domain_error(
        "dbm_linear_coefficients: need t in [0, 1 - 1e-6)");
  const int d = c.dim();
  const Blocks b = interpolation_blocks(c, sigma, t);
  Eigen::LLT<Eigen::MatrixXd> llt =
      checked_llt(b.cov_tt, "dbm_linear_coefficients");
  // cov_t1^T cov_tt^{-1} = (cov_tt^{-1} cov_t1)^T.
  const Eigen::MatrixXd gain = llt.solve(b.cov_t1).transpose();
  LinearDriftCoeffs out;
  out.a = (gain - Eigen::MatrixXd::Identity(d, d)) / (1.0 - t);
  out.c = (c.marg1.mean - gain * b.mean_t) / (1.0 - t);
  return out;
}

namespace {

// Regular form of the drift matrix: the factor (1-t) in
// (cov_t1^T - cov_tt) cancels algebraically, so
// A_t = [C^T + t S1 - (1-t) S0 - t (C + C^T + sigma^2 I)] cov_tt^{-1}
// stays finite through t = 1.
Eigen::MatrixXd transfer_matrix(const GaussianCoupling& c, double sigma,
                                double t) {
  const int d = c.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  const Blocks b = interpolation_blocks(c, sigma, t);
  const Eigen::MatrixXd g =
      c.cross.transpose() + t * c.marg1.cov - (1.0 - t) * c.marg0.cov -
      t * (c.cross + c.cross.transpose() + sigma * sigma * id);
  Eigen::LLT<Eigen::MatrixXd> llt(b.cov_tt);
  if (llt.info() != Eigen::Success)
    throw OdeFailure(t, "transfer ODE: interpolation covariance not SPD");
  return llt.solve(g.transpose()).transpose();
}

}  // namespace

Eigen::MatrixXd integrate_transfer_ode(const GaussianCoupling& c,
                                       double sigma) {
  const int d = c.dim();
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(d, d);

  // Mesh: 1e4 uniform steps on [0, 0.99], 200 geometrically shrinking steps
  // down to 1 - 1e-6, one closing step to 1.
  std::vector<double> mesh;
  const int uniform_steps = 10000;
  mesh.reserve(uniform_steps + 202);
  for (int i = 0; i <= uniform_steps; ++i)
    mesh.push_back(0.99 * static_cast<double>(i) / uniform_steps);
  const double ratio = std::pow(1e-4, 1.0 / 200.0);
  double gap = 0.01;
  for (int i = 1; i <= 200; ++i) {
    gap *= ratio;
    mesh.push_back(1.0 - gap);
  }
  mesh.push_back(1.0);

  for (std::size_t i = 0; i + 1 < mesh.size(); ++i) {
    const double t0 = mesh[i];
    const double h = mesh[i + 1] - t0;
    const Eigen::MatrixXd k1 = transfer_matrix(c, sigma, t0) * p;
    const Eigen::MatrixXd k2 =
        transfer_matrix(c, sigma, t0 + 0.5 * h) * (p + 0.5 * h * k1);
    const Eigen::MatrixXd k3 =
        transfer_matrix(c, sigma, t0 + 0.5 * h) * (p + 0.5 * h * k2);
    const Eigen::MatrixXd k4 =
        transfer_matrix(c, sigma, t0 + h) * (p + h * k3);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!p.allFinite())
      throw OdeFailure(mesh[i + 1], "transfer ODE: non-finite state");
  }
  return p;
}

GaussianCoupling idbm_step_gaussian(const GaussianCoupling& c, double sigma) {
  const Eigen::MatrixXd p1 = integrate_transfer_ode(c, sigma);
  GaussianCoupling out = c;
  out.cross = c.marg0.cov * p1.transpose();
  return out;
}

double rho_m_1d(double rho_c, double sd0, double sd1, double sigma) {
  if (!(sd0 > 0.0 && sd1 > 0.0))
    throw std::invalid_argument("rho_m_1d: standard deviations must be > 0");
  if (!(rho_c >= -1.0 && rho_c <= 1.0))
    throw std::invalid_argument("rho_m_1d: rho_c must lie in [-1, 1]");
  if (sigma < 0.0) throw std::invalid_argument("rho_m_1d: sigma < 0");
  if (sigma == 0.0) return 1.0;

  const double s2 = sigma * sigma;
  const double cov = rho_c * sd0 * sd1;
  // The update equals exp(-sigma^2/2 * int_0^1 dt / V_t) with
  // V_t = g t^2 + b t + sd0^2 the interpolation variance.
  const double g = sd0 * sd0 + sd1 * sd1 - 2.0 * cov - s2;
  const double b = 2.0 * cov + s2 - 2.0 * sd0 * sd0;
  const double disc = b * b - 4.0 * g * sd0 * sd0;
  const double scale = s2 + 2.0 * sd0 * sd1 + sd0 * sd0 + sd1 * sd1;

  if (std::abs(g) < 1e-14 * scale || std::abs(disc) < 1e-14 * scale * scale) {
    // Degenerate quadratic (linear V, or double root); integrate directly.
    double integral;
    if (std::abs(g) < 1e-14 * scale) {
      integral = std::abs(b) < 1e-14 * scale
                     ? 1.0 / (sd0 * sd0)
                     : std::log((sd0 * sd0 + b) / (sd0 * sd0)) / b;
    } else {
      const double den0 = b;
      const double den1 = 2.0 * g + b;
      integral = 2.0 / den0 - 2.0 / den1;
    }
    return std::exp(-0.5 * s2 * integral);
  }

  // atanh-pair form of the exponent, written as a difference so both
  // evaluations sit on the same side of the principal branch cut: the
  // arguments (V'(1), V'(0)) scaled by c3 always land in the same branch
  // region because V' / c3 cannot cross +-1 while V stays positive.
  const std::complex<double> c3 =
      std::sqrt(std::complex<double>((s2 + 2.0 * (rho_c + 1.0) * sd0 * sd1) *
                                     (s2 + 2.0 * (rho_c - 1.0) * sd0 * sd1)));
  const double w1 = 2.0 * g + b;  // V'(1) = -c1 of the closed form
  const double w0 = b;            // V'(0) = c2
  const std::complex<double> expo =
      s2 * (std::atanh(w1 / c3) - std::atanh(w0 / c3)) / c3;
  if (std::abs(expo.imag()) > 1e-10)
    throw std::runtime_error("rho_m_1d: imaginary part failed to cancel");
  return std::exp(expo.real());
}

GaussianCoupling ipf_step_gaussian(const GaussianCoupling& joint,
                                   const GaussianDist& target, IpfSide side) {
  if (target.dim() != joint.dim())
    throw std::invalid_argument("ipf_step_gaussian: dimension mismatch");

  const bool first = (side == IpfSide::First);
  // Blocks in the frame where x is the replaced marginal.
  const Eigen::VectorXd& mu_x = first ? joint.marg0.mean : joint.marg1.mean;
  const Eigen::VectorXd& mu_y = first ? joint.marg1.mean : joint.marg0.mean;
  const Eigen::MatrixXd& s_xx = first ? joint.marg0.cov : joint.marg1.cov;
  const Eigen::MatrixXd& s_yy = first ? joint.marg1.cov : joint.marg0.cov;
  const Eigen::MatrixXd s_xy = first ? joint.cross
                                     : Eigen::MatrixXd(joint.cross.transpose());

  Eigen::LLT<Eigen::MatrixXd> llt = checked_llt(s_xx, "ipf_step_gaussian");
  const Eigen::MatrixXd sxx_inv_sxy = llt.solve(s_xy);
  const Eigen::VectorXd lambda_y =
      mu_y + sxx_inv_sxy.transpose() * (target.mean - mu_x);
  const Eigen::MatrixXd g_xy = target.cov * sxx_inv_sxy;
  const Eigen::MatrixXd g_yy = symmetrize(
      s_yy + sxx_inv_sxy.transpose() * (target.cov - s_xx) * sxx_inv_sxy);

  GaussianCoupling out;
  if (first) {
    out.marg0 = target;
    out.marg1 = GaussianDist{lambda_y, g_yy};
    out.cross = g_xy;
  } else {
    out.marg1 = target;
    out.marg0 = GaussianDist{lambda_y, g_yy};
    out.cross = g_xy.transpose();
  }
  return out;
}

GaussianCoupling ipf_initial(const GaussianDist& gamma, double sigma) {
  GaussianCoupling c;
  c.marg0 = gamma;
  c.marg1 = GaussianDist{
      gamma.mean,
      gamma.cov + sigma * sigma *
                      Eigen::MatrixXd::Identity(gamma.dim(), gamma.dim())};
  c.cross = gamma.cov;
  return c;
}

double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mean_p,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov_p,
                   const Eigen::Ref<const Eigen::VectorXd>& mean_q,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov_q) {
  const Eigen::Index k = mean_p.size();
  if (mean_q.size() != k || cov_p.rows() != k || cov_q.rows() != k)
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt_q = checked_llt(cov_q, "gaussian_kl (q)");
  Eigen::LLT<Eigen::MatrixXd> llt_p(cov_p);
  if (llt_p.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd dm = mean_q - mean_p;
  const double trace = llt_q.solve(cov_p).trace();
  const double quad = dm.dot(llt_q.solve(dm));
  return 0.5 * (trace + quad - static_cast<double>(k) +
                log_det_from_llt(llt_q) - log_det_from_llt(llt_p));
}

double gaussian_kl(const GaussianCoupling& p, const GaussianCoupling& q) {
  return gaussian_kl(p.joint_mean(), p.joint_cov(), q.joint_mean(),
                     q.joint_cov());
}

}  // namespace bridgelab
