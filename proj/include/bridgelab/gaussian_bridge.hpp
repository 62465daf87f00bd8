#pragma once

#include <Eigen/Dense>

namespace bridgelab {

struct GaussianDist {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // symmetric positive definite

  int dim() const { return static_cast<int>(mean.size()); }
};

// Jointly Gaussian pair (X_0, X_1) with marginals marg0, marg1 and
// cross-covariance block Cov(X_0, X_1) = cross. The stacked 2d x 2d
// covariance [[S0, C], [C^T, S1]] must be positive semidefinite.
struct GaussianCoupling {
  GaussianDist marg0;
  GaussianDist marg1;
  Eigen::MatrixXd cross;

  int dim() const { return marg0.dim(); }
  Eigen::VectorXd joint_mean() const;
  Eigen::MatrixXd joint_cov() const;
  // 1D only: cross / sqrt(S0 S1).
  double correlation() const;
};

// Principal square root of an SPD matrix via symmetric eigendecomposition.
Eigen::MatrixXd spd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& m);

// Entropic-OT coupling between two Gaussians for a Brownian reference of
// scale sigma on [0,1]: cross = (S0 S1 + sigma^4/4 I)^{1/2} - sigma^2/2 I.
// sigma = 0 gives the plain optimal-transport (comonotone) coupling.
GaussianCoupling eot_gaussian(const GaussianDist& gamma,
                              const GaussianDist& upsilon, double sigma);

// Blocks of the joint Gaussian law of (X_0, X_t, X_1) when X_t interpolates
// the coupling through the sigma-Brownian bridge on [0,1].
struct PiJoint {
  double t;
  Eigen::VectorXd mean0, mean_t, mean1;
  Eigen::MatrixXd cov00, cov0t, cov_tt, cov_t1, cov01, cov11;

  Eigen::VectorXd joint_mean() const;   // stacked 3d
  Eigen::MatrixXd joint_cov() const;    // stacked 3d x 3d
  // E[X_1 | X_t = x] = mean1 + cov_t1^T cov_tt^{-1} (x - mean_t).
  Eigen::VectorXd conditional_terminal_mean(
      const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

PiJoint pi_joint(const GaussianCoupling& c, double sigma, double t);

// The interpolating SDE dX = (A_t X + c_t) dt + sigma dW linear coefficients.
struct LinearDriftCoeffs {
  Eigen::MatrixXd a;
  Eigen::VectorXd c;
};

LinearDriftCoeffs dbm_linear_coefficients(const GaussianCoupling& c,
                                          double sigma, double t);

// Solves dP/dt = A_t P, P_0 = I over [0,1] and returns P_1. The transported
// coupling has cross block S0 P_1^T.
Eigen::MatrixXd integrate_transfer_ode(const GaussianCoupling& c,
                                       double sigma);

GaussianCoupling idbm_step_gaussian(const GaussianCoupling& c, double sigma);

// 1D correlation update of one transport step: closed form in terms of the
// endpoint standard deviations sd0, sd1 and the current correlation rho_c.
// Returns a value in (0, 1]; sigma = 0 returns 1 exactly.
double rho_m_1d(double rho_c, double sd0, double sd1, double sigma);

enum class IpfSide { First, Second };

// Half-bridge projection: replace the selected marginal of the joint with
// `target` while keeping the conditional law of the other block.
GaussianCoupling ipf_step_gaussian(const GaussianCoupling& joint,
                                   const GaussianDist& target, IpfSide side);

// Joint law of (X_0, X_1) under the sigma-Brownian reference started at
// gamma: [[S0, S0], [S0, S0 + sigma^2 I]].
GaussianCoupling ipf_initial(const GaussianDist& gamma, double sigma);

double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mean_p,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov_p,
                   const Eigen::Ref<const Eigen::VectorXd>& mean_q,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov_q);
double gaussian_kl(const GaussianCoupling& p, const GaussianCoupling& q);

}  // namespace bridgelab
