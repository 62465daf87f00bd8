#pragma once

#include <Eigen/Dense>

#include "bridgelab/rng.hpp"

namespace bridgelab {

// Noise-intensity schedule beta_t of the time change b_t = int_0^t beta_u du.
// Two closed-form families: constant intensity and the exponential ("VE")
// ramp b_t = s_min^2 (s_max/s_min)^{2t} - s_min^2.
struct BetaSchedule {
  enum class Kind { Constant, Ve };

  Kind kind = Kind::Constant;
  double c = 1.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;

  static BetaSchedule constant(double c);
  static BetaSchedule ve(double sigma_min, double sigma_max);

  double beta(double t) const;
  double integral(double t) const;  // b_t
};

// Linear reference SDE dX_t = -alpha beta_t X_t dt + sqrt(beta_t) S^{1/2} dW_t
// on [0, tau], with S symmetric positive definite. All transition arithmetic
// happens on the b-time axis, where the process is a plain OU (alpha > 0) or
// scaled Brownian motion (alpha = 0).
class LinearRefSde {
 public:
  LinearRefSde(double alpha, Eigen::MatrixXd sigma_cov, BetaSchedule beta,
               double tau);

  // Isotropic shortcut: S = sigma2 * I in `dim` dimensions.
  static LinearRefSde isotropic(int dim, double alpha, double sigma2,
                                BetaSchedule beta, double tau);

  double alpha() const { return alpha_; }
  double tau() const { return tau_; }
  int dim() const { return dim_; }
  const BetaSchedule& schedule() const { return beta_; }
  const Eigen::MatrixXd& sigma_cov() const { return sigma_; }
  const Eigen::MatrixXd& sigma_chol() const { return chol_; }

  bool sigma_is_scalar() const { return scalar_sigma_ >= 0.0; }
  // Only valid when sigma_is_scalar().
  double sigma_scalar() const { return scalar_sigma_; }

  double beta(double t) const { return beta_.beta(t); }
  // b_t; throws std::domain_error outside [0, tau].
  double integrate_beta(double t) const;

  Eigen::VectorXd sigma_inv_apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd sigma_apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  double alpha_;
  Eigen::MatrixXd sigma_;
  BetaSchedule beta_;
  double tau_;
  int dim_;
  double scalar_sigma_;  // >= 0 when S is a scalar multiple of I, else -1
  Eigen::MatrixXd chol_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Conditional law (Y_t | Y_s) ~ N(Y_s * a, S * v), s < t, on the b-time axis.
struct TransitionMoments {
  double a;  // mean contraction, in (0, 1]
  double v;  // variance factor, > 0
};

// Conditional law (Y_t | Y_s, Y_u) ~ N(Y_s a_hat + Y_u a_check, S v_bridge),
// s < t < u.
struct BridgeMoments {
  double a_hat;
  double a_check;
  double v_bridge;
};

TransitionMoments transition_moments(const LinearRefSde& sde, double s,
                                     double t);

// grad_{y_t} log p_{t|s}(y_t | y_s) = S^{-1} (y_s a - y_t) / v.
Eigen::VectorXd score_backward(const LinearRefSde& sde, double s, double t,
                               const Eigen::Ref<const Eigen::VectorXd>& y_s,
                               const Eigen::Ref<const Eigen::VectorXd>& y_t);

// grad_{y_s} log p_{t|s}(y_t | y_s) = S^{-1} (y_t / a - y_s) a^2 / v.
Eigen::VectorXd score_forward(const LinearRefSde& sde, double s, double t,
                              const Eigen::Ref<const Eigen::VectorXd>& y_s,
                              const Eigen::Ref<const Eigen::VectorXd>& y_t);

BridgeMoments bridge_moments(const LinearRefSde& sde, double s, double t,
                             double u);

// Drift of the process pinned to hit x_end at tau:
// -alpha beta_t x + beta_t (x_end a - x a^2) / v, with (a, v) at (b_t, b_tau).
Eigen::VectorXd bridge_drift(const LinearRefSde& sde,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             double t,
                             const Eigen::Ref<const Eigen::VectorXd>& x_end);

// Exact draw of the pinned process at interior time t given endpoints at
// times 0 and tau. No discretization error.
Eigen::VectorXd sample_bridge_point(const LinearRefSde& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& x0,
                                    const Eigen::Ref<const Eigen::VectorXd>& x_end,
                                    double t, CounterRng& rng);

}  // namespace bridgelab
