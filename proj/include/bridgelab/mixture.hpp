#pragma once

#include <Eigen/Dense>

#include "bridgelab/reference_sde.hpp"
#include "bridgelab/types.hpp"

namespace bridgelab {

// Mixture of isotropic Gaussian components. Zero-variance components are
// point masses, allowed as endpoint distributions only.
struct GaussianMixture {
  Eigen::VectorXd weights;  // strictly positive, sums to 1
  Eigen::MatrixXd means;    // k x d
  Eigen::VectorXd vars;     // per-component isotropic variance, >= 0

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }

  void validate() const;

  static GaussianMixture single(const Eigen::VectorXd& mean, double var);
  static GaussianMixture point_mass(const Eigen::VectorXd& at);

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd sample(int n, CounterRng& rng) const;
};

// Marginal law at time t of the reference SDE started from gm: component k
// maps to mean m_k a(0,t) and variance s_k^2 a(0,t)^2 + v(0,t) sigma_S,
// where sigma_S is the scalar noise covariance.
GaussianMixture gm_pushforward(const GaussianMixture& gm,
                               const LinearRefSde& sde, double t);

// grad_x log density; requires all component variances > 0.
Eigen::VectorXd gm_score(const GaussianMixture& gm,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

// Drift of the time reversal of the reference started from gm_initial,
// evaluated at reverse time t (forward time r = tau - t).
Eigen::VectorXd gm_reverse_drift(const GaussianMixture& gm_initial,
                                 const LinearRefSde& sde,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 double t);

// Drift of the bridge-mixture matching diffusion for the independent
// coupling c0 (x) c1, evaluated at x and time t on the direction's own axis.
// Forward transports c0 to c1; Backward is the time reversal, transporting
// c1 to c0.
Eigen::VectorXd gm_dbm_drift(const GaussianMixture& c0,
                             const GaussianMixture& c1,
                             const LinearRefSde& sde,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             double t, Direction direction);

// Posterior mean of the pinned endpoint given X_t = x under the independent
// coupling; endpoint side selected by `direction` (Forward: terminal from
// c1; Backward: initial from c0, with t on the reversed axis).
Eigen::VectorXd gm_dbm_posterior_endpoint(const GaussianMixture& c0,
                                          const GaussianMixture& c1,
                                          const LinearRefSde& sde,
                                          const Eigen::Ref<const Eigen::VectorXd>& x,
                                          double t, Direction direction);

}  // namespace bridgelab
