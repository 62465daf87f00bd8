#pragma once

#include <Eigen/Dense>

#include "bridgelab/reference_sde.hpp"
#include "bridgelab/sde_engine.hpp"
#include "bridgelab/types.hpp"

namespace bridgelab {

// Regression batch: predict `target` at (x_t, t) under per-row weights.
struct LossBatch {
  Eigen::MatrixXd x_t;    // n x d
  Eigen::VectorXd t;      // n
  Eigen::MatrixXd target; // n x d
  Eigen::VectorXd weight; // n, positive

  int size() const { return static_cast<int>(x_t.rows()); }
};

// Score-matching batch from the reference process: t ~ U(0, tau), X_0 from
// gamma, X_t from the exact transition; target is the conditional backward
// score, weight the transition variance v(0, b_t).
LossBatch make_sgm_batch(const Sampler& gamma_sampler, const LinearRefSde& sde,
                         int n, CounterRng& rng);

// Bridge batch with the same backward-score target, drawing endpoint pairs
// from the coupling and interior points exactly from the pinned process.
// t ~ U(0, t_max).
LossBatch make_bdbm_batch(const CouplingSamples& coupling,
                          const LinearRefSde& sde, int n, CounterRng& rng,
                          double t_max);

// Bridge batch with the forward-score target grad log r_{tau|t}(X_tau|X_t)
// and weight v(b_t, b_tau).
LossBatch make_dbm_batch(const CouplingSamples& coupling,
                         const LinearRefSde& sde, int n, CounterRng& rng,
                         double t_max);

// Interpolation-slope batch for the scaled-Brownian reference: target
// (X_end - X_t) / (tau - t), unit weight. Models trained on it are drifts
// directly rather than scores.
LossBatch make_rf_batch(const CouplingSamples& coupling,
                        const LinearRefSde& sde, int n, CounterRng& rng,
                        double t_max);

// Drift-matching batch subsampled from simulated paths: target the forward
// difference quotient (X_{t+dt} - X_t) / dt, unit weight.
LossBatch make_drift_matching_batch(const PathBatch& paths, int n,
                                    CounterRng& rng);

// Mean over the batch of weight * ||pred - target||^2 (summed over
// coordinates); optionally writes the exact gradient with respect to pred.
double weighted_mse(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                    const LossBatch& batch, Eigen::MatrixXd* grad = nullptr);

}  // namespace bridgelab
