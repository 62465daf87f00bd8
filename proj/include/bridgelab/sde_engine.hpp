#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bridgelab/reference_sde.hpp"
#include "bridgelab/types.hpp"

namespace bridgelab {

// Discretized sample paths on a uniform grid 0 = t_0 < ... < t_m = tau.
// Stored as one n x d slice per grid time.
struct PathBatch {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> values;  // times.size() slices, each n x d
  double dt = 0.0;

  int n_paths() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
  int n_times() const { return static_cast<int>(times.size()); }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values[0].cols()); }
};

// Euler scheme for dX = drift dt + sqrt(beta_t) S^{1/2} dW with per-(path,
// step) counter-based noise: output is bit-identical for a fixed seed and
// path count no matter how work is split. When deterministic_last_step is
// set the final increment omits the noise term.
PathBatch euler_simulate(const DriftField& drift, const LinearRefSde& sde,
                         const Eigen::Ref<const Eigen::MatrixXd>& x0,
                         int m_steps, std::uint64_t seed,
                         bool deterministic_last_step = false);

// Same scheme, keeping only the terminal slice. Usable at path counts where
// storing whole paths would not fit in memory. The optional accumulator
// receives sum over paths of the left-Riemann control cost
// int ||drift - mu_R||^2_{Sigma_R^{-1}} dt.
Eigen::MatrixXd euler_terminal(const DriftField& drift, const LinearRefSde& sde,
                               const Eigen::Ref<const Eigen::MatrixXd>& x0,
                               int m_steps, std::uint64_t seed,
                               bool deterministic_last_step = false,
                               double* control_cost_sum = nullptr);

// Exact bridge draws, one time per row.
Eigen::MatrixXd sample_bridge_batch(const CouplingSamples& c,
                                    const LinearRefSde& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& t_batch,
                                    CounterRng& rng);

// Value slices reversed along the time axis; grid unchanged.
PathBatch reverse_paths(const PathBatch& p);

// Monte-Carlo estimate of E[int_0^tau ||u(X_t,t)||^2_{Sigma_R^{-1}} dt] by a
// left-Riemann sum over the grid. `u` is the drift adjustment (reference
// drift already subtracted by the caller).
double drift_norm_functional(const DriftField& u, const PathBatch& p,
                             const LinearRefSde& sde);

// Discretized Girsanov log density log dP^mu/dP^gamma along one path (path
// index `path` of the batch), with piecewise-constant left evaluation.
double girsanov_log_ratio(const PathBatch& p, int path, const DriftField& mu,
                          const DriftField& gamma, const LinearRefSde& sde);

// Predicted terminal value E[X_tau | X_t] for the scaled-Brownian reference:
// x_t + (tau - t) * prediction(x_t, t), where the prediction is the drift
// adjustment toward the terminal point.
Eigen::MatrixXd terminal_estimator(const DriftField& prediction,
                                   const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                   double t, const LinearRefSde& sde);

// Binary path dump: "PBV1", u32 n, u32 m+1, u32 d (little endian), then
// float64 values ordered path-major, then time, then coordinate.
void write_pathbatch(std::ostream& os, const PathBatch& p);
PathBatch read_pathbatch(std::istream& is);
void write_pathbatch_csv(std::ostream& os, const PathBatch& p);

}  // namespace bridgelab
