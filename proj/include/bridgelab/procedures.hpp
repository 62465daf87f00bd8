#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bridgelab/losses.hpp"
#include "bridgelab/mlp.hpp"
#include "bridgelab/reference_sde.hpp"
#include "bridgelab/sde_engine.hpp"
#include "bridgelab/types.hpp"

namespace bridgelab {

enum class DirectionPolicy { ForwardOnly, BackwardOnly, Alternate };

// Regression convention for bridge fits. Score: the model regresses the
// conditional score and the drift is assembled around it. Slope: the model
// regresses (X_end - X_t)/(tau - t) directly and is itself the drift
// (scaled-Brownian reference only).
enum class BatchConvention { Score, Slope };

struct MlpHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ema_decay = 0.999;
};

using CouplingSampler = std::function<CouplingSamples(int, CounterRng&)>;

struct ProcedureConfig {
  LinearRefSde sde;
  Sampler gamma;    // initial distribution
  Sampler upsilon;  // terminal distribution
  // Optional paired sampler for C^(0); defaults to the product gamma x
  // upsilon when absent.
  CouplingSampler initial_coupling;
  int n_iterations = 1;
  int sgd_steps = 1000;
  int batch_size = 256;
  int euler_steps = 100;
  int coupling_cache = 10000;  // endpoint pairs drawn per iteration
  DirectionPolicy policy = DirectionPolicy::Alternate;
  BatchConvention convention = BatchConvention::Score;
  std::vector<int> hidden = {64, 64, 64};
  MlpHyper hyper;
  std::uint64_t seed = 0;
  bool warm_start = false;
  bool deterministic_last_step = true;
  // t_max for slope batches; <= 0 selects tau - dt/2.
  double slope_t_max = -1.0;
  // DIPF path cache: paths simulated per refresh, SGD steps between
  // refreshes.
  int dipf_cache_paths = 2048;
  int dipf_cache_refresh = 100;

  void validate() const;
};

struct IterationDiagnostics {
  int iteration = 0;
  Direction direction = Direction::Forward;
  double loss = 0.0;               // trailing-average training loss
  double l_oc = 0.0;               // control cost of the simulated transport
  double terminal_mean_err = 0.0;  // max-abs vs target sample mean
  double terminal_var_err = 0.0;   // max-abs vs target sample variances
  double coupling_corr = 0.0;      // 1D couplings only, NaN otherwise
  double wall_seconds = 0.0;
};

// Runs sgd_steps of forward/backward/adam/ema on batches from batch_maker,
// updating `model` in place; returns the EMA snapshot used for simulation.
// Throws TrainingDiverged on a non-finite loss.
MlpParams fit_drift(const std::function<LossBatch(CounterRng&)>& batch_maker,
                    MlpParams& model, AdamState& opt, EmaState& ema,
                    int sgd_steps, CounterRng& rng,
                    double* trailing_loss = nullptr);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// Drift field from a score-convention model: forward
// -alpha beta_t x + beta_t S model(x, t); backward (time-reversed axis)
// +alpha beta_r x + beta_r S model(x, r) with r = tau - t. Evaluation is
// chunked so large batches never materialize full activation stacks.
DriftField assemble_drift(const MlpParams& model, const LinearRefSde& sde,
                          Direction direction);

// The raw network output as a drift (slope-convention fits, drift-matching
// fits).
DriftField mlp_drift_field(const MlpParams& model);

// Reference drift -alpha beta_t x.
DriftField reference_drift(const LinearRefSde& sde);

struct IdbmResult {
  std::vector<CouplingSamples> couplings;  // C^(i) per iteration
  std::vector<IterationDiagnostics> diagnostics;
  MlpParams model_forward;   // EMA snapshot of the last fit per direction
  MlpParams model_backward;
};

IdbmResult run_idbm(const ProcedureConfig& cfg);

struct DipfResult {
  std::vector<MlpParams> models;  // EMA snapshot per iteration
  std::vector<CouplingSamples> couplings;  // (start, terminal) on the gamma axis
  std::vector<IterationDiagnostics> diagnostics;
};

DipfResult run_dipf(const ProcedureConfig& cfg);

struct SgmResult {
  MlpParams model;  // EMA snapshot, score convention
  double trailing_loss = 0.0;
};

SgmResult run_sgm(const ProcedureConfig& cfg);

// Terminal law of the reference, N(0, v(0, b_tau) S): the default generative
// start when none is supplied.
Sampler reference_terminal_sampler(const LinearRefSde& sde);

}  // namespace bridgelab
