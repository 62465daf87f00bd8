#include "bridgelab/procedures.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bridgelab {

namespace {

// Stream ids for the independent random substreams of a run.
constexpr std::uint64_t kStreamEndpoints = 1;
constexpr std::uint64_t kStreamBatches = 2;
constexpr std::uint64_t kStreamEuler = 3;
constexpr std::uint64_t kStreamInit = 4;
constexpr std::uint64_t kStreamTargets = 5;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Eigen::MatrixXd apply_sigma_rows(const LinearRefSde& sde,
                                 const Eigen::MatrixXd& rows) {
  if (sde.sigma_is_scalar()) return sde.sigma_scalar() * rows;
  return rows * sde.sigma_cov();  // S symmetric
}

double correlation_1d(const CouplingSamples& c) {
  if (c.dim() != 1) return std::numeric_limits<double>::quiet_NaN();
  const double m0 = c.x0.col(0).mean();
  const double m1 = c.x_end.col(0).mean();
  const Eigen::ArrayXd a = c.x0.col(0).array() - m0;
  const Eigen::ArrayXd b = c.x_end.col(0).array() - m1;
  return (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
}

struct MomentErrs {
  double mean_err;
  double var_err;
};

MomentErrs terminal_moment_errors(const Eigen::MatrixXd& simulated,
                                  const Eigen::MatrixXd& target) {
  const Eigen::VectorXd ms = simulated.colwise().mean();
  const Eigen::VectorXd mt = target.colwise().mean();
  const Eigen::VectorXd vs =
      (simulated.rowwise() - ms.transpose()).array().square().colwise().mean();
  const Eigen::VectorXd vt =
      (target.rowwise() - mt.transpose()).array().square().colwise().mean();
  return MomentErrs{(ms - mt).cwiseAbs().maxCoeff(),
                    (vs - vt).cwiseAbs().maxCoeff()};
}

}  // namespace

void ProcedureConfig::validate() const {
  if (n_iterations < 1 || sgd_steps < 0 || batch_size < 1 ||
      euler_steps < 1 || coupling_cache < 1 || dipf_cache_paths < 1 ||
      dipf_cache_refresh < 1)
    throw std::invalid_argument("procedure config: counts must be positive");
  if (!gamma || !upsilon)
    throw std::invalid_argument("procedure config: endpoint samplers required");
  if (convention == BatchConvention::Slope && sde.alpha() != 0.0)
    throw std::invalid_argument(
        "procedure config: slope convention needs a driftless reference");
}

MlpParams fit_drift(const std::function<LossBatch(CounterRng&)>& batch_maker,
                    MlpParams& model, AdamState& opt, EmaState& ema,
                    int sgd_steps, CounterRng& rng, double* trailing_loss) {
  const int tail = std::max(1, sgd_steps / 10);
  double tail_acc = 0.0;
  int tail_n = 0;
  MlpCache cache;
  for (int step = 0; step < sgd_steps; ++step) {
    const LossBatch batch = batch_maker(rng);
    const Eigen::MatrixXd pred =
        mlp_forward(model, batch.x_t, batch.t, &cache);
    Eigen::MatrixXd grad;
    const double loss = weighted_mse(pred, batch, &grad);
    if (!std::isfinite(loss))
      throw TrainingDiverged(step, "fit_drift: non-finite loss at step " +
                                       std::to_string(step));
    const MlpParams grads = mlp_backward(model, cache, grad);
    adam_step(model, grads, opt);
    ema_update(ema, model);
    if (step >= sgd_steps - tail) {
      tail_acc += loss;
      ++tail_n;
    }
  }
  if (trailing_loss) *trailing_loss = tail_n > 0 ? tail_acc / tail_n : 0.0;
  return ema.shadow;
}

DriftField assemble_drift(const MlpParams& model, const LinearRefSde& sde,
                          Direction direction) {
  return [model, sde, direction](const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 double t) -> Eigen::MatrixXd {
    const double r = direction == Direction::Forward ? t : sde.tau() - t;
    const double beta = sde.beta(r);
    const double alpha = sde.alpha();
    constexpr Eigen::Index kChunk = 16384;
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index lo = 0; lo < x.rows(); lo += kChunk) {
      const Eigen::Index len = std::min(kChunk, x.rows() - lo);
      const Eigen::MatrixXd score = mlp_forward(
          model, x.middleRows(lo, len),
          Eigen::VectorXd::Constant(len, r));
      out.middleRows(lo, len) = beta * apply_sigma_rows(sde, score);
    }
    if (direction == Direction::Forward)
      out.noalias() -= (alpha * beta) * x;
    else
      out.noalias() += (alpha * beta) * x;
    return out;
  };
}

DriftField mlp_drift_field(const MlpParams& model) {
  return [model](const Eigen::Ref<const Eigen::MatrixXd>& x,
                 double t) -> Eigen::MatrixXd {
    constexpr Eigen::Index kChunk = 16384;
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index lo = 0; lo < x.rows(); lo += kChunk) {
      const Eigen::Index len = std::min(kChunk, x.rows() - lo);
      out.middleRows(lo, len) =
          mlp_forward(model, x.middleRows(lo, len),
                      Eigen::VectorXd::Constant(len, t));
    }
    return out;
  };
}

DriftField reference_drift(const LinearRefSde& sde) {
  return [sde](const Eigen::Ref<const Eigen::MatrixXd>& x,
               double t) -> Eigen::MatrixXd {
    return (-sde.alpha() * sde.beta(t)) * x;
  };
}

Sampler reference_terminal_sampler(const LinearRefSde& sde) {
  const double v = transition_moments(sde, 0.0, sde.tau()).v;
  return [sde, v](int n, CounterRng& rng) -> Eigen::MatrixXd {
    Eigen::MatrixXd z = rng.normal_matrix(n, sde.dim());
    if (sde.sigma_is_scalar())
      return std::sqrt(v * sde.sigma_scalar()) * z;
    return std::sqrt(v) * (z * sde.sigma_chol().transpose());
  };
}

namespace {

Direction direction_for(const ProcedureConfig& cfg, int iteration) {
  switch (cfg.policy) {
    case DirectionPolicy::ForwardOnly:
      return Direction::Forward;
    case DirectionPolicy::BackwardOnly:
      return Direction::Backward;
    case DirectionPolicy::Alternate:
    default:
      // Generative-first order, matching the time-reversal procedure's
      // parity (odd iterations run from upsilon).
      return iteration % 2 == 1 ? Direction::Backward : Direction::Forward;
  }
}

struct ModelSlot {
  MlpParams params;
  AdamState opt;
  EmaState ema;
};

ModelSlot fresh_slot(const ProcedureConfig& cfg, std::uint64_t salt) {
  MlpSpec spec = MlpSpec::drift(cfg.sde.dim(), cfg.hidden,
                                mix64(cfg.seed ^ (kStreamInit * 0x10001) ^ salt));
  ModelSlot slot;
  slot.params = mlp_init(spec);
  slot.opt = AdamState::for_params(slot.params, cfg.hyper.lr);
  slot.opt.beta1 = cfg.hyper.beta1;
  slot.opt.beta2 = cfg.hyper.beta2;
  slot.opt.eps = cfg.hyper.eps;
  slot.ema = EmaState::for_params(slot.params, cfg.hyper.ema_decay);
  return slot;
}

double slope_t_max(const ProcedureConfig& cfg) {
  if (cfg.slope_t_max > 0.0) return cfg.slope_t_max;
  const double dt = cfg.sde.tau() / cfg.euler_steps;
  return cfg.sde.tau() - 0.5 * dt;
}

}  // namespace

IdbmResult run_idbm(const ProcedureConfig& cfg) {
  cfg.validate();
  const LinearRefSde& sde = cfg.sde;

  CounterRng endpoint_rng(cfg.seed, kStreamEndpoints);
  CounterRng target_rng(cfg.seed, kStreamTargets);

  // C^(0): independent coupling of the two endpoint distributions unless a
  // paired sampler was supplied.
  CouplingSamples coupling =
      cfg.initial_coupling
          ? cfg.initial_coupling(cfg.coupling_cache, endpoint_rng)
          : CouplingSamples{cfg.gamma(cfg.coupling_cache, endpoint_rng),
                            cfg.upsilon(cfg.coupling_cache, endpoint_rng)};

  IdbmResult result;
  ModelSlot fwd = fresh_slot(cfg, 0xf0);
  ModelSlot bwd = fresh_slot(cfg, 0xb0);

  for (int it = 1; it <= cfg.n_iterations; ++it) {
    const double t_start = now_seconds();
    const Direction dir = direction_for(cfg, it);
    ModelSlot& slot = dir == Direction::Forward ? fwd : bwd;
    if (!cfg.warm_start) slot = fresh_slot(cfg, mix64(it) ^ (dir == Direction::Forward ? 0xf0 : 0xb0));

    // Each cached endpoint pair serves many (t, bridge point) draws below.
    const auto batch_maker = [&](CounterRng& rng) -> LossBatch {
      if (cfg.convention == BatchConvention::Slope) {
        const CouplingSamples oriented =
            dir == Direction::Forward ? coupling : coupling.reversed();
        return make_rf_batch(oriented, sde, cfg.batch_size, rng,
                             slope_t_max(cfg));
      }
      return dir == Direction::Forward
                 ? make_dbm_batch(coupling, sde, cfg.batch_size, rng, sde.tau())
                 : make_bdbm_batch(coupling, sde, cfg.batch_size, rng,
                                   sde.tau());
    };

    CounterRng batch_rng(cfg.seed, kStreamBatches, static_cast<std::uint64_t>(it));
    IterationDiagnostics diag;
    diag.iteration = it;
    diag.direction = dir;
    const MlpParams snapshot = fit_drift(batch_maker, slot.params, slot.opt,
                                         slot.ema, cfg.sgd_steps, batch_rng,
                                         &diag.loss);

    // Slope-convention models are the drift on their own axis; score models
    // need the reference drift and noise-covariance assembly.
    const DriftField drift = cfg.convention == BatchConvention::Slope
                                 ? mlp_drift_field(snapshot)
                                 : assemble_drift(snapshot, sde, dir);

    // Simulate the transport to refresh the coupling.
    const Eigen::MatrixXd start = dir == Direction::Forward
                                      ? cfg.gamma(cfg.coupling_cache, endpoint_rng)
                                      : cfg.upsilon(cfg.coupling_cache, endpoint_rng);
    double cost_sum = 0.0;
    const Eigen::MatrixXd terminal = euler_terminal(
        drift, sde, start, cfg.euler_steps,
        mix64(cfg.seed ^ (kStreamEuler * 0x20002) ^ static_cast<std::uint64_t>(it)),
        cfg.deterministic_last_step, &cost_sum);
    diag.l_oc = cost_sum / cfg.coupling_cache;

    const Eigen::MatrixXd target_draw =
        dir == Direction::Forward ? cfg.upsilon(cfg.coupling_cache, target_rng)
                                  : cfg.gamma(cfg.coupling_cache, target_rng);
    const MomentErrs errs = terminal_moment_errors(terminal, target_draw);
    diag.terminal_mean_err = errs.mean_err;
    diag.terminal_var_err = errs.var_err;

    coupling = dir == Direction::Forward ? CouplingSamples{start, terminal}
                                         : CouplingSamples{terminal, start};
    diag.coupling_corr = correlation_1d(coupling);
    diag.wall_seconds = now_seconds() - t_start;

    result.couplings.push_back(coupling);
    result.diagnostics.push_back(diag);
    if (dir == Direction::Forward)
      result.model_forward = snapshot;
    else
      result.model_backward = snapshot;
  }
  return result;
}

DipfResult run_dipf(const ProcedureConfig& cfg) {
  cfg.validate();
  const LinearRefSde& sde = cfg.sde;

  CounterRng endpoint_rng(cfg.seed, kStreamEndpoints);
  CounterRng target_rng(cfg.seed, kStreamTargets);

  DipfResult result;
  ModelSlot fwd = fresh_slot(cfg, 0xf1);
  ModelSlot bwd = fresh_slot(cfg, 0xb1);

  // Iteration 0 is the reference itself started from gamma; no fit needed.
  DriftField prev_drift = reference_drift(sde);
  Sampler prev_start = cfg.gamma;

  for (int it = 1; it <= cfg.n_iterations; ++it) {
    const double t_start = now_seconds();
    // Odd iterations run on the reversed axis from upsilon.
    const bool odd = (it % 2 == 1);
    ModelSlot& slot = odd ? bwd : fwd;
    if (!cfg.warm_start) slot = fresh_slot(cfg, mix64(it) ^ (odd ? 0xb1 : 0xf1));

    IterationDiagnostics diag;
    diag.iteration = it;
    diag.direction = odd ? Direction::Backward : Direction::Forward;

    // Train on reversed paths of the previous iterate, refreshing the cache
    // every dipf_cache_refresh SGD steps.
    CounterRng batch_rng(cfg.seed, kStreamBatches, static_cast<std::uint64_t>(it));
    PathBatch cache_paths;
    int refresh_counter = 0;
    const int tail = std::max(1, cfg.sgd_steps / 10);
    double tail_acc = 0.0;
    int tail_n = 0;
    MlpCache cache;
    for (int step = 0; step < cfg.sgd_steps; ++step) {
      if (step % cfg.dipf_cache_refresh == 0) {
        const Eigen::MatrixXd x0 = prev_start(cfg.dipf_cache_paths, endpoint_rng);
        cache_paths = reverse_paths(euler_simulate(
            prev_drift, sde, x0, cfg.euler_steps,
            mix64(cfg.seed ^ 0x5157ULL ^ mix64(it) ^
                  static_cast<std::uint64_t>(refresh_counter)),
            false));
        ++refresh_counter;
      }
      const LossBatch batch =
          make_drift_matching_batch(cache_paths, cfg.batch_size, batch_rng);
      const Eigen::MatrixXd pred =
          mlp_forward(slot.params, batch.x_t, batch.t, &cache);
      Eigen::MatrixXd grad;
      const double loss = weighted_mse(pred, batch, &grad);
      if (!std::isfinite(loss))
        throw TrainingDiverged(step, "run_dipf: non-finite loss at step " +
                                         std::to_string(step));
      const MlpParams grads = mlp_backward(slot.params, cache, grad);
      adam_step(slot.params, grads, slot.opt);
      ema_update(slot.ema, slot.params);
      if (step >= cfg.sgd_steps - tail) {
        tail_acc += loss;
        ++tail_n;
      }
    }
    diag.loss = tail_n > 0 ? tail_acc / tail_n : 0.0;

    const MlpParams snapshot = slot.ema.shadow;
    DriftField drift = mlp_drift_field(snapshot);
    const Sampler start = odd ? cfg.upsilon : cfg.gamma;

    const Eigen::MatrixXd x0 = start(cfg.coupling_cache, endpoint_rng);
    double cost_sum = 0.0;
    const Eigen::MatrixXd terminal = euler_terminal(
        drift, sde, x0, cfg.euler_steps,
        mix64(cfg.seed ^ (kStreamEuler * 0x30003) ^ static_cast<std::uint64_t>(it)),
        cfg.deterministic_last_step, &cost_sum);
    diag.l_oc = cost_sum / cfg.coupling_cache;

    const Eigen::MatrixXd target_draw =
        odd ? cfg.gamma(cfg.coupling_cache, target_rng)
            : cfg.upsilon(cfg.coupling_cache, target_rng);
    const MomentErrs errs = terminal_moment_errors(terminal, target_draw);
    diag.terminal_mean_err = errs.mean_err;
    diag.terminal_var_err = errs.var_err;
    const CouplingSamples iterate_coupling =
        odd ? CouplingSamples{terminal, x0} : CouplingSamples{x0, terminal};
    diag.coupling_corr = correlation_1d(iterate_coupling);
    diag.wall_seconds = now_seconds() - t_start;

    result.models.push_back(snapshot);
    result.couplings.push_back(iterate_coupling);
    result.diagnostics.push_back(diag);

    prev_drift = drift;
    prev_start = start;
  }
  return result;
}

SgmResult run_sgm(const ProcedureConfig& cfg) {
  cfg.validate();
  ModelSlot slot = fresh_slot(cfg, 0x56);
  CounterRng batch_rng(cfg.seed, kStreamBatches, 1);
  const auto batch_maker = [&](CounterRng& rng) -> LossBatch {
    return make_sgm_batch(cfg.gamma, cfg.sde, cfg.batch_size, rng);
  };
  SgmResult result;
  result.model = fit_drift(batch_maker, slot.params, slot.opt, slot.ema,
                           cfg.sgd_steps, batch_rng, &result.trailing_loss);
  return result;
}

}  // namespace bridgelab
