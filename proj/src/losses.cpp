#include "bridgelab/losses.hpp"

#include <stdexcept>

namespace bridgelab {

LossBatch make_sgm_batch(const Sampler& gamma_sampler, const LinearRefSde& sde,
                         int n, CounterRng& rng) {
  LossBatch batch;
  batch.x_t.resize(n, sde.dim());
  batch.t.resize(n);
  batch.target.resize(n, sde.dim());
  batch.weight.resize(n);

  const Eigen::MatrixXd x0 = gamma_sampler(n, rng);
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform() * sde.tau();
    const TransitionMoments m = transition_moments(sde, 0.0, t);
    const Eigen::VectorXd z = rng.normal_vector(sde.dim());
    Eigen::VectorXd x_t = m.a * x0.row(i).transpose();
    if (sde.sigma_is_scalar())
      x_t += std::sqrt(m.v * sde.sigma_scalar()) * z;
    else
      x_t += std::sqrt(m.v) * (sde.sigma_chol() * z);
    batch.x_t.row(i) = x_t;
    batch.t[i] = t;
    batch.target.row(i) =
        sde.sigma_inv_apply((m.a * x0.row(i).transpose() - x_t) / m.v);
    batch.weight[i] = m.v;
  }
  return batch;
}

namespace {

enum class BridgeTarget { BackwardScore, ForwardScore, Slope };

LossBatch make_bridge_batch(const CouplingSamples& coupling,
                            const LinearRefSde& sde, int n, CounterRng& rng,
                            double t_max, BridgeTarget kind) {
  coupling.validate();
  if (!(t_max > 0.0 && t_max <= sde.tau()))
    throw std::invalid_argument("bridge batch: t_max must lie in (0, tau]");

  LossBatch batch;
  batch.x_t.resize(n, sde.dim());
  batch.t.resize(n);
  batch.target.resize(n, sde.dim());
  batch.weight.resize(n);

  for (int i = 0; i < n; ++i) {
    const std::int64_t row = rng.uniform_index(coupling.size());
    const Eigen::VectorXd x0 = coupling.x0.row(row);
    const Eigen::VectorXd x_end = coupling.x_end.row(row);
    const double t = rng.uniform() * t_max;
    const Eigen::VectorXd x_t = sample_bridge_point(sde, x0, x_end, t, rng);
    batch.x_t.row(i) = x_t;
    batch.t[i] = t;
    switch (kind) {
      case BridgeTarget::BackwardScore: {
        batch.target.row(i) = score_backward(sde, 0.0, t, x0, x_t);
        batch.weight[i] = transition_moments(sde, 0.0, t).v;
        break;
      }
      case BridgeTarget::ForwardScore: {
        batch.target.row(i) = score_forward(sde, t, sde.tau(), x_t, x_end);
        batch.weight[i] = transition_moments(sde, t, sde.tau()).v;
        break;
      }
      case BridgeTarget::Slope: {
        batch.target.row(i) = (x_end - x_t) / (sde.tau() - t);
        batch.weight[i] = 1.0;
        break;
      }
    }
  }
  return batch;
}

}  // namespace

LossBatch make_bdbm_batch(const CouplingSamples& coupling,
                          const LinearRefSde& sde, int n, CounterRng& rng,
                          double t_max) {
  return make_bridge_batch(coupling, sde, n, rng, t_max,
                           BridgeTarget::BackwardScore);
}

LossBatch make_dbm_batch(const CouplingSamples& coupling,
                         const LinearRefSde& sde, int n, CounterRng& rng,
                         double t_max) {
  return make_bridge_batch(coupling, sde, n, rng, t_max,
                           BridgeTarget::ForwardScore);
}

LossBatch make_rf_batch(const CouplingSamples& coupling,
                        const LinearRefSde& sde, int n, CounterRng& rng,
                        double t_max) {
  return make_bridge_batch(coupling, sde, n, rng, t_max, BridgeTarget::Slope);
}

LossBatch make_drift_matching_batch(const PathBatch& paths, int n,
                                    CounterRng& rng) {
  if (paths.n_paths() == 0 || paths.n_times() < 2)
    throw std::invalid_argument("drift-matching batch: empty path batch");

  LossBatch batch;
  batch.x_t.resize(n, paths.dim());
  batch.t.resize(n);
  batch.target.resize(n, paths.dim());
  batch.weight = Eigen::VectorXd::Ones(n);

  const int m = paths.n_times() - 1;
  for (int i = 0; i < n; ++i) {
    const std::int64_t p = rng.uniform_index(paths.n_paths());
    const std::int64_t s = rng.uniform_index(m);
    batch.x_t.row(i) = paths.values[s].row(p);
    batch.t[i] = paths.times[s];
    batch.target.row(i) =
        (paths.values[s + 1].row(p) - paths.values[s].row(p)) / paths.dt;
  }
  return batch;
}

double weighted_mse(const Eigen::Ref<const Eigen::MatrixXd>& pred,
                    const LossBatch& batch, Eigen::MatrixXd* grad) {
  if (pred.rows() != batch.target.rows() || pred.cols() != batch.target.cols())
    throw std::invalid_argument("weighted_mse: shape mismatch");
  const int n = batch.size();
  const Eigen::MatrixXd diff = pred - batch.target;
  const double loss =
      (diff.array().square().rowwise().sum() * batch.weight.array()).sum() / n;
  if (grad)
    *grad = (2.0 / n) * (diff.array().colwise() * batch.weight.array()).matrix();
  return loss;
}

}  // namespace bridgelab
