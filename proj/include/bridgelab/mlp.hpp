#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace bridgelab {

// Fully-connected ReLU network mapping (x, t) -> R^d, with t appended to the
// input as a raw extra coordinate.
struct MlpSpec {
  int input_dim = 0;  // d + 1
  std::vector<int> hidden;
  int output_dim = 0;
  std::uint64_t init_seed = 0;

  static MlpSpec drift(int d, std::vector<int> hidden, std::uint64_t seed) {
    return MlpSpec{d + 1, std::move(hidden), d, seed};
  }
};

struct MlpParams {
  std::vector<Eigen::MatrixXd> w;  // out x in per layer
  std::vector<Eigen::VectorXd> b;

  int layers() const { return static_cast<int>(w.size()); }
  void set_zero();
  MlpParams zeros_like() const;
};

// He-uniform weights (variance 2 / fan_in), zero biases; deterministic per
// spec.init_seed.
MlpParams mlp_init(const MlpSpec& spec);

// Forward-pass activations retained for the matching backward call.
struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // layer inputs, inputs[0] = [x, t]
  bool valid = false;
};

Eigen::MatrixXd mlp_forward(const MlpParams& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& t,
                            MlpCache* cache = nullptr);

// Exact gradients of the scalar loss whose gradient with respect to the
// network output is loss_grads. Throws std::logic_error on a stale or
// mismatched cache.
MlpParams mlp_backward(const MlpParams& params, const MlpCache& cache,
                       const Eigen::Ref<const Eigen::MatrixXd>& loss_grads);

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& p, double lr = 1e-3);
};

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

struct EmaState {
  MlpParams shadow;
  double decay = 0.999;

  static EmaState for_params(const MlpParams& p, double decay = 0.999);
};

// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(EmaState& ema, const MlpParams& params);

// Checkpoint: "MLPV1", u32 layer count, per layer u32 rows/cols, then
// float64 weight and bias payloads.
void write_checkpoint(std::ostream& os, const MlpParams& p);
MlpParams read_checkpoint(std::istream& is);

}  // namespace bridgelab
