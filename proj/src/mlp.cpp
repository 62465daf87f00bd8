#include "bridgelab/mlp.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "bridgelab/rng.hpp"

namespace bridgelab {

void MlpParams::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out = *this;
  out.set_zero();
  return out;
}

MlpParams mlp_init(const MlpSpec& spec) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0)
    throw std::invalid_argument("mlp_init: bad dimensions");
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  for (int h : spec.hidden) {
    if (h <= 0) throw std::invalid_argument("mlp_init: bad hidden width");
    dims.push_back(h);
  }
  dims.push_back(spec.output_dim);

  CounterRng rng(spec.init_seed, 0x6d6c70ULL);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j)
        w(i, j) = limit * (2.0 * rng.uniform() - 1.0);
    p.w.push_back(std::move(w));
    p.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

Eigen::MatrixXd mlp_forward(const MlpParams& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& t,
                            MlpCache* cache) {
  const int layers = params.layers();
  if (layers == 0) throw std::invalid_argument("mlp_forward: empty network");
  if (x.rows() != t.size())
    throw std::invalid_argument("mlp_forward: batch size mismatch");
  if (x.cols() + 1 != params.w[0].cols())
    throw std::invalid_argument("mlp_forward: input width mismatch");

  Eigen::MatrixXd h(x.rows(), x.cols() + 1);
  h.leftCols(x.cols()) = x;
  h.col(x.cols()) = t;

  if (cache) {
    cache->inputs.clear();
    cache->inputs.reserve(layers);
  }
  for (int l = 0; l < layers; ++l) {
    if (cache) cache->inputs.push_back(h);
    h = (h * params.w[l].transpose()).rowwise() + params.b[l].transpose();
    if (l + 1 < layers) h = h.cwiseMax(0.0);
  }
  if (cache) cache->valid = true;
  return h;
}

MlpParams mlp_backward(const MlpParams& params, const MlpCache& cache,
                       const Eigen::Ref<const Eigen::MatrixXd>& loss_grads) {
  const int layers = params.layers();
  if (!cache.valid || static_cast<int>(cache.inputs.size()) != layers)
    throw std::logic_error("mlp_backward: stale or missing forward cache");
  if (cache.inputs[0].rows() != loss_grads.rows())
    throw std::logic_error("mlp_backward: cache/batch size mismatch");

  MlpParams grads = params.zeros_like();
  Eigen::MatrixXd delta = loss_grads;
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& in = cache.inputs[l];
    grads.w[l].noalias() = delta.transpose() * in;
    grads.b[l] = delta.colwise().sum();
    if (l > 0) {
      delta = delta * params.w[l];
      // ReLU mask: the input of layer l is the activated output of l-1.
      delta = ((in.array() > 0.0).cast<double>() * delta.array()).matrix();
    }
  }
  return grads;
}

AdamState AdamState::for_params(const MlpParams& p, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& w : p.w) {
    s.mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : p.b) {
    s.mb.push_back(Eigen::VectorXd::Zero(b.size()));
    s.vb.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return s;
}

namespace {

template <typename T>
void adam_update_one(T& param, const T& grad, T& m, T& v, double lr,
                     double b1, double b2, double eps, double bc1,
                     double bc2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
  param.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (int l = 0; l < params.layers(); ++l) {
    adam_update_one(params.w[l], grads.w[l], state.mw[l], state.vw[l],
                    state.lr, state.beta1, state.beta2, state.eps, bc1, bc2);
    adam_update_one(params.b[l], grads.b[l], state.mb[l], state.vb[l],
                    state.lr, state.beta1, state.beta2, state.eps, bc1, bc2);
  }
}

EmaState EmaState::for_params(const MlpParams& p, double decay) {
  return EmaState{p, decay};
}

void ema_update(EmaState& ema, const MlpParams& params) {
  const double d = ema.decay;
  for (int l = 0; l < params.layers(); ++l) {
    ema.shadow.w[l] = d * ema.shadow.w[l] + (1.0 - d) * params.w[l];
    ema.shadow.b[l] = d * ema.shadow.b[l] + (1.0 - d) * params.b[l];
  }
}

void write_checkpoint(std::ostream& os, const MlpParams& p) {
  os.write("MLPV1", 5);
  const std::uint32_t layers = static_cast<std::uint32_t>(p.layers());
  os.write(reinterpret_cast<const char*>(&layers), 4);
  for (const auto& w : p.w) {
    const std::uint32_t r = static_cast<std::uint32_t>(w.rows());
    const std::uint32_t c = static_cast<std::uint32_t>(w.cols());
    os.write(reinterpret_cast<const char*>(&r), 4);
    os.write(reinterpret_cast<const char*>(&c), 4);
  }
  for (std::uint32_t l = 0; l < layers; ++l) {
    for (Eigen::Index i = 0; i < p.w[l].rows(); ++i)
      for (Eigen::Index j = 0; j < p.w[l].cols(); ++j) {
        const double v = p.w[l](i, j);
        os.write(reinterpret_cast<const char*>(&v), 8);
      }
    for (Eigen::Index i = 0; i < p.b[l].size(); ++i) {
      const double v = p.b[l][i];
      os.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

MlpParams read_checkpoint(std::istream& is) {
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, "MLPV1", 5) != 0)
    throw std::runtime_error("read_checkpoint: bad magic");
  std::uint32_t layers = 0;
  is.read(reinterpret_cast<char*>(&layers), 4);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layers);
  for (auto& s : shapes) {
    is.read(reinterpret_cast<char*>(&s.first), 4);
    is.read(reinterpret_cast<char*>(&s.second), 4);
  }
  if (!is) throw std::runtime_error("read_checkpoint: bad shape table");
  MlpParams p;
  for (const auto& s : shapes) {
    Eigen::MatrixXd w(s.first, s.second);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        is.read(reinterpret_cast<char*>(&w(i, j)), 8);
    Eigen::VectorXd b(s.first);
    for (Eigen::Index i = 0; i < b.size(); ++i)
      is.read(reinterpret_cast<char*>(&b[i]), 8);
    p.w.push_back(std::move(w));
    p.b.push_back(std::move(b));
  }
  if (!is) throw std::runtime_error("read_checkpoint: truncated payload");
  return p;
}

}  // namespace bridgelab
