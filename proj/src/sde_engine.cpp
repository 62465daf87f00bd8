#include "bridgelab/sde_engine.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "bridgelab/errors.hpp"

namespace bridgelab {

namespace {

constexpr double kDivergedThreshold = 1e12;

void fill_step_noise(Eigen::MatrixXd& z, std::uint64_t seed, int step) {
  const int n = static_cast<int>(z.rows());
  const int d = static_cast<int>(z.cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i),
                   static_cast<std::uint64_t>(step));
    for (int j = 0; j < d; ++j) z(i, j) = rng.normal();
  }
}

void add_noise(Eigen::MatrixXd& state, const Eigen::MatrixXd& z,
               const LinearRefSde& sde, double beta_t, double dt) {
  const double scale = std::sqrt(beta_t * dt);
  if (sde.sigma_is_scalar())
    state.noalias() += (scale * std::sqrt(sde.sigma_scalar())) * z;
  else
    state.noalias() += scale * (z * sde.sigma_chol().transpose());
}

void check_state(const Eigen::MatrixXd& state, int step) {
  if (!state.allFinite() || state.cwiseAbs().maxCoeff() > kDivergedThreshold)
    throw SimulationDiverged(step, "euler_simulate: state diverged at step " +
                                       std::to_string(step));
}

// Row-wise ||u||^2 under Sigma_R^{-1} = Sigma^{-1} / beta_t.
double weighted_sq_norm_sum(const Eigen::MatrixXd& u, const LinearRefSde& sde,
                            double beta_t) {
  if (sde.sigma_is_scalar())
    return u.squaredNorm() / (sde.sigma_scalar() * beta_t);
  const Eigen::MatrixXd solved =
      sde.sigma_chol().triangularView<Eigen::Lower>().solve(u.transpose());
  return solved.squaredNorm() / beta_t;
}

}  // namespace

void CouplingSamples::validate() const {
  if (x0.rows() != x_end.rows() || x0.cols() != x_end.cols())
    throw std::invalid_argument("coupling samples: shape mismatch");
  if (x0.rows() == 0) throw std::invalid_argument("coupling samples: empty");
  if (!x0.allFinite() || !x_end.allFinite())
    throw std::invalid_argument("coupling samples: non-finite entries");
}

PathBatch euler_simulate(const DriftField& drift, const LinearRefSde& sde,
                         const Eigen::Ref<const Eigen::MatrixXd>& x0,
                         int m_steps, std::uint64_t seed,
                         bool deterministic_last_step) {
  if (m_steps < 1) throw std::invalid_argument("euler_simulate: m_steps < 1");
  const int n = static_cast<int>(x0.rows());
  const int d = static_cast<int>(x0.cols());
  const double dt = sde.tau() / m_steps;

  PathBatch out;
  out.dt = dt;
  out.times.resize(m_steps + 1);
  out.values.reserve(m_steps + 1);
  out.values.push_back(x0);

  Eigen::MatrixXd state = x0;
  Eigen::MatrixXd z(n, d);
  for (int s = 0; s < m_steps; ++s) {
    const double t = s * dt;
    out.times[s] = t;
    state += drift(state, t) * dt;
    const bool last = (s == m_steps - 1);
    if (!(last && deterministic_last_step)) {
      fill_step_noise(z, seed, s);
      add_noise(state, z, sde, sde.beta(t), dt);
    }
    check_state(state, s);
    out.values.push_back(state);
  }
  out.times[m_steps] = sde.tau();
  return out;
}

Eigen::MatrixXd euler_terminal(const DriftField& drift, const LinearRefSde& sde,
                               const Eigen::Ref<const Eigen::MatrixXd>& x0,
                               int m_steps, std::uint64_t seed,
                               bool deterministic_last_step,
                               double* control_cost_sum) {
  if (m_steps < 1) throw std::invalid_argument("euler_terminal: m_steps < 1");
  const int n = static_cast<int>(x0.rows());
  const int d = static_cast<int>(x0.cols());
  const double dt = sde.tau() / m_steps;

  Eigen::MatrixXd state = x0;
  Eigen::MatrixXd z(n, d);
  double cost = 0.0;
  for (int s = 0; s < m_steps; ++s) {
    const double t = s * dt;
    const double beta_t = sde.beta(t);
    const Eigen::MatrixXd mu = drift(state, t);
    if (control_cost_sum) {
      // Adjustment relative to the reference drift -alpha beta_t x.
      const Eigen::MatrixXd u = mu + sde.alpha() * beta_t * state;
      cost += weighted_sq_norm_sum(u, sde, beta_t) * dt;
    }
    state += mu * dt;
    const bool last = (s == m_steps - 1);
    if (!(last && deterministic_last_step)) {
      fill_step_noise(z, seed, s);
      add_noise(state, z, sde, beta_t, dt);
    }
    check_state(state, s);
  }
  if (control_cost_sum) *control_cost_sum = cost;
  return state;
}

Eigen::MatrixXd sample_bridge_batch(const CouplingSamples& c,
                                    const LinearRefSde& sde,
                                    const Eigen::Ref<const Eigen::VectorXd>& t_batch,
                                    CounterRng& rng) {
  c.validate();
  const int n = c.size();
  if (t_batch.size() != n)
    throw std::invalid_argument("sample_bridge_batch: one time per row required");
  Eigen::MatrixXd out(n, c.dim());
  for (int i = 0; i < n; ++i)
    out.row(i) = sample_bridge_point(sde, c.x0.row(i), c.x_end.row(i),
                                     t_batch[i], rng)
                     .transpose();
  return out;
}

PathBatch reverse_paths(const PathBatch& p) {
  PathBatch out;
  out.times = p.times;
  out.dt = p.dt;
  out.values.assign(p.values.rbegin(), p.values.rend());
  return out;
}

double drift_norm_functional(const DriftField& u, const PathBatch& p,
                             const LinearRefSde& sde) {
  const int m = p.n_times() - 1;
  const int n = p.n_paths();
  double acc = 0.0;
  for (int s = 0; s < m; ++s) {
    const double t = p.times[s];
    const Eigen::MatrixXd us = u(p.values[s], t);
    acc += weighted_sq_norm_sum(us, sde, sde.beta(t)) * p.dt;
  }
  return acc / n;
}

double girsanov_log_ratio(const PathBatch& p, int path, const DriftField& mu,
                          const DriftField& gamma, const LinearRefSde& sde) {
  if (path < 0 || path >= p.n_paths())
    throw std::invalid_argument("girsanov_log_ratio: path index out of range");
  const int m = p.n_times() - 1;
  double acc = 0.0;
  for (int s = 0; s < m; ++s) {
    const double t = p.times[s];
    const Eigen::MatrixXd x = p.values[s].row(path);
    const Eigen::VectorXd mu_t = mu(x, t).row(0);
    const Eigen::VectorXd ga_t = gamma(x, t).row(0);
    const Eigen::VectorXd diff_w =
        sde.sigma_inv_apply(mu_t - ga_t) / sde.beta(t);
    const Eigen::VectorXd dx =
        (p.values[s + 1].row(path) - p.values[s].row(path)).transpose();
    acc += diff_w.dot(dx) - 0.5 * diff_w.dot(mu_t + ga_t) * p.dt;
  }
  return acc;
}

Eigen::MatrixXd terminal_estimator(const DriftField& prediction,
                                   const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                   double t, const LinearRefSde& sde) {
  if (t >= sde.tau())
    throw std::domain_error("terminal_estimator: t >= tau");
  return x_t + (sde.tau() - t) * prediction(x_t, t);
}

void write_pathbatch(std::ostream& os, const PathBatch& p) {
  const std::uint32_t n = static_cast<std::uint32_t>(p.n_paths());
  const std::uint32_t m1 = static_cast<std::uint32_t>(p.n_times());
  const std::uint32_t d = static_cast<std::uint32_t>(p.dim());
  os.write("PBV1", 4);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&m1), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t s = 0; s < m1; ++s)
      for (std::uint32_t j = 0; j < d; ++j) {
        const double v = p.values[s](i, j);
        os.write(reinterpret_cast<const char*>(&v), 8);
      }
}

PathBatch read_pathbatch(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PBV1", 4) != 0)
    throw std::runtime_error("read_pathbatch: bad magic");
  std::uint32_t n = 0, m1 = 0, d = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  is.read(reinterpret_cast<char*>(&m1), 4);
  is.read(reinterpret_cast<char*>(&d), 4);
  if (!is || m1 == 0) throw std::runtime_error("read_pathbatch: bad header");
  PathBatch p;
  // The format stores values only; times are reconstructed on a unit grid.
  p.dt = m1 > 1 ? 1.0 / (m1 - 1) : 0.0;
  p.times.resize(m1);
  for (std::uint32_t s = 0; s < m1; ++s) p.times[s] = s * p.dt;
  p.values.assign(m1, Eigen::MatrixXd(n, d));
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t s = 0; s < m1; ++s)
      for (std::uint32_t j = 0; j < d; ++j) {
        double v;
        is.read(reinterpret_cast<char*>(&v), 8);
        p.values[s](i, j) = v;
      }
  if (!is) throw std::runtime_error("read_pathbatch: truncated payload");
  return p;
}

void write_pathbatch_csv(std::ostream& os, const PathBatch& p) {
  os << "path,t";
  for (int j = 0; j < p.dim(); ++j) os << ",x" << j;
  os << "\n";
  os.precision(17);
  for (int i = 0; i < p.n_paths(); ++i)
    for (int s = 0; s < p.n_times(); ++s) {
      os << i << "," << p.times[s];
      for (int j = 0; j < p.dim(); ++j) os << "," << p.values[s](i, j);
      os << "\n";
    }
}

}  // namespace bridgelab
