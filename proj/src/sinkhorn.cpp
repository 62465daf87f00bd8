#include "bridgelab/sinkhorn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bridgelab {

void DiscreteEotProblem::validate() const {
  if (mu.size() != cost.rows() || nu.size() != cost.cols())
    throw std::invalid_argument("eot problem: marginal/cost shape mismatch");
  if (eps <= 0.0) throw std::invalid_argument("eot problem: eps must be > 0");
  if ((mu.array() < 0.0).any() || (nu.array() < 0.0).any())
    throw std::invalid_argument("eot problem: negative marginal weights");
  if (std::abs(mu.sum() - 1.0) > 1e-9 || std::abs(nu.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("eot problem: marginals must sum to 1");
  if (!cost.allFinite())
    throw std::invalid_argument("eot problem: non-finite cost");
}

namespace {

double logsumexp_arr(const Eigen::ArrayXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf: empty bins only
  return m + std::log((v - m).exp().sum());
}

// One potential sweep: out[i] = -eps * LSE_j((other[j] - cost(i,j))/eps
// + log_w[j]); `rowwise` selects whether i indexes rows or columns of cost.
void potential_sweep(const Eigen::MatrixXd& cost, const Eigen::ArrayXd& other,
                     const Eigen::ArrayXd& log_w, double eps, bool rowwise,
                     Eigen::VectorXd& out) {
  const int n = static_cast<int>(out.size());
#pragma omp parallel
  {
    Eigen::ArrayXd scratch(other.size());
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      if (rowwise)
        scratch = (other - cost.row(i).transpose().array()) / eps + log_w;
      else
        scratch = (other - cost.col(i).array()) / eps + log_w;
      out[i] = -eps * logsumexp_arr(scratch);
    }
  }
}

}  // namespace

DiscreteCoupling sinkhorn_solve(const DiscreteEotProblem& problem, double tol,
                                int max_iter) {
  problem.validate();
  const int m = static_cast<int>(problem.mu.size());
  const int n = static_cast<int>(problem.nu.size());
  const double eps = problem.eps;

  const Eigen::ArrayXd log_mu = problem.mu.array().log();
  const Eigen::ArrayXd log_nu = problem.nu.array().log();

  Eigen::VectorXd f(m), g(n), f_next(m);

  // First full round from g = 0.
  potential_sweep(problem.cost, Eigen::ArrayXd::Zero(n), log_nu, eps, true, f);
  potential_sweep(problem.cost, f.array(), log_mu, eps, false, g);

  DiscreteCoupling out;
  out.iterations = 1;
  while (true) {
    // After a g-update the columns are exact and the row sums equal
    // mu_i * exp((f_i - f'_i)/eps), with f' the next f-sweep. The marginal
    // residual therefore costs O(m) given f'.
    potential_sweep(problem.cost, g.array(), log_nu, eps, true, f_next);
    out.residual =
        (problem.mu.array() * ((f - f_next).array() / eps).exp() -
         problem.mu.array())
            .abs()
            .sum();
    out.residual_history.push_back(out.residual);
    if (out.residual <= tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= max_iter) {
      out.converged = false;
      break;
    }
    f = f_next;
    potential_sweep(problem.cost, f.array(), log_mu, eps, false, g);
    ++out.iterations;
  }

  out.plan.resize(m, n);
  for (int i = 0; i < m; ++i)
    out.plan.row(i) = ((f[i] + g.array() - problem.cost.row(i).transpose().array()) / eps +
                       log_mu[i] + log_nu)
                          .exp();
  out.f = f;
  out.g = g;
  return out;
}

Eigen::VectorXd discretize_density(const std::function<double(double)>& density,
                                   const Eigen::VectorXd& grid) {
  const int n = static_cast<int>(grid.size());
  if (n < 2) throw std::invalid_argument("discretize_density: need >= 2 bins");
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = density(grid[i]);
  if ((w.array() < 0.0).any())
    throw std::invalid_argument("discretize_density: negative density");
  const double total = w.sum();
  if (total <= 0.0)
    throw std::invalid_argument("discretize_density: zero total mass");
  return w / total;
}

Eigen::MatrixXd squared_cost(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y) {
  Eigen::MatrixXd c(x.size(), y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    c.row(i) = (y.array() - x[i]).square();
  return c;
}

double plan_correlation(const Eigen::MatrixXd& plan, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
  const Eigen::VectorXd row = plan.rowwise().sum();
  const Eigen::VectorXd col = plan.colwise().sum();
  const double mx = row.dot(x);
  const double my = col.dot(y);
  const double vx = row.dot((x.array() - mx).square().matrix());
  const double vy = col.dot((y.array() - my).square().matrix());
  const double cov = x.transpose() * plan * y;
  return (cov - mx * my) / std::sqrt(vx * vy);
}

}  // namespace bridgelab
