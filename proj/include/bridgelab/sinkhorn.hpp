#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace bridgelab {

// Discrete entropic optimal transport instance: marginals mu (m), nu (n),
// cost matrix (m x n), regularization eps > 0.
struct DiscreteEotProblem {
  Eigen::VectorXd mu;
  Eigen::VectorXd nu;
  Eigen::MatrixXd cost;
  double eps = 1.0;

  void validate() const;
};

struct DiscreteCoupling {
  Eigen::MatrixXd plan;
  Eigen::VectorXd f;  // dual potential on mu
  Eigen::VectorXd g;  // dual potential on nu
  int iterations = 0;
  double residual = 0.0;  // L1 marginal residual at exit
  std::vector<double> residual_history;  // one entry per full round
  bool converged = false;
};

// Log-domain Sinkhorn: alternating potential updates until the max marginal
// L1 residual drops below tol. Never exponentiates unstabilized kernels.
DiscreteCoupling sinkhorn_solve(const DiscreteEotProblem& problem,
                                double tol = 1e-9, int max_iter = 20000);

// Midpoint-rule mass per bin over a sorted grid of bin centers,
// renormalized to a probability vector.
Eigen::VectorXd discretize_density(const std::function<double(double)>& density,
                                   const Eigen::VectorXd& grid);

// Squared-distance cost |x_i - y_j|^2 over two grids.
Eigen::MatrixXd squared_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Correlation of the plan treated as a discrete joint law over (x, y).
double plan_correlation(const Eigen::MatrixXd& plan, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y);

}  // namespace bridgelab
