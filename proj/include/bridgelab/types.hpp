#pragma once

#include <Eigen/Dense>
#include <functional>

#include "bridgelab/rng.hpp"

namespace bridgelab {

enum class Direction { Forward, Backward };

// Batch drift evaluator: (n x d points, time) -> n x d drifts. Must be pure
// and deterministic for a fixed parameter state so concurrent read-only use
// is safe.
using DriftField =
    std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>&, double)>;

// Endpoint sampler: n -> n x d draws using the supplied stream.
using Sampler = std::function<Eigen::MatrixXd(int, CounterRng&)>;

// Paired endpoint samples representing an empirical coupling.
struct CouplingSamples {
  Eigen::MatrixXd x0;     // n x d
  Eigen::MatrixXd x_end;  // n x d

  int size() const { return static_cast<int>(x0.rows()); }
  int dim() const { return static_cast<int>(x0.cols()); }
  void validate() const;
  CouplingSamples reversed() const { return CouplingSamples{x_end, x0}; }
};

}  // namespace bridgelab
