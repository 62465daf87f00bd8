#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bridgelab {

// Simulation state left the admissible range (|value| > divergence threshold
// or non-finite). Carries the Euler step at which it happened.
class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(std::int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// Numerical failure inside an ODE integration, carrying the failing time.
class OdeFailure : public std::runtime_error {
 public:
  OdeFailure(double t, const std::string& what)
      : std::runtime_error(what), t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

}  // namespace bridgelab
