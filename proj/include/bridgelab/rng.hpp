#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace bridgelab {

// SplitMix64 finalizer. Bijective on 64-bit words with full avalanche, which
// makes it usable as a counter-based generator: hash a (key, counter) pair
// and the output sequence is a high-quality stream.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double to_unit_interval(std::uint64_t u) {
  // Top 53 bits -> double in (0,1); offset by half an ulp so 0 is excluded.
  return (static_cast<double>(u >> 11) + 0.5) * 0x1.0p-53;
}

// Counter-based RNG stream. A stream is identified by up to three 64-bit
// key words (e.g. run seed, path index, step index); draws are pure
// functions of (key, counter), so parallel layouts cannot change output.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ (0xd1342543de82ef95ULL * stream + 1))) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream)
      : key_(mix64(mix64(mix64(seed) ^ (0xd1342543de82ef95ULL * stream + 1)) ^
                   (0xaf251af3b0f025b5ULL * substream + 1))) {}

  std::uint64_t next_u64() { return mix64(key_ ^ counter_++); }

  double uniform() { return to_unit_interval(next_u64()); }

  // Box-Muller; the spare draw is cached so consecutive calls cost one
  // transform per two variates.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  // Index in [0, n).
  std::int64_t uniform_index(std::int64_t n) {
    return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bridgelab
