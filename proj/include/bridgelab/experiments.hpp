#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bridgelab/types.hpp"

namespace bridgelab {

// Configuration rejected before any computation.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exit codes of the experiment runner.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumerical = 3;

// Validates a parsed config document against the schema of its kind;
// unknown keys anywhere are rejected.
void validate_experiment_config(const nlohmann::json& config);

// Endpoint sampler from a config spec; kinds: gaussian, mixture1d, point,
// two_moons, two_rings.
Sampler make_sampler(const nlohmann::json& spec);
int sampler_dim(const nlohmann::json& spec);

// FNV-1a 64 content hash, hex-encoded; used for the run manifest.
std::string content_hash_hex(const std::string& bytes);

struct RunContext {
  nlohmann::json config;
  std::string config_bytes;  // raw document as hashed into the manifest
  std::uint64_t seed = 0;
  std::string out_dir;
};

void cmd_gauss1d(const RunContext& ctx);
void cmd_gaussnd(const RunContext& ctx);
void cmd_mixture1d(const RunContext& ctx);
void cmd_idbm(const RunContext& ctx);
void cmd_dipf(const RunContext& ctx);
void cmd_sgm_toy(const RunContext& ctx);
void cmd_sinkhorn_compare(const RunContext& ctx);

// Full runner: load config from path, apply overrides, dispatch; returns a
// process exit code instead of throwing. A non-empty expected_kind must
// match the config's kind.
int run_experiment(const std::string& config_path,
                   std::optional<std::uint64_t> seed_override,
                   const std::string& out_dir_override, bool dry_run,
                   const std::string& expected_kind = "");

}  // namespace bridgelab
