#include "bridgelab/experiments.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <vector>

#include "bridgelab/errors.hpp"
#include "bridgelab/gaussian_bridge.hpp"
#include "bridgelab/metrics.hpp"
#include "bridgelab/mixture.hpp"
#include "bridgelab/procedures.hpp"
#include "bridgelab/sinkhorn.hpp"

namespace bridgelab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config --

void check_keys(const json& j, const std::string& ctx,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
}

double num_or(const json& j, const std::string& key, double dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_number()) throw ConfigError("'" + key + "' must be a number");
  return j.at(key).get<double>();
}

int int_or(const json& j, const std::string& key, int dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_number_integer())
    throw ConfigError("'" + key + "' must be an integer");
  return j.at(key).get<int>();
}

bool bool_or(const json& j, const std::string& key, bool dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_boolean()) throw ConfigError("'" + key + "' must be a bool");
  return j.at(key).get<bool>();
}

std::string str_or(const json& j, const std::string& key,
                   const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_string()) throw ConfigError("'" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::vector<double> nums_or(const json& j, const std::string& key,
                            std::vector<double> dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) throw ConfigError("'" + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> ints_or(const json& j, const std::string& key,
                         std::vector<int> dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<int> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number_integer())
      throw ConfigError("'" + key + "' must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

Eigen::VectorXd to_evec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

const std::set<std::string> kSamplerKeys = {"kind",  "mean", "var",  "cov_diag",
                                            "weights", "means", "sds", "at",
                                            "noise", "scale", "radii"};

void validate_sampler_spec(const json& spec, const std::string& ctx) {
  check_keys(spec, ctx, kSamplerKeys);
  const std::string kind = str_or(spec, "kind", "");
  static const std::set<std::string> kinds = {"gaussian", "mixture1d", "point",
                                              "two_moons", "two_rings"};
  if (!kinds.count(kind))
    throw ConfigError(ctx + ": unknown sampler kind '" + kind + "'");
}

const std::set<std::string> kSdeKeys = {"dim", "alpha", "sigma2", "cov_diag",
                                        "beta", "tau"};
const std::set<std::string> kBetaKeys = {"kind", "c", "sigma_min", "sigma_max"};

void validate_sde_spec(const json& spec, const std::string& ctx) {
  check_keys(spec, ctx, kSdeKeys);
  if (spec.contains("beta")) {
    check_keys(spec.at("beta"), ctx + ".beta", kBetaKeys);
    const std::string kind = str_or(spec.at("beta"), "kind", "constant");
    if (kind != "constant" && kind != "ve")
      throw ConfigError(ctx + ".beta: unknown kind '" + kind + "'");
  }
}

LinearRefSde sde_from_spec(const json& spec) {
  const int dim = int_or(spec, "dim", 1);
  const double alpha = num_or(spec, "alpha", 0.0);
  const double tau = num_or(spec, "tau", 1.0);
  BetaSchedule beta = BetaSchedule::constant(1.0);
  if (spec.contains("beta")) {
    const json& b = spec.at("beta");
    const std::string kind = str_or(b, "kind", "constant");
    beta = kind == "constant"
               ? BetaSchedule::constant(num_or(b, "c", 1.0))
               : BetaSchedule::ve(num_or(b, "sigma_min", 0.01),
                                  num_or(b, "sigma_max", 50.0));
  }
  if (spec.contains("cov_diag")) {
    const Eigen::VectorXd d = to_evec(nums_or(spec, "cov_diag", {}));
    if (d.size() != dim) throw ConfigError("sde.cov_diag: wrong length");
    return LinearRefSde(alpha, d.asDiagonal(), beta, tau);
  }
  return LinearRefSde::isotropic(dim, alpha, num_or(spec, "sigma2", 1.0), beta,
                                 tau);
}

const std::set<std::string> kProcedureKeys = {
    "sde",           "gamma",        "upsilon",
    "n_iterations",  "sgd_steps",    "batch_size",
    "euler_steps",   "coupling_cache", "policy",
    "convention",    "hidden",       "lr",
    "beta1",         "beta2",        "eps",
    "ema_decay",     "warm_start",   "deterministic_last_step",
    "slope_t_max",   "dipf_cache_paths", "dipf_cache_refresh",
    "n_generate",    "generate_steps"};

void validate_params(const std::string& kind, const json& params) {
  const std::string ctx = "params (" + kind + ")";
  if (kind == "gauss1d") {
    check_keys(params, ctx,
               {"mu0", "mu1", "var0", "var1", "sigmas", "rho0s", "iterations"});
  } else if (kind == "gaussnd") {
    check_keys(params, ctx,
               {"dims", "sigmas", "n_scenarios", "iterations", "wishart_scale"});
  } else if (kind == "mixture1d") {
    check_keys(params, ctx,
               {"sigma", "gamma", "upsilon", "n_paths", "euler_steps",
                "sgd_steps", "batch_size", "hidden", "lr", "ema_decay",
                "convention", "grid", "tv_bins", "tv_range", "sinkhorn",
                "density_grid"});
    if (params.contains("gamma"))
      check_keys(params.at("gamma"), ctx + ".gamma", {"weights", "means", "sds"});
    if (params.contains("upsilon"))
      check_keys(params.at("upsilon"), ctx + ".upsilon", {"mean", "sd"});
    if (params.contains("grid"))
      check_keys(params.at("grid"), ctx + ".grid", {"nx", "nt", "x_min", "x_max"});
    if (params.contains("sinkhorn"))
      check_keys(params.at("sinkhorn"), ctx + ".sinkhorn",
                 {"enabled", "bins", "range", "tol", "max_iter"});
  } else if (kind == "idbm_run" || kind == "dipf_run" || kind == "sgm_toy") {
    check_keys(params, ctx, kProcedureKeys);
    if (params.contains("sde")) validate_sde_spec(params.at("sde"), ctx + ".sde");
    if (params.contains("gamma"))
      validate_sampler_spec(params.at("gamma"), ctx + ".gamma");
    if (params.contains("upsilon"))
      validate_sampler_spec(params.at("upsilon"), ctx + ".upsilon");
  } else if (kind == "sinkhorn_compare") {
    check_keys(params, ctx,
               {"bins", "range", "sigmas", "mean0", "mean1", "var0", "var1",
                "tol", "max_iter"});
  } else {
    throw ConfigError("unknown experiment kind '" + kind + "'");
  }
}

// ------------------------------------------------------------------- io --

std::string float_str(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class CsvWriter {
 public:
  CsvWriter(const std::string& dir, const std::string& name,
            std::vector<std::string>& outputs)
      : path_(fs::path(dir) / name) {
    os_.open(path_);
    if (!os_) throw IoError("cannot open for writing: " + path_.string());
    os_ << std::setprecision(17);
    outputs.push_back(name);
  }

  template <typename... Ts>
  void row(const Ts&... vs) {
    bool first = true;
    ((os_ << (first ? "" : ",") << vs, first = false), ...);
    os_ << "\n";
  }

  std::ostream& stream() { return os_; }

  ~CsvWriter() { os_.flush(); }

 private:
  fs::path path_;
  std::ofstream os_;
};

void write_manifest(const RunContext& ctx,
                    const std::vector<std::string>& outputs) {
  json m;
  m["schema"] = 1;
  m["kind"] = ctx.config.at("kind");
  m["seed"] = ctx.seed;
  m["config_hash"] = content_hash_hex(ctx.config_bytes);
  m["outputs"] = outputs;
  const fs::path p = fs::path(ctx.out_dir) / "manifest.json";
  std::ofstream os(p);
  if (!os) throw IoError("cannot write manifest: " + p.string());
  os << m.dump(2) << "\n";
}

// ------------------------------------------------------------- samplers --

Eigen::MatrixXd sample_two_moons(int n, double noise, double scale,
                                 CounterRng& rng) {
  Eigen::MatrixXd out(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform() * M_PI;
    double x, y;
    if (rng.uniform() < 0.5) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    out(i, 0) = scale * (x - 0.5) + noise * rng.normal();
    out(i, 1) = scale * (y - 0.25) + noise * rng.normal();
  }
  return out;
}

Eigen::MatrixXd sample_two_rings(int n, double r0, double r1, double noise,
                                 CounterRng& rng) {
  Eigen::MatrixXd out(n, 2);
  for (int i = 0; i < n; ++i) {
    const double r = rng.uniform() < 0.5 ? r0 : r1;
    const double a = rng.uniform() * 2.0 * M_PI;
    out(i, 0) = r * std::cos(a) + noise * rng.normal();
    out(i, 1) = r * std::sin(a) + noise * rng.normal();
  }
  return out;
}

GaussianMixture mixture_from_spec(const json& spec) {
  GaussianMixture gm;
  gm.weights = to_evec(nums_or(spec, "weights", {}));
  const std::vector<double> means = nums_or(spec, "means", {});
  const std::vector<double> sds = nums_or(spec, "sds", {});
  if (gm.weights.size() == 0 ||
      means.size() != static_cast<std::size_t>(gm.weights.size()) ||
      sds.size() != means.size())
    throw ConfigError("mixture1d sampler: weights/means/sds lengths differ");
  gm.means = to_evec(means);
  gm.vars = to_evec(sds).array().square();
  gm.validate();
  return gm;
}

}  // namespace

int sampler_dim(const json& spec) {
  const std::string kind = str_or(spec, "kind", "");
  if (kind == "gaussian") return static_cast<int>(nums_or(spec, "mean", {0.0}).size());
  if (kind == "point") return static_cast<int>(nums_or(spec, "at", {0.0}).size());
  if (kind == "mixture1d") return 1;
  return 2;  // two_moons, two_rings
}

Sampler make_sampler(const json& spec) {
  validate_sampler_spec(spec, "sampler");
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "gaussian") {
    const Eigen::VectorXd mean = to_evec(nums_or(spec, "mean", {0.0}));
    Eigen::VectorXd sd;
    if (spec.contains("cov_diag")) {
      sd = to_evec(nums_or(spec, "cov_diag", {})).array().sqrt();
      if (sd.size() != mean.size())
        throw ConfigError("gaussian sampler: cov_diag length mismatch");
    } else {
      sd = Eigen::VectorXd::Constant(mean.size(),
                                     std::sqrt(num_or(spec, "var", 1.0)));
    }
    return [mean, sd](int n, CounterRng& rng) {
      Eigen::MatrixXd z = rng.normal_matrix(n, mean.size());
      return Eigen::MatrixXd((z.array().rowwise() * sd.transpose().array())
                                 .rowwise() +
                             mean.transpose().array());
    };
  }
  if (kind == "point") {
    const Eigen::VectorXd at = to_evec(nums_or(spec, "at", {0.0}));
    return [at](int n, CounterRng&) {
      return Eigen::MatrixXd(at.transpose().replicate(n, 1));
    };
  }
  if (kind == "mixture1d") {
    const GaussianMixture gm = mixture_from_spec(spec);
    return [gm](int n, CounterRng& rng) { return gm.sample(n, rng); };
  }
  if (kind == "two_moons") {
    const double noise = num_or(spec, "noise", 0.05);
    const double scale = num_or(spec, "scale", 1.0);
    return [noise, scale](int n, CounterRng& rng) {
      return sample_two_moons(n, noise, scale, rng);
    };
  }
  // two_rings
  const std::vector<double> radii = nums_or(spec, "radii", {0.5, 1.0});
  if (radii.size() != 2) throw ConfigError("two_rings sampler: need 2 radii");
  const double noise = num_or(spec, "noise", 0.05);
  return [radii, noise](int n, CounterRng& rng) {
    return sample_two_rings(n, radii[0], radii[1], noise, rng);
  };
}

std::string content_hash_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void validate_experiment_config(const json& config) {
  check_keys(config, "config", {"schema", "kind", "seed", "out_dir", "params"});
  if (!config.contains("schema") || !config.at("schema").is_number_integer() ||
      config.at("schema").get<int>() != 1)
    throw ConfigError("config: missing or unsupported 'schema' (expected 1)");
  if (!config.contains("kind") || !config.at("kind").is_string())
    throw ConfigError("config: missing 'kind'");
  if (config.contains("seed") && !config.at("seed").is_number_integer())
    throw ConfigError("config: 'seed' must be an integer");
  validate_params(config.at("kind").get<std::string>(),
                  config.value("params", json::object()));
}

// ---------------------------------------------------------------- gauss --

void cmd_gauss1d(const RunContext& ctx) {
  const json params = ctx.config.value("params", json::object());
  const double mu0 = num_or(params, "mu0", -1.0);
  const double mu1 = num_or(params, "mu1", 1.0);
  const double var0 = num_or(params, "var0", 1.0);
  const double var1 = num_or(params, "var1", 1.0);
  const std::vector<double> sigmas =
      nums_or(params, "sigmas", {0.01, 0.1, 1.0, 10.0, 100.0});
  const std::vector<double> rho0s = nums_or(params, "rho0s", {0.0, -1.0, 1.0});
  const int iters = int_or(params, "iterations", 20);

  const GaussianDist gamma{Eigen::VectorXd::Constant(1, mu0),
                           Eigen::MatrixXd::Constant(1, 1, var0)};
  const GaussianDist upsilon{Eigen::VectorXd::Constant(1, mu1),
                             Eigen::MatrixXd::Constant(1, 1, var1)};
  const double sd0 = std::sqrt(var0);
  const double sd1 = std::sqrt(var1);

  std::vector<std::string> outputs;
  CsvWriter csv(ctx.out_dir, "gauss1d_kl.csv", outputs);
  csv.row("procedure", "sigma", "rho_c0", "iteration", "kl");

  for (const double sigma : sigmas) {
    const GaussianCoupling star = eot_gaussian(gamma, upsilon, sigma);
    for (const double rho0 : rho0s) {
      double rho = rho0;
      for (int i = 0; i <= iters; ++i) {
        if (i > 0) rho = rho_m_1d(rho, sd0, sd1, sigma);
        GaussianCoupling c{gamma, upsilon,
                           Eigen::MatrixXd::Constant(1, 1, rho * sd0 * sd1)};
        csv.row("idbm", float_str(sigma), float_str(rho0), i,
                float_str(gaussian_kl(c, star)));
      }
    }
    GaussianCoupling f = ipf_initial(gamma, sigma);
    csv.row("ipf", float_str(sigma), "", 0, float_str(gaussian_kl(f, star)));
    for (int i = 1; i <= iters; ++i) {
      f = i % 2 == 1 ? ipf_step_gaussian(f, upsilon, IpfSide::Second)
                     : ipf_step_gaussian(f, gamma, IpfSide::First);
      csv.row("ipf", float_str(sigma), "", i, float_str(gaussian_kl(f, star)));
    }
  }
  write_manifest(ctx, outputs);
}

namespace {

Eigen::MatrixXd sample_wishart(int d, double scale, CounterRng& rng) {
  // d degrees of freedom, scale * I scatter.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd z = std::sqrt(scale) * rng.normal_vector(d);
    w += z * z.transpose();
  }
  return symmetrize(w);
}

}  // namespace

void cmd_gaussnd(const RunContext& ctx) {
  const json params = ctx.config.value("params", json::object());
  const std::vector<int> dims = ints_or(params, "dims", {5, 10});
  const std::vector<double> sigmas = nums_or(params, "sigmas", {0.2, 1.0});
  const int n_scenarios = int_or(params, "n_scenarios", 20);
  const int iters = int_or(params, "iterations", 10);
  const double wishart_scale = num_or(params, "wishart_scale", 0.2);
  if (sigmas.size() != dims.size())
    throw ConfigError("gaussnd: sigmas must be parallel to dims");

  std::vector<std::string> outputs;
  CsvWriter csv(ctx.out_dir, "gaussnd_kl.csv", outputs);
  csv.row("d", "sigma", "scenario", "procedure", "iteration", "kl");

  for (std::size_t di = 0; di < dims.size(); ++di) {
    const int d = dims[di];
    const double sigma = sigmas[di];
    for (int scen = 0; scen < n_scenarios; ++scen) {
      CounterRng rng(ctx.seed, static_cast<std::uint64_t>(d),
                     static_cast<std::uint64_t>(scen));
      GaussianDist gamma, upsilon;
      gamma.mean = Eigen::VectorXd::NullaryExpr(
          d, [&](Eigen::Index) { return 2.0 * rng.uniform() - 1.0; });
      upsilon.mean = Eigen::VectorXd::NullaryExpr(
          d, [&](Eigen::Index) { return 2.0 * rng.uniform() - 1.0; });
      gamma.cov = sample_wishart(d, wishart_scale, rng);
      upsilon.cov = sample_wishart(d, wishart_scale, rng);
      // A singular draw has probability zero; resample defensively.
      while (Eigen::LLT<Eigen::MatrixXd>(gamma.cov).info() != Eigen::Success)
        gamma.cov = sample_wishart(d, wishart_scale, rng);
      while (Eigen::LLT<Eigen::MatrixXd>(upsilon.cov).info() != Eigen::Success)
        upsilon.cov = sample_wishart(d, wishart_scale, rng);

      const GaussianCoupling star = eot_gaussian(gamma, upsilon, sigma);

      GaussianCoupling c{gamma, upsilon, Eigen::MatrixXd::Zero(d, d)};
      csv.row(d, float_str(sigma), scen, "idbm", 0,
              float_str(gaussian_kl(c, star)));
      for (int i = 1; i <= iters; ++i) {
        c = idbm_step_gaussian(c, sigma);
        csv.row(d, float_str(sigma), scen, "idbm", i,
                float_str(gaussian_kl(c, star)));
      }

      GaussianCoupling f = ipf_initial(gamma, sigma);
      csv.row(d, float_str(sigma), scen, "ipf", 0,
              float_str(gaussian_kl(f, star)));
      for (int i = 1; i <= iters; ++i) {
        f = i % 2 == 1 ? ipf_step_gaussian(f, upsilon, IpfSide::Second)
                       : ipf_step_gaussian(f, gamma, IpfSide::First);
        csv.row(d, float_str(sigma), scen, "ipf", i,
                float_str(gaussian_kl(f, star)));
      }
    }
  }
  write_manifest(ctx, outputs);
}

// -------------------------------------------------------------- mixture --

namespace {

void dump_drift_grid(CsvWriter& csv, const std::function<double(double, double)>& drift,
                     int nx, int nt, double x_min, double x_max) {
  csv.row("x", "t", "drift");
  for (int it = 0; it < nt; ++it) {
    const double t = (it + 0.5) / nt;
    for (int ix = 0; ix < nx; ++ix) {
      const double x = x_min + (x_max - x_min) * (ix + 0.5) / nx;
      csv.row(float_str(x), float_str(t), float_str(drift(x, t)));
    }
  }
}

void dump_coupling_density(CsvWriter& csv, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b, int grid, double lo,
                           double hi) {
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(grid, grid);
  const double w = (hi - lo) / grid;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < lo || a[i] >= hi || b[i] < lo || b[i] >= hi) continue;
    mass(static_cast<int>((a[i] - lo) / w), static_cast<int>((b[i] - lo) / w)) +=
        1.0;
  }
  mass /= static_cast<double>(a.size());
  csv.row("x", "y", "mass");
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      csv.row(float_str(lo + (i + 0.5) * w), float_str(lo + (j + 0.5) * w),
              float_str(mass(i, j)));
}

}  // namespace

void cmd_mixture1d(const RunContext& ctx) {
  const json params = ctx.config.value("params", json::object());
  const double sigma = num_or(params, "sigma", 0.2);

  GaussianMixture gamma_gm;
  if (params.contains("gamma")) {
    gamma_gm = mixture_from_spec(params.at("gamma"));
  } else {
    gamma_gm.weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    gamma_gm.means = to_evec({-3.0, 0.5, 3.0});
    gamma_gm.vars = Eigen::VectorXd::Constant(3, 0.04);
  }
  const json ups = params.value("upsilon", json::object());
  const double ups_mean = num_or(ups, "mean", 0.0);
  const double ups_sd = num_or(ups, "sd", 2.0);
  const GaussianMixture upsilon_gm = GaussianMixture::single(
      Eigen::VectorXd::Constant(1, ups_mean), ups_sd * ups_sd);

  const LinearRefSde sde =
      LinearRefSde::isotropic(1, 0.0, sigma * sigma, BetaSchedule::constant(1.0), 1.0);

  ProcedureConfig pc{sde};
  pc.gamma = [gamma_gm](int n, CounterRng& rng) { return gamma_gm.sample(n, rng); };
  pc.upsilon = [upsilon_gm](int n, CounterRng& rng) {
    return upsilon_gm.sample(n, rng);
  };
  pc.n_iterations = 1;
  pc.sgd_steps = int_or(params, "sgd_steps", 5000);
  pc.batch_size = int_or(params, "batch_size", 256);
  pc.euler_steps = int_or(params, "euler_steps", 1000);
  pc.coupling_cache = int_or(params, "n_paths", 100000);
  pc.policy = DirectionPolicy::BackwardOnly;
  // The slope parameterization keeps the regression targets O(1) at small
  // noise levels; the score convention remains selectable.
  const std::string conv = str_or(params, "convention", "slope");
  if (conv == "slope")
    pc.convention = BatchConvention::Slope;
  else if (conv == "score")
    pc.convention = BatchConvention::Score;
  else
    throw ConfigError("mixture1d: unknown convention '" + conv + "'");
  pc.hidden = ints_or(params, "hidden", {512, 512, 512});
  pc.hyper.lr = num_or(params, "lr", 1e-3);
  pc.hyper.ema_decay = num_or(params, "ema_decay", 0.995);
  pc.seed = ctx.seed;

  const json grid = params.value("grid", json::object());
  const int nx = int_or(grid, "nx", 200);
  const int nt = int_or(grid, "nt", 200);
  const double x_min = num_or(grid, "x_min", -5.0);
  const double x_max = num_or(grid, "x_max", 5.0);
  const int tv_bins = int_or(params, "tv_bins", 200);
  const std::vector<double> tv_range = nums_or(params, "tv_range", {-6.0, 6.0});
  const int density_grid = int_or(params, "density_grid", 200);

  std::vector<std::string> outputs;

  // Analytic drift fields on the generative axis (transport from upsilon to
  // gamma).
  {
    CsvWriter csv(ctx.out_dir, "drift_idbm_analytic.csv", outputs);
    dump_drift_grid(csv,
                    [&](double x, double t) {
                      return gm_dbm_drift(gamma_gm, upsilon_gm, sde,
                                          Eigen::VectorXd::Constant(1, x), t,
                                          Direction::Backward)[0];
                    },
                    nx, nt, x_min, x_max);
  }
  {
    CsvWriter csv(ctx.out_dir, "drift_dipf_analytic.csv", outputs);
    dump_drift_grid(csv,
                    [&](double x, double t) {
                      return gm_reverse_drift(gamma_gm, sde,
                                              Eigen::VectorXd::Constant(1, x),
                                              t)[0];
                    },
                    nx, nt, x_min, x_max);
  }

  // Fitted branches.
  const IdbmResult idbm = run_idbm(pc);
  const DriftField idbm_drift =
      pc.convention == BatchConvention::Slope
          ? mlp_drift_field(idbm.model_backward)
          : assemble_drift(idbm.model_backward, sde, Direction::Backward);
  ProcedureConfig pd = pc;
  pd.dipf_cache_paths = std::min(pc.coupling_cache, 4096);
  const DipfResult dipf = run_dipf(pd);
  const DriftField dipf_drift = mlp_drift_field(dipf.models.at(0));

  {
    CsvWriter csv(ctx.out_dir, "drift_idbm_fitted.csv", outputs);
    dump_drift_grid(csv,
                    [&](double x, double t) {
                      return idbm_drift(Eigen::MatrixXd::Constant(1, 1, x), t)(0, 0);
                    },
                    nx, nt, x_min, x_max);
  }
  {
    CsvWriter csv(ctx.out_dir, "drift_dipf_fitted.csv", outputs);
    dump_drift_grid(csv,
                    [&](double x, double t) {
                      return dipf_drift(Eigen::MatrixXd::Constant(1, 1, x), t)(0, 0);
                    },
                    nx, nt, x_min, x_max);
  }

  // Terminal samples sit on the gamma side of each stored coupling.
  const Eigen::VectorXd idbm_terminal = idbm.couplings.at(0).x0.col(0);
  const Eigen::VectorXd dipf_terminal = dipf.couplings.at(0).x0.col(0);
  const auto gamma_density = [&](double x) {
    return gamma_gm.density(Eigen::VectorXd::Constant(1, x));
  };

  const Kde1d kde_idbm = kde_fit(idbm_terminal);
  const Kde1d kde_dipf = kde_fit(dipf_terminal);
  const double tv_idbm =
      tv_histogram(DensityFn(kde_idbm), DensityFn(gamma_density), tv_bins,
                   {tv_range.at(0), tv_range.at(1)});
  const double tv_dipf =
      tv_histogram(DensityFn(kde_dipf), DensityFn(gamma_density), tv_bins,
                   {tv_range.at(0), tv_range.at(1)});

  const std::vector<std::pair<std::string, const Kde1d*>> kde_dumps = {
      {"terminal_kde_idbm.csv", &kde_idbm}, {"terminal_kde_dipf.csv", &kde_dipf}};
  for (const auto& [name, kde] : kde_dumps) {
    CsvWriter csv(ctx.out_dir, name, outputs);
    csv.row("x", "kde", "target");
    for (int i = 0; i < nx; ++i) {
      const double x = x_min + (x_max - x_min) * (i + 0.5) / nx;
      csv.row(float_str(x), float_str((*kde)(x)), float_str(gamma_density(x)));
    }
  }

  {
    CsvWriter csv(ctx.out_dir, "coupling_density_idbm.csv", outputs);
    dump_coupling_density(csv, idbm.couplings.at(0).x_end.col(0),
                          idbm.couplings.at(0).x0.col(0), density_grid, x_min,
                          x_max);
  }
  {
    CsvWriter csv(ctx.out_dir, "coupling_density_dipf.csv", outputs);
    dump_coupling_density(csv, dipf.couplings.at(0).x_end.col(0),
                          dipf.couplings.at(0).x0.col(0), density_grid, x_min,
                          x_max);
  }

  // Discrete EOT ground truth.
  const json sk = params.value("sinkhorn", json::object());
  double sinkhorn_corr = std::numeric_limits<double>::quiet_NaN();
  if (bool_or(sk, "enabled", true)) {
    const int bins = int_or(sk, "bins", 5000);
    const std::vector<double> range = nums_or(sk, "range", {-5.0, 5.0});
    const double w = (range[1] - range[0]) / bins;
    Eigen::VectorXd centers(bins);
    for (int i = 0; i < bins; ++i) centers[i] = range[0] + (i + 0.5) * w;
    const auto ups_density = [&](double x) {
      return upsilon_gm.density(Eigen::VectorXd::Constant(1, x));
    };
    DiscreteEotProblem prob;
    prob.mu = discretize_density(ups_density, centers);
    prob.nu = discretize_density(gamma_density, centers);
    prob.cost = squared_cost(centers, centers);
    prob.eps = 2.0 * sigma * sigma;
    const DiscreteCoupling plan =
        sinkhorn_solve(prob, num_or(sk, "tol", 1e-9), int_or(sk, "max_iter", 20000));
    sinkhorn_corr = plan_correlation(plan.plan, centers, centers);

    CsvWriter csv(ctx.out_dir, "coupling_density_sinkhorn.csv", outputs);
    csv.row("x", "y", "mass");
    const int step = std::max(1, bins / density_grid);
    for (int i = 0; i < bins; i += step)
      for (int j = 0; j < bins; j += step) {
        double m = 0.0;
        for (int a = i; a < std::min(bins, i + step); ++a)
          for (int b = j; b < std::min(bins, j + step); ++b)
            m += plan.plan(a, b);
        csv.row(float_str(centers[i]), float_str(centers[j]), float_str(m));
      }
  }

  {
    CsvWriter csv(ctx.out_dir, "summary.csv", outputs);
    csv.row("branch", "tv_terminal", "coupling_corr", "l_oc", "loss");
    csv.row("idbm", float_str(tv_idbm),
            float_str(idbm.diagnostics.at(0).coupling_corr),
            float_str(idbm.diagnostics.at(0).l_oc),
            float_str(idbm.diagnostics.at(0).loss));
    csv.row("dipf", float_str(tv_dipf),
            float_str(dipf.diagnostics.at(0).coupling_corr),
            float_str(dipf.diagnostics.at(0).l_oc),
            float_str(dipf.diagnostics.at(0).loss));
    csv.row("sinkhorn", "", float_str(sinkhorn_corr), "", "");
  }
  write_manifest(ctx, outputs);
}

// ----------------------------------------------------------- procedures --

namespace {

ProcedureConfig procedure_config_from(const json& params, std::uint64_t seed) {
  const LinearRefSde sde = sde_from_spec(params.value("sde", json::object()));
  ProcedureConfig pc{sde};
  if (!params.contains("gamma") || !params.contains("upsilon"))
    throw ConfigError("procedure config: gamma and upsilon samplers required");
  pc.gamma = make_sampler(params.at("gamma"));
  pc.upsilon = make_sampler(params.at("upsilon"));
  pc.n_iterations = int_or(params, "n_iterations", 4);
  pc.sgd_steps = int_or(params, "sgd_steps", 1000);
  pc.batch_size = int_or(params, "batch_size", 256);
  pc.euler_steps = int_or(params, "euler_steps", 100);
  pc.coupling_cache = int_or(params, "coupling_cache", 10000);
  const std::string policy = str_or(params, "policy", "alternate");
  if (policy == "forward")
    pc.policy = DirectionPolicy::ForwardOnly;
  else if (policy == "backward")
    pc.policy = DirectionPolicy::BackwardOnly;
  else if (policy == "alternate")
    pc.policy = DirectionPolicy::Alternate;
  else
    throw ConfigError("procedure config: unknown policy '" + policy + "'");
  const std::string conv = str_or(params, "convention", "score");
  if (conv == "score")
    pc.convention = BatchConvention::Score;
  else if (conv == "slope")
    pc.convention = BatchConvention::Slope;
  else
    throw ConfigError("procedure config: unknown convention '" + conv + "'");
  pc.hidden = ints_or(params, "hidden", {64, 64, 64});
  pc.hyper.lr = num_or(params, "lr", 1e-3);
  pc.hyper.beta1 = num_or(params, "beta1", 0.9);
  pc.hyper.beta2 = num_or(params, "beta2", 0.999);
  pc.hyper.eps = num_or(params, "eps", 1e-8);
  pc.hyper.ema_decay = num_or(params, "ema_decay", 0.999);
  pc.warm_start = bool_or(params, "warm_start", false);
  pc.deterministic_last_step = bool_or(params, "deterministic_last_step", true);
  pc.slope_t_max = num_or(params, "slope_t_max", -1.0);
  pc.dipf_cache_paths = int_or(params, "dipf_cache_paths", 2048);
  pc.dipf_cache_refresh = int_or(params, "dipf_cache_refresh", 100);
  pc.seed = seed;

  const int dim_g = sampler_dim(params.at("gamma"));
  const int dim_u = sampler_dim(params.at("upsilon"));
  if (dim_g != sde.dim() || dim_u != sde.dim())
    throw ConfigError("procedure config: sampler/sde dimension mismatch");
  return pc;
}

const char* direction_name(Direction d) {
  return d == Direction::Forward ? "forward" : "backward";
}

void write_diagnostics(const RunContext& ctx,
                       const std::vector<IterationDiagnostics>& diags,
                       std::vector<std::string>& outputs) {
  CsvWriter csv(ctx.out_dir, "diagnostics.csv", outputs);
  csv.row("iteration", "direction", "loss", "l_oc", "terminal_mean_err",
          "terminal_var_err", "coupling_corr");
  for (const auto& d : diags)
    csv.row(d.iteration, direction_name(d.direction), float_str(d.loss),
            float_str(d.l_oc), float_str(d.terminal_mean_err),
            float_str(d.terminal_var_err), float_str(d.coupling_corr));
  // Wall-clock timings go to a separate file so diagnostics.csv is a pure
  // function of (config, seed).
  CsvWriter timings(ctx.out_dir, "timings.csv", outputs);
  timings.row("iteration", "wall_seconds");
  for (const auto& d : diags) timings.row(d.iteration, float_str(d.wall_seconds));
}

void write_model(const RunContext& ctx, const std::string& name,
                 const MlpParams& model, std::vector<std::string>& outputs) {
  const fs::path p = fs::path(ctx.out_dir) / name;
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + p.string());
  write_checkpoint(os, model);
  outputs.push_back(name);
}

void write_coupling_csv(const RunContext& ctx, const std::string& name,
                        const CouplingSamples& c, int cap,
                        std::vector<std::string>& outputs) {
  CsvWriter csv(ctx.out_dir, name, outputs);
  std::ostream& os = csv.stream();
  os << "row";
  for (int j = 0; j < c.dim(); ++j) os << ",x0_" << j;
  for (int j = 0; j < c.dim(); ++j) os << ",x1_" << j;
  os << "\n";
  const int n = std::min(cap, c.size());
  for (int i = 0; i < n; ++i) {
    os << i;
    for (int j = 0; j < c.dim(); ++j) os << "," << c.x0(i, j);
    for (int j = 0; j < c.dim(); ++j) os << "," << c.x_end(i, j);
    os << "\n";
  }
}

}  // namespace

void cmd_idbm(const RunContext& ctx) {
  const ProcedureConfig pc =
      procedure_config_from(ctx.config.value("params", json::object()), ctx.seed);
  const IdbmResult result = run_idbm(pc);
  std::vector<std::string> outputs;
  write_diagnostics(ctx, result.diagnostics, outputs);
  if (result.model_forward.layers() > 0)
    write_model(ctx, "model_forward.mlp", result.model_forward, outputs);
  if (result.model_backward.layers() > 0)
    write_model(ctx, "model_backward.mlp", result.model_backward, outputs);
  write_coupling_csv(ctx, "final_coupling.csv", result.couplings.back(), 20000,
                     outputs);
  write_manifest(ctx, outputs);
}

void cmd_dipf(const RunContext& ctx) {
  const ProcedureConfig pc =
      procedure_config_from(ctx.config.value("params", json::object()), ctx.seed);
  const DipfResult result = run_dipf(pc);
  std::vector<std::string> outputs;
  write_diagnostics(ctx, result.diagnostics, outputs);
  write_model(ctx, "model_final.mlp", result.models.back(), outputs);
  write_coupling_csv(ctx, "final_coupling.csv", result.couplings.back(), 20000,
                     outputs);
  write_manifest(ctx, outputs);
}

void cmd_sgm_toy(const RunContext& ctx) {
  const json params = ctx.config.value("params", json::object());
  const LinearRefSde sde = sde_from_spec(params.value("sde", json::object()));
  ProcedureConfig pc{sde};
  if (!params.contains("gamma"))
    throw ConfigError("sgm_toy: gamma sampler required");
  pc.gamma = make_sampler(params.at("gamma"));
  pc.upsilon = reference_terminal_sampler(sde);
  pc.sgd_steps = int_or(params, "sgd_steps", 2000);
  pc.batch_size = int_or(params, "batch_size", 256);
  pc.hidden = ints_or(params, "hidden", {64, 64, 64});
  pc.hyper.lr = num_or(params, "lr", 1e-3);
  pc.hyper.ema_decay = num_or(params, "ema_decay", 0.999);
  pc.seed = ctx.seed;

  const SgmResult result = run_sgm(pc);
  std::vector<std::string> outputs;
  write_model(ctx, "model_score.mlp", result.model, outputs);

  const int n_generate = int_or(params, "n_generate", 20000);
  const int steps = int_or(params, "generate_steps", 200);
  CounterRng rng(ctx.seed, 77);
  const Eigen::MatrixXd start = pc.upsilon(n_generate, rng);
  const Eigen::MatrixXd samples =
      euler_terminal(assemble_drift(result.model, sde, Direction::Backward),
                     sde, start, steps, mix64(ctx.seed ^ 0x5611ULL), true);
  {
    CsvWriter csv(ctx.out_dir, "samples.csv", outputs);
    std::ostream& os = csv.stream();
    for (int j = 0; j < sde.dim(); ++j) os << (j ? ",x" : "x") << j;
    os << "\n";
    for (int i = 0; i < samples.rows(); ++i) {
      for (int j = 0; j < samples.cols(); ++j) os << (j ? "," : "") << samples(i, j);
      os << "\n";
    }
  }
  {
    const MomentSummary m = moment_summary(samples);
    CsvWriter csv(ctx.out_dir, "summary.csv", outputs);
    csv.row("coord", "mean", "var", "mean_se", "final_loss");
    for (int j = 0; j < sde.dim(); ++j)
      csv.row(j, float_str(m.mean[j]), float_str(m.cov(j, j)),
              float_str(m.mean_se[j]), float_str(result.trailing_loss));
  }
  write_manifest(ctx, outputs);
}

void cmd_sinkhorn_compare(const RunContext& ctx) {
  const json params = ctx.config.value("params", json::object());
  const int bins = int_or(params, "bins", 2000);
  const std::vector<double> range = nums_or(params, "range", {-6.0, 6.0});
  const std::vector<double> sigmas = nums_or(params, "sigmas", {0.2, 1.0});
  const double mean0 = num_or(params, "mean0", 0.0);
  const double mean1 = num_or(params, "mean1", 0.0);
  const double var0 = num_or(params, "var0", 1.0);
  const double var1 = num_or(params, "var1", 1.0);
  const double tol = num_or(params, "tol", 1e-9);
  const int max_iter = int_or(params, "max_iter", 20000);

  const double w = (range.at(1) - range.at(0)) / bins;
  Eigen::VectorXd centers(bins);
  for (int i = 0; i < bins; ++i) centers[i] = range[0] + (i + 0.5) * w;
  const auto normal_density = [](double mean, double var) {
    return [mean, var](double x) {
      return std::exp(-0.5 * (x - mean) * (x - mean) / var) /
             std::sqrt(2.0 * M_PI * var);
    };
  };

  const GaussianDist g0{Eigen::VectorXd::Constant(1, mean0),
                        Eigen::MatrixXd::Constant(1, 1, var0)};
  const GaussianDist g1{Eigen::VectorXd::Constant(1, mean1),
                        Eigen::MatrixXd::Constant(1, 1, var1)};

  std::vector<std::string> outputs;
  CsvWriter csv(ctx.out_dir, "sinkhorn_compare.csv", outputs);
  csv.row("sigma", "eps", "iterations", "converged", "residual", "plan_corr",
          "analytic_corr", "abs_err");
  for (const double sigma : sigmas) {
    DiscreteEotProblem prob;
    prob.mu = discretize_density(normal_density(mean0, var0), centers);
    prob.nu = discretize_density(normal_density(mean1, var1), centers);
    prob.cost = squared_cost(centers, centers);
    prob.eps = 2.0 * sigma * sigma;
    const DiscreteCoupling plan = sinkhorn_solve(prob, tol, max_iter);
    const double corr = plan_correlation(plan.plan, centers, centers);
    const double analytic = eot_gaussian(g0, g1, sigma).correlation();
    csv.row(float_str(sigma), float_str(prob.eps), plan.iterations,
            plan.converged ? 1 : 0, float_str(plan.residual), float_str(corr),
            float_str(analytic), float_str(std::abs(corr - analytic)));
  }
  write_manifest(ctx, outputs);
}

// --------------------------------------------------------------- runner --

int run_experiment(const std::string& config_path,
                   std::optional<std::uint64_t> seed_override,
                   const std::string& out_dir_override, bool dry_run,
                   const std::string& expected_kind) {
  RunContext ctx;
  try {
    std::ifstream is(config_path);
    if (!is) {
      std::fprintf(stderr, "error: cannot read config '%s'\n",
                   config_path.c_str());
      return kExitIo;
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    ctx.config_bytes = buf.str();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }

  try {
    ctx.config = json::parse(ctx.config_bytes);
    validate_experiment_config(ctx.config);
    if (!expected_kind.empty() &&
        ctx.config.at("kind").get<std::string>() != expected_kind)
      throw ConfigError("config kind '" +
                        ctx.config.at("kind").get<std::string>() +
                        "' does not match subcommand ('" + expected_kind +
                        "')");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }

  ctx.seed = seed_override.value_or(
      static_cast<std::uint64_t>(ctx.config.value("seed", 0)));
  ctx.out_dir = !out_dir_override.empty()
                    ? out_dir_override
                    : ctx.config.value("out_dir", std::string("."));

  if (dry_run) return kExitOk;

  try {
    fs::create_directories(ctx.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  }

  const std::string kind = ctx.config.at("kind").get<std::string>();
  try {
    if (kind == "gauss1d")
      cmd_gauss1d(ctx);
    else if (kind == "gaussnd")
      cmd_gaussnd(ctx);
    else if (kind == "mixture1d")
      cmd_mixture1d(ctx);
    else if (kind == "idbm_run")
      cmd_idbm(ctx);
    else if (kind == "dipf_run")
      cmd_dipf(ctx);
    else if (kind == "sgm_toy")
      cmd_sgm_toy(ctx);
    else if (kind == "sinkhorn_compare")
      cmd_sinkhorn_compare(ctx);
    else {
      std::fprintf(stderr, "config error: unknown kind '%s'\n", kind.c_str());
      return kExitConfig;
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace bridgelab
