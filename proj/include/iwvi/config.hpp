#ifndef IWVI_CONFIG_HPP
#define IWVI_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace iwvi {

/// Parses "a x b^i..j" (spaces optional, e.g. "5x2^0..8") into {a*b^i, ..., a*b^j}.
/// Throws InvalidArgument on malformed input or overflow.
std::vector<std::size_t> parse_n_grid(std::string_view text);

struct GaussianModelSpec {
  std::vector<double> theta{0.0};
  std::vector<double> phi{1.0};
};

struct SvModelSpec {
  /// Observation CSV; when empty the series is simulated.
  std::string data_path;
  double beta0 = -0.3;
  double beta1 = 0.95;
  double sigma2 = 0.05;
  std::size_t T = 500;
  std::size_t particles = 50;
  /// Initial q: mean of z and a common scale for the Cholesky diagonal.
  std::vector<double> init_mu{0.0, -3.0, -3.0};
  double init_scale = 0.3;
};

struct OptimizerSpec {
  std::size_t n = 100;
  std::size_t iterations = 1000;
  std::string schedule = "constant";  // constant | inv-sqrt | harmonic
  double step = 0.1;
  double decay = 1000.0;
  /// Empty: alpha fixed at the first entry of ExperimentConfig::alphas.
  std::vector<double> alpha_ladder;
  double tau = 0.5;
  bool beta_schedule = false;
  bool learn_theta = false;
  std::optional<double> grad_norm_tol;
  double smoothing = 0.9;
  std::size_t min_iterations = 0;
  std::size_t star_subsample = 0;
  double clip_norm = 0.0;
};

struct ExperimentConfig {
  std::string subcommand;
  std::string model_type = "gaussian";  // gaussian | svol
  GaussianModelSpec gaussian;
  SvModelSpec svol;
  std::vector<std::string> estimators{"am", "gm", "star"};
  std::vector<double> alphas{0.0};
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  OptimizerSpec optimizer;
  /// Relative tolerance used by gaussian-verify.
  double verify_tolerance = 0.25;
  std::string output = "results";
};

struct ConfigError {
  std::string path;
  std::string message;
};

struct ConfigResult {
  std::optional<ExperimentConfig> config;
  std::vector<ConfigError> errors;

  bool ok() const { return config.has_value(); }
};

inline const std::vector<std::string>& known_subcommands() {
  static const std::vector<std::string> names{"snr-sweep", "variance-sweep", "optimize",
                                              "gaussian-verify", "ssm-fit"};
  return names;
}

/// Full structural validation of a JSON config text. Every problem is
/// reported, each with the path of the offending field. Referenced files must
/// exist.
ConfigResult validate_config(std::string_view text);
inline ConfigResult validate_config(const char* text) { return validate_config(std::string_view(text)); }
ConfigResult validate_config(const nlohmann::json& j);

nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace iwvi

#endif  // IWVI_CONFIG_HPP
