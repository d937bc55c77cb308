#include "iwvi/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "iwvi/estimators.hpp"
#include "iwvi/model.hpp"

namespace iwvi {

namespace {

std::size_t parse_count(std::string_view s, std::string_view what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(c); })) {
    throw InvalidArgument("n_grid: bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  std::size_t v = 0;
  for (char c : s) {
    const std::size_t digit = static_cast<std::size_t>(c - '0');
    if (v > (std::numeric_limits<std::size_t>::max() - digit) / 10) {
      throw InvalidArgument("n_grid: value too large");
    }
    v = v * 10 + digit;
  }
  return v;
}

}  // namespace

std::vector<std::size_t> parse_n_grid(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  const auto x = s.find('x');
  const auto caret = s.find('^');
  const auto dots = s.find("..");
  if (x == std::string::npos || caret == std::string::npos || dots == std::string::npos ||
      !(x < caret && caret < dots)) {
    throw InvalidArgument("n_grid: expected 'a x b^i..j', got '" + std::string(text) + "'");
  }
  const std::string_view sv(s);
  const std::size_t a = parse_count(sv.substr(0, x), "multiplier");
  const std::size_t b = parse_count(sv.substr(x + 1, caret - x - 1), "base");
  const std::size_t i = parse_count(sv.substr(caret + 1, dots - caret - 1), "first exponent");
  const std::size_t j = parse_count(sv.substr(dots + 2), "last exponent");
  if (a == 0 || b < 2) {
    throw InvalidArgument("n_grid: multiplier must be positive and base at least 2");
  }
  if (i > j) {
    throw InvalidArgument("n_grid: first exponent exceeds last exponent");
  }
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e <= j; ++e) {
    std::size_t v = a;
    for (std::size_t r = 0; r < e; ++r) {
      if (v > std::numeric_limits<std::size_t>::max() / b) {
        throw InvalidArgument("n_grid: value too large");
      }
      v *= b;
    }
    if (e >= i) out.push_back(v);
  }
  return out;
}

namespace {

using nlohmann::json;

/// Reads fields of one JSON object, collecting errors instead of throwing.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<ConfigError>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) {
      error("", "must be an object");
      valid_ = false;
    }
  }

  bool valid() const { return valid_; }
  std::string path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }
  void error(std::string_view key, std::string message) {
    errors_.push_back({key.empty() ? path_ : path(key), std::move(message)});
  }
  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    if (!valid_) return nullptr;
    const auto it = obj_.find(std::string(key));
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void string(std::string_view key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        error(key, "must be a string");
      }
    }
  }
  void number(std::string_view key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number() && std::isfinite(v->get<double>())) {
        out = v->get<double>();
      } else {
        error(key, "must be a finite number");
      }
    }
  }
  void optional_number(std::string_view key, std::optional<double>& out) {
    if (find(key)) {
      double v = 0.0;
      number(key, v);
      out = v;
    }
  }
  template <class Int>
  void count(std::string_view key, Int& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)) {
        out = v->get<Int>();
      } else {
        error(key, "must be a nonnegative integer");
      }
    }
  }
  void boolean(std::string_view key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        error(key, "must be true or false");
      }
    }
  }
  void numbers(std::string_view key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) {
        out = {v->get<double>()};
        return;
      }
      if (!v->is_array()) {
        error(key, "must be a number or an array of numbers");
        return;
      }
      std::vector<double> values;
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number() || !std::isfinite(e.get<double>())) {
          errors_.push_back({path(key) + "[" + std::to_string(i) + "]", "must be a finite number"});
          return;
        }
        values.push_back(e.get<double>());
      }
      out = std::move(values);
    }
  }
  void strings(std::string_view key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) {
        out = {v->get<std::string>()};
        return;
      }
      if (!v->is_array()) {
        error(key, "must be a string or an array of strings");
        return;
      }
      std::vector<std::string> values;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) {
          errors_.push_back({path(key) + "[" + std::to_string(i) + "]", "must be a string"});
          return;
        }
        values.push_back((*v)[i].get<std::string>());
      }
      out = std::move(values);
    }
  }

  /// Reports keys that no reader asked for.
  void finish() {
    if (!valid_) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) error(key, "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<ConfigError>& errors_;
  std::set<std::string> seen_;
  bool valid_ = true;
};

void check_alpha(double a, const std::string& path, std::vector<ConfigError>& errors) {
  if (!(a >= 0.0 && a < 1.0)) errors.push_back({path, "alpha must lie in [0,1)"});
}

void read_model(Reader& top, ExperimentConfig& cfg, std::vector<ConfigError>& errors) {
  const json* model = top.find("model");
  if (!model) {
    top.error("model", "is required");
    return;
  }
  Reader r(*model, top.path("model"), errors);
  if (!r.valid()) return;
  r.string("type", cfg.model_type);
  if (cfg.model_type == "gaussian") {
    r.numbers("theta", cfg.gaussian.theta);
    r.numbers("phi", cfg.gaussian.phi);
    if (cfg.gaussian.theta.empty()) r.error("theta", "must be non-empty");
    if (cfg.gaussian.theta.size() != cfg.gaussian.phi.size()) {
      r.error("phi", "must have the same dimension as theta");
    }
  } else if (cfg.model_type == "svol") {
    r.string("data", cfg.svol.data_path);
    if (!cfg.svol.data_path.empty() && !std::filesystem::is_regular_file(cfg.svol.data_path)) {
      r.error("data", "file '" + cfg.svol.data_path + "' does not exist");
    }
    r.count("particles", cfg.svol.particles);
    if (cfg.svol.particles < 2) r.error("particles", "must be at least 2");
    r.numbers("init_mu", cfg.svol.init_mu);
    if (cfg.svol.init_mu.size() != 3) r.error("init_mu", "must have 3 entries");
    r.number("init_scale", cfg.svol.init_scale);
    if (!(cfg.svol.init_scale > 0.0)) r.error("init_scale", "must be positive");
    if (const json* sim = r.find("simulate")) {
      Reader s(*sim, r.path("simulate"), errors);
      s.number("beta0", cfg.svol.beta0);
      s.number("beta1", cfg.svol.beta1);
      s.number("sigma2", cfg.svol.sigma2);
      s.count("T", cfg.svol.T);
      if (!(std::abs(cfg.svol.beta1) < 1.0)) s.error("beta1", "must satisfy |beta1| < 1");
      if (!(cfg.svol.sigma2 > 0.0)) s.error("sigma2", "must be positive");
      if (cfg.svol.T == 0) s.error("T", "must be positive");
      s.finish();
    }
  } else {
    r.error("type", "must be 'gaussian' or 'svol'");
  }
  r.finish();
}

void read_optimizer(Reader& top, ExperimentConfig& cfg, std::vector<ConfigError>& errors) {
  const json* opt = top.find("optimizer");
  if (!opt) return;
  Reader r(*opt, top.path("optimizer"), errors);
  OptimizerSpec& o = cfg.optimizer;
  r.count("n", o.n);
  r.count("iterations", o.iterations);
  r.string("schedule", o.schedule);
  r.number("step", o.step);
  r.number("decay", o.decay);
  r.numbers("alpha_ladder", o.alpha_ladder);
  r.number("tau", o.tau);
  r.boolean("beta_schedule", o.beta_schedule);
  r.boolean("learn_theta", o.learn_theta);
  r.optional_number("grad_norm_tol", o.grad_norm_tol);
  r.number("smoothing", o.smoothing);
  r.count("min_iterations", o.min_iterations);
  r.count("star_subsample", o.star_subsample);
  r.number("clip_norm", o.clip_norm);
  r.finish();

  if (o.n == 0) r.error("n", "must be positive");
  if (o.schedule != "constant" && o.schedule != "inv-sqrt" && o.schedule != "harmonic") {
    r.error("schedule", "must be 'constant', 'inv-sqrt' or 'harmonic'");
  }
  if (!(o.step > 0.0)) r.error("step", "must be positive");
  if (!(o.decay > 0.0)) r.error("decay", "must be positive");
  for (std::size_t i = 0; i < o.alpha_ladder.size(); ++i) {
    check_alpha(o.alpha_ladder[i], r.path("alpha_ladder") + "[" + std::to_string(i) + "]",
                errors);
    if (i > 0 && !(o.alpha_ladder[i] < o.alpha_ladder[i - 1])) {
      r.error("alpha_ladder", "must be strictly decreasing");
      break;
    }
  }
  if (!(o.tau > 0.0 && o.tau < 1.0)) r.error("tau", "must lie in (0,1)");
  if (o.grad_norm_tol && !(*o.grad_norm_tol > 0.0)) r.error("grad_norm_tol", "must be positive");
  if (!(o.smoothing >= 0.0 && o.smoothing < 1.0)) r.error("smoothing", "must lie in [0,1)");
  if (!(o.clip_norm >= 0.0)) r.error("clip_norm", "must be nonnegative");
}

}  // namespace

ConfigResult validate_config(const nlohmann::json& j) {
  ConfigResult result;
  std::vector<ConfigError>& errors = result.errors;
  ExperimentConfig cfg;
  Reader top(j, "", errors);
  if (!top.valid()) {
    errors.back().path = "(root)";
    return result;
  }

  top.string("subcommand", cfg.subcommand);
  if (cfg.subcommand.empty()) {
    top.error("subcommand", "is required");
  } else if (std::find(known_subcommands().begin(), known_subcommands().end(), cfg.subcommand) ==
             known_subcommands().end()) {
    top.error("subcommand", "unknown subcommand '" + cfg.subcommand + "'");
  }
  read_model(top, cfg, errors);

  top.strings("estimators", cfg.estimators);
  if (cfg.estimators.empty()) top.error("estimators", "must be non-empty");
  for (std::size_t i = 0; i < cfg.estimators.size(); ++i) {
    try {
      (void)parse_kind(cfg.estimators[i], 0.5);
    } catch (const InvalidArgument& e) {
      errors.push_back({"estimators[" + std::to_string(i) + "]", e.what()});
    }
  }

  top.numbers("alphas", cfg.alphas);
  if (cfg.alphas.empty()) top.error("alphas", "must be non-empty");
  for (std::size_t i = 0; i < cfg.alphas.size(); ++i) {
    check_alpha(cfg.alphas[i], "alphas[" + std::to_string(i) + "]", errors);
  }

  if (const json* grid = top.find("n_grid")) {
    if (grid->is_string()) {
      try {
        cfg.n_grid = parse_n_grid(grid->get<std::string>());
      } catch (const InvalidArgument& e) {
        top.error("n_grid", e.what());
      }
    } else if (grid->is_array()) {
      for (std::size_t i = 0; i < grid->size(); ++i) {
        const json& e = (*grid)[i];
        if (!e.is_number_integer() || e.get<long long>() <= 0) {
          errors.push_back({"n_grid[" + std::to_string(i) + "]", "must be a positive integer"});
          cfg.n_grid.clear();
          break;
        }
        cfg.n_grid.push_back(e.get<std::size_t>());
      }
    } else {
      top.error("n_grid", "must be an array of integers or a string like '5x2^0..8'");
    }
  } else {
    cfg.n_grid = parse_n_grid("5x2^0..8");
  }
  for (std::size_t i = 1; i < cfg.n_grid.size(); ++i) {
    if (!(cfg.n_grid[i] > cfg.n_grid[i - 1])) {
      top.error("n_grid", "must be strictly increasing");
      break;
    }
  }

  top.count("replicates", cfg.replicates);
  if (cfg.replicates < 2) top.error("replicates", "must be at least 2");
  top.count("seed", cfg.seed);
  top.count("workers", cfg.workers);
  read_optimizer(top, cfg, errors);
  top.number("verify_tolerance", cfg.verify_tolerance);
  if (!(cfg.verify_tolerance > 0.0)) top.error("verify_tolerance", "must be positive");
  top.string("output", cfg.output);
  if (cfg.output.empty()) top.error("output", "must be non-empty");
  top.finish();

  if (cfg.subcommand == "ssm-fit" && cfg.model_type != "svol") {
    top.error("model.type", "ssm-fit needs the 'svol' model");
  }
  if ((cfg.subcommand == "gaussian-verify") && cfg.model_type != "gaussian") {
    top.error("model.type", "gaussian-verify needs the 'gaussian' model");
  }

  const bool any_positive_alpha =
      std::any_of(cfg.alphas.begin(), cfg.alphas.end(), [](double a) { return a > 0.0; }) ||
      std::any_of(cfg.optimizer.alpha_ladder.begin(), cfg.optimizer.alpha_ladder.end(),
                  [](double a) { return a > 0.0; });
  for (std::size_t i = 0; i < cfg.estimators.size(); ++i) {
    const std::string path = "estimators[" + std::to_string(i) + "]";
    if (cfg.estimators[i] == "star0" && any_positive_alpha) {
      errors.push_back({path, "star0 is only defined at alpha = 0"});
    }
    if (cfg.estimators[i] == "inter" && cfg.model_type != "gaussian") {
      errors.push_back({path, "inter needs the closed-form normalizer of the gaussian model"});
    }
  }

  if (errors.empty()) result.config = std::move(cfg);
  return result;
}

ConfigResult validate_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    ConfigResult result;
    result.errors.push_back({"(root)", std::string("not valid JSON: ") + e.what()});
    return result;
  }
  return validate_config(j);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json model{{"type", c.model_type}};
  if (c.model_type == "gaussian") {
    model["theta"] = c.gaussian.theta;
    model["phi"] = c.gaussian.phi;
  } else {
    if (!c.svol.data_path.empty()) model["data"] = c.svol.data_path;
    model["particles"] = c.svol.particles;
    model["init_mu"] = c.svol.init_mu;
    model["init_scale"] = c.svol.init_scale;
    model["simulate"] = {{"beta0", c.svol.beta0},
                         {"beta1", c.svol.beta1},
                         {"sigma2", c.svol.sigma2},
                         {"T", c.svol.T}};
  }
  const OptimizerSpec& o = c.optimizer;
  nlohmann::json opt{{"n", o.n},
                     {"iterations", o.iterations},
                     {"schedule", o.schedule},
                     {"step", o.step},
                     {"decay", o.decay},
                     {"alpha_ladder", o.alpha_ladder},
                     {"tau", o.tau},
                     {"beta_schedule", o.beta_schedule},
                     {"learn_theta", o.learn_theta},
                     {"smoothing", o.smoothing},
                     {"min_iterations", o.min_iterations},
                     {"star_subsample", o.star_subsample},
                     {"clip_norm", o.clip_norm}};
  opt["grad_norm_tol"] = o.grad_norm_tol ? nlohmann::json(*o.grad_norm_tol) : nlohmann::json(nullptr);
  return nlohmann::json{{"subcommand", c.subcommand},
                        {"model", std::move(model)},
                        {"estimators", c.estimators},
                        {"alphas", c.alphas},
                        {"n_grid", c.n_grid},
                        {"replicates", c.replicates},
                        {"seed", c.seed},
                        {"workers", c.workers},
                        {"optimizer", std::move(opt)},
                        {"verify_tolerance", c.verify_tolerance},
                        {"output", c.output}};
}

}  // namespace iwvi
