#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "iwvi/bounds.hpp"
#include "iwvi/diagnostics.hpp"
#include "iwvi/estimators.hpp"
#include "iwvi/gaussian_analytic.hpp"
#include "iwvi/gaussian_model.hpp"
#include "iwvi/optimizer.hpp"
#include "iwvi/svol.hpp"
#include "iwvi/version.hpp"

namespace iwvi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A validation failure detected after the config parsed (exit code 2).
class ConfigFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flag registry: every flag is stored as raw text and converted into the JSON
// config document, so flags and config files share one validator.

enum class FlagType { kString, kNumber, kCount, kNumbers, kStrings, kGrid, kSwitch };

struct FlagSpec {
  const char* flag;
  const char* path;  // dotted JSON path
  FlagType type;
  const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--model", "model.type", FlagType::kString, "gaussian | svol"},
    {"--theta", "model.theta", FlagType::kNumbers, "Gaussian model mean (comma list)"},
    {"--phi", "model.phi", FlagType::kNumbers, "Gaussian variational mean (comma list)"},
    {"--data", "model.data", FlagType::kString, "SV observation CSV (t,x)"},
    {"--particles", "model.particles", FlagType::kCount, "particle filter size"},
    {"--sim-beta0", "model.simulate.beta0", FlagType::kNumber, "simulated SV beta0"},
    {"--sim-beta1", "model.simulate.beta1", FlagType::kNumber, "simulated SV beta1"},
    {"--sim-sigma2", "model.simulate.sigma2", FlagType::kNumber, "simulated SV sigma2"},
    {"--sim-T", "model.simulate.T", FlagType::kCount, "simulated SV series length"},
    {"--init-mu", "model.init_mu", FlagType::kNumbers, "initial q mean for the SV model"},
    {"--init-scale", "model.init_scale", FlagType::kNumber, "initial q scale for the SV model"},
    {"--estimators", "estimators", FlagType::kStrings, "estimator names (comma list)"},
    {"--alphas", "alphas", FlagType::kNumbers, "alpha values (comma list)"},
    {"--ngrid", "n_grid", FlagType::kGrid, "sample sizes: comma list or a x b^i..j"},
    {"--reps", "replicates", FlagType::kCount, "replicates per grid point"},
    {"--seed", "seed", FlagType::kCount, "root seed"},
    {"--workers", "workers", FlagType::kCount, "worker threads (0 = all cores)"},
    {"--n", "optimizer.n", FlagType::kCount, "optimizer batch size"},
    {"--iters", "optimizer.iterations", FlagType::kCount, "optimizer iterations"},
    {"--schedule", "optimizer.schedule", FlagType::kString, "constant | inv-sqrt | harmonic"},
    {"--step", "optimizer.step", FlagType::kNumber, "step size"},
    {"--decay", "optimizer.decay", FlagType::kNumber, "harmonic schedule decay"},
    {"--ladder", "optimizer.alpha_ladder", FlagType::kNumbers, "decreasing alpha ladder"},
    {"--tau", "optimizer.tau", FlagType::kNumber, "ESS fraction that moves alpha down"},
    {"--beta-schedule", "optimizer.beta_schedule", FlagType::kSwitch, "anneal the likelihood"},
    {"--learn-theta", "optimizer.learn_theta", FlagType::kSwitch, "also train model parameters"},
    {"--tol", "optimizer.grad_norm_tol", FlagType::kNumber, "smoothed gradient norm stop"},
    {"--smoothing", "optimizer.smoothing", FlagType::kNumber, "gradient smoothing factor"},
    {"--min-iters", "optimizer.min_iterations", FlagType::kCount, "iterations before stopping"},
    {"--subsample", "optimizer.star_subsample", FlagType::kCount, "star leave-one-out subsample"},
    {"--clip", "optimizer.clip_norm", FlagType::kNumber, "gradient norm clip (0 = off)"},
    {"--tolerance", "verify_tolerance", FlagType::kNumber, "gaussian-verify tolerance"},
    {"--out", "output", FlagType::kString, "output directory (must not exist)"},
};

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

double to_number(const std::string& text, const std::string& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigFailure(path + ": '" + text + "' is not a number");
  }
  return v;
}

json to_count(const std::string& text, const std::string& path) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigFailure(path + ": '" + text + "' is not a nonnegative integer");
  }
  return json(std::stoull(text));
}

void set_path(json& root, const std::string& dotted, json value) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) node = &(*node)[keys[i]];
  (*node)[keys.back()] = std::move(value);
}

json flag_value(const FlagSpec& spec, const std::string& raw) {
  const std::string path = spec.path;
  switch (spec.type) {
    case FlagType::kString:
      return raw;
    case FlagType::kNumber:
      return to_number(raw, path);
    case FlagType::kCount:
      return to_count(raw, path);
    case FlagType::kNumbers: {
      json arr = json::array();
      for (const auto& item : split(raw)) arr.push_back(to_number(item, path));
      return arr;
    }
    case FlagType::kStrings: {
      json arr = json::array();
      for (const auto& item : split(raw)) arr.push_back(item);
      return arr;
    }
    case FlagType::kGrid: {
      if (raw.find('x') != std::string::npos) return raw;
      json arr = json::array();
      for (const auto& item : split(raw)) arr.push_back(to_count(item, path));
      return arr;
    }
    case FlagType::kSwitch:
      return true;
  }
  return raw;
}

struct FlagValues {
  std::map<std::string, std::string> raw;
  std::map<std::string, bool> switches;
};

void add_flags(CLI::App& cmd, FlagValues& values) {
  for (const FlagSpec& spec : kFlags) {
    if (spec.type == FlagType::kSwitch) {
      cmd.add_flag(spec.flag, values.switches[spec.path], spec.help);
    } else {
      cmd.add_option(spec.flag, values.raw[spec.path], spec.help);
    }
  }
}

json flags_to_json(const CLI::App& cmd, const FlagValues& values, const std::string& subcommand) {
  json j{{"subcommand", subcommand}, {"model", json::object()}};
  for (const FlagSpec& spec : kFlags) {
    if (cmd.count(spec.flag) == 0) continue;
    const std::string raw =
        spec.type == FlagType::kSwitch ? std::string() : values.raw.at(spec.path);
    set_path(j, spec.path, flag_value(spec, raw));
  }
  if (!j["model"].contains("type")) j["model"]["type"] = "gaussian";
  if (subcommand == "gaussian-verify" && !j.contains("alphas")) {
    j["alphas"] = json::array({0.0, 0.3, 0.7});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Output helpers.

class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {}

  std::ofstream open(const std::string& name) {
    std::ofstream os(root_ / name);
    if (!os) throw std::runtime_error("cannot write " + (root_ / name).string());
    files_.push_back(name);
    return os;
  }
  void write_json(const std::string& name, const json& j) {
    std::ofstream os = open(name);
    os << j.dump(2) << '\n';
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// ---------------------------------------------------------------------------
// Model construction.

struct BuiltModel {
  std::unique_ptr<Model> model;
  std::optional<ParamVector> params;
  std::vector<double> observations;
  bool simulated = false;
};

BuiltModel build_model(const ExperimentConfig& cfg) {
  BuiltModel out;
  if (cfg.model_type == "gaussian") {
    auto model = std::make_unique<GaussianModel>(cfg.gaussian.theta.size());
    out.params = model->params(cfg.gaussian.theta, cfg.gaussian.phi);
    out.model = std::move(model);
    return out;
  }
  if (!cfg.svol.data_path.empty()) {
    std::ifstream is(cfg.svol.data_path);
    if (!is) throw std::runtime_error("cannot read " + cfg.svol.data_path);
    out.observations = svol::read_observations_csv(is);
  } else {
    Rng rng = make_stream(cfg.seed, 0, StreamPurpose::kSimulate);
    out.observations = svol::simulate_sv({cfg.svol.beta0, cfg.svol.beta1, cfg.svol.sigma2},
                                         cfg.svol.T, rng);
    out.simulated = true;
  }
  auto model = std::make_unique<svol::SvModel>(out.observations, cfg.svol.particles);
  out.params = model->initial_params(cfg.svol.init_mu, cfg.svol.init_scale);
  out.model = std::move(model);
  return out;
}

gaussian::GaussianSetting setting_for(const ExperimentConfig& cfg, double alpha, std::size_t k) {
  return gaussian::GaussianSetting{cfg.gaussian.theta, cfg.gaussian.phi, alpha, k};
}

BaselineKind resolve_kind(const ExperimentConfig& cfg, const std::string& name, double alpha) {
  BaselineKind kind = parse_kind(name, alpha);
  if (auto* inter = std::get_if<baseline::Inter>(&kind)) {
    inter->log_norm_const = gaussian::log_norm_const(setting_for(cfg, alpha, 0));
  }
  if (auto* loo = std::get_if<baseline::StarLeaveOneOut>(&kind)) {
    loo->subsample = cfg.optimizer.star_subsample;
  }
  return kind;
}

/// Closed-form SNR for a phi coordinate of the Gaussian model, when the
/// estimator has one.
std::optional<double> analytic_snr(const ExperimentConfig& cfg, const Model& model,
                                   const BaselineKind& kind, double alpha, std::size_t n,
                                   std::size_t coord) {
  if (cfg.model_type != "gaussian" || model.layout()->block(coord) != Block::kPhi) {
    return std::nullopt;
  }
  const std::size_t k = coord - cfg.gaussian.theta.size();
  const auto s = setting_for(cfg, alpha, k);
  using gaussian::VarianceKind;
  if (std::holds_alternative<baseline::ArithmeticMean>(kind)) {
    return gaussian::snr_prediction(s, VarianceKind::kAm, n);
  }
  if (std::holds_alternative<baseline::GeometricMean>(kind)) {
    return gaussian::snr_prediction(s, VarianceKind::kGm, n);
  }
  if (std::holds_alternative<baseline::StarLeaveOneOut>(kind) ||
      std::holds_alternative<baseline::StarPrevBatch>(kind) ||
      std::holds_alternative<baseline::StarAlphaZero>(kind)) {
    return gaussian::snr_prediction(s, VarianceKind::kStar, n);
  }
  if (const auto* c = std::get_if<baseline::ConstEta>(&kind)) {
    const double ratio = c->eta / std::exp(gaussian::log_norm_const(s));
    return gaussian::snr_prediction(s, VarianceKind::kConstEta, n, ratio);
  }
  return std::nullopt;
}

/// At alpha = 0 the AM and GM means are tiny and noisy, so their SNR uses the
/// star estimator's empirical mean as the shared numerator (all kinds are
/// unbiased for the same gradient).
std::optional<std::vector<double>> shared_mean_at_zero(const ReplicateEstimates& est,
                                                       double alpha) {
  if (alpha != 0.0) return std::nullopt;
  for (std::size_t k = 0; k < est.kinds.size(); ++k) {
    if (std::holds_alternative<baseline::StarAlphaZero>(est.kinds[k])) {
      std::vector<double> mean;
      for (const auto& m : coordinate_moments(est, k)) mean.push_back(m.mean);
      return mean;
    }
  }
  return std::nullopt;
}

bool uses_shared_mean(const BaselineKind& kind) {
  return std::holds_alternative<baseline::ArithmeticMean>(kind) ||
         std::holds_alternative<baseline::GeometricMean>(kind);
}

std::uint64_t cell_seed(std::uint64_t root, std::size_t alpha_index, std::size_t n_index) {
  return derive_seed(root, alpha_index * 1000003ULL + n_index, StreamPurpose::kSample);
}

// ---------------------------------------------------------------------------
// Subcommands.

void snr_sweep(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuiltModel built = build_model(cfg);
  const HarnessOptions opts{cfg.workers, 1.0};
  SnrReport report;
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    const double alpha = cfg.alphas[a];
    std::vector<BaselineKind> kinds;
    for (const auto& name : cfg.estimators) kinds.push_back(resolve_kind(cfg, name, alpha));
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
      const std::size_t n = cfg.n_grid[i];
      const std::uint64_t seed = cell_seed(cfg.seed, a, i);
      const ReplicateEstimates est =
          run_replicates(*built.model, *built.params, kinds, n, alpha, cfg.replicates, seed, opts);
      const auto shared = shared_mean_at_zero(est, alpha);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        const auto numerator = uses_shared_mean(kinds[k]) ? shared : std::nullopt;
        for (SnrRow& row :
             snr_rows(est, k, *built.model->layout(), n, alpha, seed, numerator)) {
          row.estimator = cfg.estimators[k];
          row.analytic_snr = analytic_snr(cfg, *built.model, kinds[k], alpha, n, row.coordinate);
          report.rows.push_back(std::move(row));
        }
      }
      out << "alpha=" << alpha << " n=" << n << " done\n";
    }
  }
  {
    std::ofstream os = dir.open("snr.csv");
    write_snr_csv(os, report);
  }
  dir.write_json("snr.json", snr_json(report));
}

void variance_sweep(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuiltModel built = build_model(cfg);
  const HarnessOptions opts{cfg.workers, 1.0};
  const ParamLayout& layout = *built.model->layout();
  std::ofstream os = dir.open("variance.csv");
  os.precision(17);
  os << "estimator,alpha,n,coordinate,mean,variance,replicates,seed\n";
  // points[(kind, alpha, coord)] = {(n, variance)}
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
           std::vector<std::pair<double, double>>>
      points;
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    const double alpha = cfg.alphas[a];
    std::vector<BaselineKind> kinds;
    for (const auto& name : cfg.estimators) kinds.push_back(resolve_kind(cfg, name, alpha));
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
      const std::size_t n = cfg.n_grid[i];
      const std::uint64_t seed = cell_seed(cfg.seed, a, i);
      const ReplicateEstimates est =
          run_replicates(*built.model, *built.params, kinds, n, alpha, cfg.replicates, seed, opts);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        const auto moments = coordinate_moments(est, k);
        for (std::size_t c = 0; c < moments.size(); ++c) {
          os << cfg.estimators[k] << ',' << alpha << ',' << n << ',' << layout.name(c) << ','
             << moments[c].mean << ',' << moments[c].variance << ',' << cfg.replicates << ','
             << seed << '\n';
          points[{k, a, c}].emplace_back(static_cast<double>(n), moments[c].variance);
        }
      }
      out << "alpha=" << alpha << " n=" << n << " done\n";
    }
  }
  std::ofstream slopes = dir.open("slopes.csv");
  slopes.precision(17);
  slopes << "estimator,alpha,coordinate,slope,tail_slope,points\n";
  for (const auto& [key, pts] : points) {
    const auto [k, a, c] = key;
    slopes << cfg.estimators[k] << ',' << cfg.alphas[a] << ',' << layout.name(c) << ',';
    const bool positive =
        std::all_of(pts.begin(), pts.end(), [](const auto& p) { return p.second > 0.0; });
    if (pts.size() >= 3 && positive) {
      slopes << fit_loglog_slope(pts) << ',';
      const std::size_t tail = (pts.size() + 1) / 2;
      if (tail >= 3) slopes << fit_loglog_slope_tail(pts, 0.5);
    } else {
      slopes << ',';
    }
    slopes << ',' << pts.size() << '\n';
  }
}

SgaConfig sga_config(const ExperimentConfig& cfg, const std::string& estimator,
                     const Model& model) {
  const OptimizerSpec& o = cfg.optimizer;
  SgaConfig s;
  s.estimator = estimator;
  s.n = o.n;
  s.anneal = o.alpha_ladder.empty() ? AnnealState::fixed(cfg.alphas.front())
                                    : AnnealState::laddered(o.alpha_ladder, o.tau);
  if (o.beta_schedule) s.anneal.enable_beta_schedule();
  s.iterations = o.iterations;
  s.step.size = o.step;
  s.step.decay = o.decay;
  s.step.kind = o.schedule == "inv-sqrt"   ? StepSchedule::Kind::kInvSqrt
                : o.schedule == "harmonic" ? StepSchedule::Kind::kHarmonic
                                           : StepSchedule::Kind::kConstant;
  s.seed = cfg.seed;
  s.star_subsample = o.star_subsample;
  s.clip_norm = o.clip_norm;
  s.grad_norm_tol = o.grad_norm_tol;
  s.grad_norm_smoothing = o.smoothing;
  s.min_iterations = o.min_iterations;
  const ParamLayout& layout = *model.layout();
  s.trainable.resize(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    s.trainable[k] = layout.block(k) == Block::kPhi || o.learn_theta;
  }
  return s;
}

std::string file_stem(const std::string& estimator) {
  std::string s = estimator;
  for (char& c : s) {
    if (c == ':') c = '_';
  }
  return s;
}

void optimize(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuiltModel built = build_model(cfg);
  if (built.simulated) {
    std::ofstream os = dir.open("observations.csv");
    svol::write_observations_csv(os, built.observations);
  }
  json summary = json::object();
  bool aborted = false;
  for (const auto& name : cfg.estimators) {
    const Trajectory traj =
        run_sga(*built.model, *built.params, sga_config(cfg, name, *built.model));
    const std::string stem = file_stem(name);
    {
      std::ofstream os = dir.open("trajectory_" + stem + ".csv");
      write_trajectory_csv(os, traj);
    }
    dir.write_json("trajectory_" + stem + ".json", trajectory_json(traj));
    json entry{{"iterations", traj.records.size()},
               {"final_params", traj.last().params},
               {"final_alpha", traj.last().alpha}};
    entry["converged_at"] = traj.converged_at ? json(*traj.converged_at) : json(nullptr);
    entry["abort_reason"] = traj.abort_reason ? json(*traj.abort_reason) : json(nullptr);
    if (const auto* sv = dynamic_cast<const svol::SvModel*>(built.model.get())) {
      const ParamVector fitted(sv->layout(), tail_average(traj));
      const auto post = svol::summarize_posterior(*sv, fitted, 20000, cfg.seed);
      dir.write_json("posterior_" + stem + ".json", svol::posterior_json(post));
      entry["posterior"] = svol::posterior_json(post);
    }
    out << name << ": " << traj.records.size() << " iterations, final alpha "
        << traj.last().alpha;
    if (traj.abort_reason) {
      out << ", aborted (" << *traj.abort_reason << ")";
      aborted = true;
    }
    out << '\n';
    summary[name] = std::move(entry);
  }
  dir.write_json("summary.json", summary);
  if (aborted) throw std::runtime_error("optimization aborted on a non-finite update");
}

void gaussian_verify(const ExperimentConfig& cfg, OutputDir& dir, std::ostream& out) {
  BuiltModel built = build_model(cfg);
  const HarnessOptions opts{cfg.workers, 1.0};
  const std::size_t n = cfg.n_grid.back();
  const std::size_t d = cfg.gaussian.theta.size();
  std::ofstream os = dir.open("verify.csv");
  os.precision(17);
  os << "estimator,alpha,n,coordinate,empirical_snr,analytic_snr,snr_rel_error,"
        "empirical_scaled_variance,analytic_variance,variance_rel_error,pass\n";
  out << std::left << std::setw(10) << "estimator" << std::setw(7) << "alpha" << std::setw(10)
      << "coord" << std::setw(14) << "snr" << std::setw(14) << "snr_pred" << std::setw(14)
      << "var*n^r" << std::setw(14) << "var_pred" << "result\n";
  std::size_t failures = 0;
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    const double alpha = cfg.alphas[a];
    std::vector<BaselineKind> kinds;
    for (const auto& name : cfg.estimators) kinds.push_back(resolve_kind(cfg, name, alpha));
    const std::uint64_t seed = cell_seed(cfg.seed, a, 0);
    const ReplicateEstimates est =
        run_replicates(*built.model, *built.params, kinds, n, alpha, cfg.replicates, seed, opts);
    const auto shared = shared_mean_at_zero(est, alpha);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const auto moments = coordinate_moments(est, k);
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t coord = d + j;
        const auto predicted = analytic_snr(cfg, *built.model, kinds[k], alpha, n, coord);
        if (!predicted) continue;
        const auto s = setting_for(cfg, alpha, j);
        const auto vkind =
            std::holds_alternative<baseline::ArithmeticMean>(kinds[k])  ? gaussian::VarianceKind::kAm
            : std::holds_alternative<baseline::GeometricMean>(kinds[k]) ? gaussian::VarianceKind::kGm
            : std::holds_alternative<baseline::ConstEta>(kinds[k])
                ? gaussian::VarianceKind::kConstEta
                : gaussian::VarianceKind::kStar;
        double ratio = 0.0;
        if (const auto* c = std::get_if<baseline::ConstEta>(&kinds[k])) {
          ratio = c->eta / std::exp(gaussian::log_norm_const(s));
        }
        const double rate = (vkind == gaussian::VarianceKind::kStar && alpha == 0.0) ? 3.0 : 1.0;
        const double scaled_var = moments[coord].variance * std::pow(static_cast<double>(n), rate);
        const double var_pred = gaussian::asymptotic_variance(s, vkind, ratio);
        const double mean =
            shared && uses_shared_mean(kinds[k]) ? (*shared)[coord] : moments[coord].mean;
        const double snr = moments[coord].std > 0.0
                               ? std::abs(mean) / moments[coord].std
                               : std::numeric_limits<double>::infinity();
        const double snr_err = std::abs(snr - *predicted) / *predicted;
        const double var_err = std::abs(scaled_var - var_pred) / var_pred;
        const bool pass = snr_err <= cfg.verify_tolerance;
        failures += pass ? 0 : 1;
        const std::string coord_name = built.model->layout()->name(coord);
        os << cfg.estimators[k] << ',' << alpha << ',' << n << ',' << coord_name << ',' << snr
           << ',' << *predicted << ',' << snr_err << ',' << scaled_var << ',' << var_pred << ','
           << var_err << ',' << (pass ? "pass" : "fail") << '\n';
        out << std::setw(10) << cfg.estimators[k] << std::setw(7) << alpha << std::setw(10)
            << coord_name << std::setw(14) << snr << std::setw(14) << *predicted << std::setw(14)
            << scaled_var << std::setw(14) << var_pred << (pass ? "PASS" : "FAIL") << '\n';
      }
    }
  }
  out << failures << " comparison(s) outside the " << cfg.verify_tolerance
      << " relative tolerance\n";
}

}  // namespace

std::vector<std::string> execute(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path root(cfg.output);
  if (fs::exists(root)) {
    throw ConfigFailure("output: directory '" + cfg.output + "' already exists");
  }
  fs::create_directories(root);
  OutputDir dir(root);
  const auto start = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();

  if (cfg.subcommand == "snr-sweep") {
    snr_sweep(cfg, dir, out);
  } else if (cfg.subcommand == "variance-sweep") {
    variance_sweep(cfg, dir, out);
  } else if (cfg.subcommand == "optimize" || cfg.subcommand == "ssm-fit") {
    optimize(cfg, dir, out);
  } else if (cfg.subcommand == "gaussian-verify") {
    gaussian_verify(cfg, dir, out);
  } else {
    throw ConfigFailure("subcommand: unknown subcommand '" + cfg.subcommand + "'");
  }

  std::vector<std::string> files = dir.files();
  files.push_back("manifest.json");
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  dir.write_json("manifest.json", json{{"tool", "iwvi"},
                                       {"version", kVersion},
                                       {"subcommand", cfg.subcommand},
                                       {"seed", cfg.seed},
                                       {"started_at", started_at},
                                       {"wall_clock_ms", wall_ms},
                                       {"config", config_to_json(cfg)},
                                       {"files", files}});
  return files;
}

namespace {

int report_errors(const std::vector<ConfigError>& errors, std::ostream& err) {
  for (const auto& e : errors) err << "config error: " << e.path << ": " << e.message << '\n';
  return kExitConfig;
}

int run_validated(const ConfigResult& result, std::ostream& out, std::ostream& err) {
  if (!result.ok()) return report_errors(result.errors, err);
  try {
    const auto files = execute(*result.config, out);
    out << "wrote " << files.size() << " file(s) to " << result.config->output << '\n';
    return kExitOk;
  } catch (const ConfigFailure& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Score-function gradient estimators for the VR-IWAE bound", "iwvi"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  struct Sub {
    CLI::App* app;
    FlagValues values;
  };
  std::map<std::string, Sub> subs;
  const std::map<std::string, std::string> descriptions{
      {"snr-sweep", "empirical SNR of each estimator over alphas and a grid of N"},
      {"variance-sweep", "estimator variances over a grid of N with log-log slopes"},
      {"optimize", "stochastic gradient ascent with optional alpha annealing"},
      {"gaussian-verify", "empirical vs closed-form SNR and variance (Gaussian model)"},
      {"ssm-fit", "pseudo-marginal fit of the stochastic-volatility model"}};
  for (const auto& name : known_subcommands()) {
    Sub& sub = subs[name];
    sub.app = app.add_subcommand(name, descriptions.at(name));
    add_flags(*sub.app, sub.values);
  }
  std::string config_path;
  std::string out_override;
  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config file");
  run_cmd->add_option("--config", config_path, "config file")->required();
  run_cmd->add_option("--out", out_override, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) {
      std::ifstream is(config_path);
      if (!is) {
        err << "config error: config: cannot read '" << config_path << "'\n";
        return kExitConfig;
      }
      std::stringstream text;
      text << is.rdbuf();
      json j;
      try {
        j = json::parse(text.str());
      } catch (const json::parse_error& e) {
        err << "config error: (root): not valid JSON: " << e.what() << '\n';
        return kExitConfig;
      }
      if (!out_override.empty() && j.is_object()) j["output"] = out_override;
      return run_validated(validate_config(j), out, err);
    }
    for (auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      json j = flags_to_json(*sub.app, sub.values, name);
      if (name == "ssm-fit") j["model"]["type"] = "svol";
      return run_validated(validate_config(j), out, err);
    }
  } catch (const ConfigFailure& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace iwvi::cli
