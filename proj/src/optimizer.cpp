#include "iwvi/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "iwvi/bounds.hpp"

namespace iwvi {

double StepSchedule::at(std::size_t t) const {
  const double tt = static_cast<double>(t);
  switch (kind) {
    case Kind::kConstant:
      return size;
    case Kind::kInvSqrt:
      return size / std::sqrt(tt + 1.0);
    case Kind::kHarmonic:
      return size / (1.0 + tt / decay);
  }
  return size;
}

double likelihood_temperature(std::size_t t) {
  return std::min(1.0, 0.001 + static_cast<double>(t) / 100000.0);
}

AnnealState AnnealState::fixed(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidArgument("alpha must lie in [0,1)");
  }
  AnnealState s;
  s.alpha = alpha;
  return s;
}

AnnealState AnnealState::laddered(std::vector<double> ladder, double tau) {
  if (ladder.empty()) {
    throw InvalidArgument("alpha ladder must be non-empty");
  }
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] >= 0.0 && ladder[i] < 1.0)) {
      throw InvalidArgument("alpha must lie in [0,1)");
    }
    if (i > 0 && !(ladder[i] < ladder[i - 1])) {
      throw InvalidArgument("alpha ladder must be strictly decreasing");
    }
  }
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InvalidArgument("ESS threshold fraction must lie in (0,1)");
  }
  AnnealState s;
  s.alpha = ladder.front();
  s.alpha_ladder = std::move(ladder);
  s.ess_threshold_frac = tau;
  return s;
}

void AnnealState::enable_beta_schedule() {
  beta_schedule = true;
  beta = likelihood_temperature(step_index);
}

AnnealState alpha_anneal_step(double ess_value, std::size_t n, const AnnealState& anneal) {
  const double nn = static_cast<double>(n);
  if (!(ess_value >= 1.0 - 1e-9 && ess_value <= nn + 1e-9)) {
    throw InvalidArgument("ESS must lie in [1, N]");
  }
  AnnealState next = anneal;
  if (ess_value > anneal.ess_threshold_frac * nn && next.rung + 1 < next.alpha_ladder.size()) {
    ++next.rung;
    next.alpha = next.alpha_ladder[next.rung];
  }
  return next;
}

namespace {

double norm_over(const std::vector<double>& g, const std::vector<bool>& trainable) {
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (trainable.empty() || trainable[k]) s += g[k] * g[k];
  }
  return std::sqrt(s);
}

}  // namespace

StepOutcome sga_step(const Model& model, const ParamVector& params, const GradientFn& estimator,
                     std::size_t n, const AnnealState& anneal, double step_size,
                     const SeedRecord& seed, const std::vector<bool>& trainable,
                     double clip_norm) {
  if (!(step_size >= 0.0)) {
    throw InvalidArgument("step size must be nonnegative");
  }
  if (!trainable.empty() && trainable.size() != params.size()) {
    throw InvalidArgument("trainable mask does not match the parameter vector");
  }
  StepOutcome out{params, anneal, {}, {}, {}, true, {}};
  out.record.alpha = anneal.alpha;
  out.record.beta = anneal.beta;
  try {
    const SampleBatch batch = draw_batch(model, params, n, seed);
    const LogWeightBatch logw = eval_log_weights(model, params, batch, anneal.alpha, anneal.beta);
    const ScoreMatrix scores = eval_scores(model, params, batch, anneal.beta);
    const GradientEstimate est = estimator(logw, scores);
    out.record.ess = ess(logw);
    out.record.bound = std::holds_alternative<baseline::Elbo>(est.kind)
                           ? elbo_estimate(logw.values())
                           : vr_iwae_estimate(logw);
    out.record.grad_norm = norm_over(est.grad, trainable);
    out.grad = est.grad;
    for (std::size_t k = 0; k < out.grad.size(); ++k) {
      if (!trainable.empty() && !trainable[k]) out.grad[k] = 0.0;
    }
    if (n >= 2 && anneal.alpha > 0.0) {
      out.log_eta = log_eta_star_estimates(logw, scores);
    }
    if (!std::isfinite(out.record.grad_norm)) {
      throw ModelError("gradient is not finite");
    }
    double scale = step_size;
    if (clip_norm > 0.0 && out.record.grad_norm > clip_norm) {
      scale *= clip_norm / out.record.grad_norm;
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (trainable.empty() || trainable[k]) {
        out.params[k] += scale * est.grad[k];
      }
    }
    if (!out.params.all_finite()) {
      throw ModelError("parameters became non-finite");
    }
    out.anneal = alpha_anneal_step(std::clamp(out.record.ess, 1.0, static_cast<double>(n)), n,
                                   anneal);
  } catch (const ModelError& e) {
    out.ok = false;
    out.error = e.what();
    out.params = params;
    out.record.grad_norm = std::numeric_limits<double>::quiet_NaN();
  }
  ++out.anneal.step_index;
  if (out.anneal.beta_schedule) {
    out.anneal.beta = likelihood_temperature(out.anneal.step_index);
  }
  const auto values = out.params.values();
  out.record.params.assign(values.begin(), values.end());
  return out;
}

StepOutcome sga_step(const Model& model, const ParamVector& params, const BaselineKind& kind,
                     std::size_t n, const AnnealState& anneal, double step_size,
                     const SeedRecord& seed, const std::vector<bool>& trainable,
                     double clip_norm) {
  return sga_step(
      model, params,
      [&kind](const LogWeightBatch& logw, const ScoreMatrix& scores) {
        return estimate_gradient(logw, scores, kind);
      },
      n, anneal, step_size, seed, trainable, clip_norm);
}

Trajectory run_sga(const Model& model, const ParamVector& initial, const SgaConfig& config) {
  if (config.n == 0) {
    throw InvalidArgument("batch size must be positive");
  }
  // Validates the estimator name up front.
  (void)parse_kind(config.estimator, config.anneal.alpha);

  Trajectory traj;
  for (std::size_t k = 0; k < initial.size(); ++k) {
    traj.coordinate_names.push_back(initial.layout().name(k));
  }
  traj.initial.params.assign(initial.values().begin(), initial.values().end());
  traj.initial.alpha = config.anneal.alpha;
  traj.initial.beta = config.anneal.beta;
  traj.initial.grad_norm = std::numeric_limits<double>::quiet_NaN();
  traj.initial.ess = std::numeric_limits<double>::quiet_NaN();
  traj.initial.bound = std::numeric_limits<double>::quiet_NaN();

  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t stream_root = derive_seed(config.seed, 0, StreamPurpose::kOptimizer);
  ParamVector params = initial;
  AnnealState anneal = config.anneal;
  std::vector<double> prev_log_eta;
  std::vector<double> smoothed_grad;

  for (std::size_t t = 0; t < config.iterations; ++t) {
    BaselineKind kind = parse_kind(config.estimator, anneal.alpha);
    if (auto* loo = std::get_if<baseline::StarLeaveOneOut>(&kind)) {
      loo->subsample = config.star_subsample;
    }
    if (auto* prev = std::get_if<baseline::StarPrevBatch>(&kind)) {
      if (prev_log_eta.empty()) {
        // Warm-up batch for the very first step.
        const SampleBatch warm = draw_batch(
            model, params, config.n,
            SeedRecord{derive_seed(config.seed, 0, StreamPurpose::kEta), t});
        prev_log_eta = log_eta_star_estimates(
            eval_log_weights(model, params, warm, anneal.alpha, anneal.beta),
            eval_scores(model, params, warm, anneal.beta));
      }
      prev->log_eta = prev_log_eta;
    }
    StepOutcome step = sga_step(model, params, kind, config.n, anneal, config.step.at(t),
                                SeedRecord{stream_root, t}, config.trainable, config.clip_norm);
    step.record.iter = t + 1;
    step.record.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    traj.records.push_back(step.record);
    if (!step.ok) {
      traj.abort_reason = "iteration " + std::to_string(t + 1) + ": " + step.error;
      break;
    }
    params = std::move(step.params);
    anneal = std::move(step.anneal);
    if (!step.log_eta.empty()) {
      prev_log_eta = std::move(step.log_eta);
    } else {
      prev_log_eta.assign(params.size(), -std::numeric_limits<double>::infinity());
    }
    if (config.grad_norm_tol) {
      const double sm = config.grad_norm_smoothing;
      if (smoothed_grad.empty()) {
        smoothed_grad = step.grad;
      } else {
        for (std::size_t k = 0; k < smoothed_grad.size(); ++k) {
          smoothed_grad[k] = sm * smoothed_grad[k] + (1.0 - sm) * step.grad[k];
        }
      }
      double norm = 0.0;
      for (double g : smoothed_grad) norm += g * g;
      if (t + 1 >= config.min_iterations && std::sqrt(norm) < *config.grad_norm_tol) {
        traj.converged_at = t + 1;
        break;
      }
    }
  }
  return traj;
}

std::vector<double> tail_average(const Trajectory& trajectory, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("tail fraction must lie in (0,1]");
  }
  if (trajectory.records.empty()) return trajectory.initial.params;
  const std::size_t count = trajectory.records.size();
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count))));
  std::vector<double> mean(trajectory.initial.params.size(), 0.0);
  for (std::size_t i = count - take; i < count; ++i) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += trajectory.records[i].params[k];
  }
  for (double& m : mean) m /= static_cast<double>(take);
  return mean;
}

namespace {

void write_value(std::ostream& os, double v) {
  if (std::isnan(v)) {
    os << "nan";
  } else if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
  } else {
    os << v;
  }
}

void write_record(std::ostream& os, const TrajectoryRecord& r) {
  os << r.iter;
  for (double p : r.params) {
    os << ',';
    write_value(os, p);
  }
  for (double v : {r.grad_norm, r.ess, r.bound, r.alpha, r.beta, r.elapsed_ms}) {
    os << ',';
    write_value(os, v);
  }
  os << '\n';
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json record_json(const TrajectoryRecord& r) {
  return nlohmann::json{{"iter", r.iter},
                        {"params", r.params},
                        {"grad_norm", number_or_null(r.grad_norm)},
                        {"ess", number_or_null(r.ess)},
                        {"bound", number_or_null(r.bound)},
                        {"alpha", r.alpha},
                        {"beta", r.beta},
                        {"elapsed_ms", r.elapsed_ms}};
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
  const auto precision = os.precision(17);
  os << "iter";
  for (const auto& name : trajectory.coordinate_names) os << ',' << name;
  os << ",grad_norm,ess,bound,alpha,beta,elapsed_ms\n";
  write_record(os, trajectory.initial);
  for (const auto& r : trajectory.records) write_record(os, r);
  os.precision(precision);
}

nlohmann::json trajectory_json(const Trajectory& trajectory) {
  nlohmann::json records = nlohmann::json::array();
  records.push_back(record_json(trajectory.initial));
  for (const auto& r : trajectory.records) records.push_back(record_json(r));
  nlohmann::json j{{"coordinates", trajectory.coordinate_names}, {"records", std::move(records)}};
  j["converged_at"] =
      trajectory.converged_at ? nlohmann::json(*trajectory.converged_at) : nlohmann::json(nullptr);
  j["abort_reason"] =
      trajectory.abort_reason ? nlohmann::json(*trajectory.abort_reason) : nlohmann::json(nullptr);
  return j;
}

}  // namespace iwvi
