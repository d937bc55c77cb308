#ifndef IWVI_OPTIMIZER_HPP
#define IWVI_OPTIMIZER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iwvi/estimators.hpp"
#include "iwvi/model.hpp"

namespace iwvi {

/// Step size as a function of the 0-based iteration t.
struct StepSchedule {
  enum class Kind { kConstant, kInvSqrt, kHarmonic };

  Kind kind = Kind::kConstant;
  double size = 0.1;
  /// Harmonic only: size / (1 + t / decay).
  double decay = 1000.0;

  double at(std::size_t t) const;
};

/// beta_t = min{1, 0.001 + t / 100000}.
double likelihood_temperature(std::size_t t);

/// Current alpha, likelihood temperature and the alpha ladder position.
struct AnnealState {
  double alpha = 0.0;
  double beta = 1.0;
  double ess_threshold_frac = 0.5;
  /// Decreasing rungs; alpha == alpha_ladder[rung] while the ladder is in use.
  std::vector<double> alpha_ladder;
  std::size_t rung = 0;
  std::size_t step_index = 0;
  bool beta_schedule = false;

  /// Constant alpha, no tempering.
  static AnnealState fixed(double alpha);
  /// Starts at ladder.front(). Throws InvalidArgument unless the ladder is
  /// non-empty, strictly decreasing and inside [0,1), and tau is in (0,1).
  static AnnealState laddered(std::vector<double> ladder, double tau);
  void enable_beta_schedule();
};

/// Moves alpha one rung down when ess_value > tau * n; never moves it up.
AnnealState alpha_anneal_step(double ess_value, std::size_t n, const AnnealState& anneal);

struct TrajectoryRecord {
  std::size_t iter = 0;
  std::vector<double> params;
  double grad_norm = 0.0;
  double ess = 0.0;
  double bound = 0.0;
  double alpha = 0.0;
  double beta = 1.0;
  double elapsed_ms = 0.0;
};

struct Trajectory {
  std::vector<std::string> coordinate_names;
  /// Parameters before the first step.
  TrajectoryRecord initial;
  /// One record per completed iteration, holding the updated parameters and
  /// the statistics of the batch that produced the update.
  std::vector<TrajectoryRecord> records;
  std::optional<std::size_t> converged_at;
  std::optional<std::string> abort_reason;

  const TrajectoryRecord& last() const { return records.empty() ? initial : records.back(); }
};

using GradientFn = std::function<GradientEstimate(const LogWeightBatch&, const ScoreMatrix&)>;

struct StepOutcome {
  ParamVector params;
  AnnealState anneal;
  TrajectoryRecord record;
  /// log eta per coordinate estimated from this step's batch (for the
  /// previous-batch star baseline of the next step).
  std::vector<double> log_eta;
  /// The (unclipped) gradient estimate, zero outside `trainable`.
  std::vector<double> grad;
  bool ok = true;
  std::string error;
};

/// One ascent step params + step_size * grad on the coordinates flagged in
/// `trainable` (all when empty). The batch is drawn from stream `seed`. With
/// clip_norm > 0 the applied gradient is rescaled to norm at most clip_norm.
StepOutcome sga_step(const Model& model, const ParamVector& params, const GradientFn& estimator,
                     std::size_t n, const AnnealState& anneal, double step_size,
                     const SeedRecord& seed, const std::vector<bool>& trainable = {},
                     double clip_norm = 0.0);

StepOutcome sga_step(const Model& model, const ParamVector& params, const BaselineKind& kind,
                     std::size_t n, const AnnealState& anneal, double step_size,
                     const SeedRecord& seed, const std::vector<bool>& trainable = {},
                     double clip_norm = 0.0);

struct SgaConfig {
  /// Estimator name resolved each step against the current alpha (see
  /// parse_kind); "star" switches to the closed form once alpha reaches 0.
  std::string estimator = "star";
  std::size_t n = 100;
  AnnealState anneal = AnnealState::fixed(0.0);
  std::size_t iterations = 1000;
  StepSchedule step;
  std::uint64_t seed = 0;
  std::vector<bool> trainable;
  /// Leave-one-out subsample size for the star baseline (0 = N).
  std::size_t star_subsample = 0;
  /// 0 disables clipping.
  double clip_norm = 0.0;
  /// Stop once the norm of the exponentially smoothed gradient vector,
  /// m_t = s m_{t-1} + (1 - s) g_t, drops below this.
  std::optional<double> grad_norm_tol;
  double grad_norm_smoothing = 0.9;
  std::size_t min_iterations = 0;
};

Trajectory run_sga(const Model& model, const ParamVector& initial, const SgaConfig& config);

/// Mean of the parameter records over the last ceil(fraction * count)
/// iterations (the initial record when there are none).
std::vector<double> tail_average(const Trajectory& trajectory, double fraction = 0.25);

/// Columns: iter,<coordinate names...>,grad_norm,ess,bound,alpha,beta,elapsed_ms
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);
nlohmann::json trajectory_json(const Trajectory& trajectory);

}  // namespace iwvi

#endif  // IWVI_OPTIMIZER_HPP
