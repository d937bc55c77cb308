#ifndef IWVI_DIAGNOSTICS_HPP
#define IWVI_DIAGNOSTICS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iwvi/estimators.hpp"
#include "iwvi/model.hpp"

namespace iwvi {

/// Runs fn(i) for i in [0, count) on `workers` threads (0 = hardware
/// concurrency). The first exception thrown by any task is rethrown.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct SnrRow {
  std::string estimator;
  double alpha = 0.0;
  std::size_t n = 0;
  std::size_t coordinate = 0;
  std::string coordinate_name;
  double mean = 0.0;
  double std = 0.0;
  /// |mean| / std; +inf (with snr_infinite set) when std == 0.
  double snr = 0.0;
  bool snr_infinite = false;
  std::optional<double> analytic_snr;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

struct SnrReport {
  std::vector<SnrRow> rows;
};

struct HarnessOptions {
  std::size_t workers = 0;
  double beta = 1.0;
};

/// Per-replicate gradient estimates of several estimator kinds evaluated on
/// the same batches. values[kind][r * coords + k].
struct ReplicateEstimates {
  std::size_t replicates = 0;
  std::size_t coords = 0;
  std::vector<BaselineKind> kinds;
  std::vector<std::vector<double>> values;

  double at(std::size_t kind, std::size_t r, std::size_t k) const {
    return values[kind][r * coords + k];
  }
};

/// Draws `replicates` independent batches of size n (replicate r uses stream
/// {seed, r}) and evaluates every kind on each. A StarPrevBatch kind with an
/// empty log_eta gets its eta from an independent auxiliary batch per
/// replicate. Output is identical for any worker count.
ReplicateEstimates run_replicates(const Model& model, const ParamVector& params,
                                  const std::vector<BaselineKind>& kinds, std::size_t n,
                                  double alpha, std::size_t replicates, std::uint64_t seed,
                                  const HarnessOptions& options = {});

struct CoordinateMoments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double std = 0.0;
  double std_error = 0.0;  // std / sqrt(R)
};

/// Moments of one kind's estimates for every coordinate.
std::vector<CoordinateMoments> coordinate_moments(const ReplicateEstimates& est,
                                                  std::size_t kind);

/// One SnrRow per coordinate. If `shared_mean` is given, it replaces the
/// empirical mean in the SNR numerator (all unbiased kinds share E).
std::vector<SnrRow> snr_rows(const ReplicateEstimates& est, std::size_t kind,
                             const ParamLayout& layout, std::size_t n, double alpha,
                             std::uint64_t seed,
                             const std::optional<std::vector<double>>& shared_mean = std::nullopt);

std::vector<SnrRow> measure_snr(const Model& model, const ParamVector& params,
                                const BaselineKind& kind, std::size_t n, double alpha,
                                std::size_t replicates, std::uint64_t seed,
                                const HarnessOptions& options = {});

/// OLS slope of log(value) against log(n). Needs >= 3 points, all positive.
double fit_loglog_slope(std::span<const std::pair<double, double>> points);

/// Slope over the last ceil(fraction * size) points (the asymptotic regime).
double fit_loglog_slope_tail(std::span<const std::pair<double, double>> points,
                             double fraction = 0.5);

/// Empirical variance of coordinate `coord` of the estimator for each n.
std::vector<std::pair<std::size_t, double>> measure_variance_curve(
    const Model& model, const ParamVector& params, const BaselineKind& kind,
    std::span<const std::size_t> n_grid, double alpha, std::size_t replicates,
    std::uint64_t seed, std::size_t coord, const HarnessOptions& options = {});

/// Columns: estimator,alpha,n,coordinate,mean,std,snr,analytic_snr,replicates,seed
void write_snr_csv(std::ostream& os, const SnrReport& report);
nlohmann::json snr_json(const SnrReport& report);

}  // namespace iwvi

#endif  // IWVI_DIAGNOSTICS_HPP
