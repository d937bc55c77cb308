#include "iwvi/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "iwvi/bounds.hpp"

namespace iwvi {

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers == 0) {
    workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

ReplicateEstimates run_replicates(const Model& model, const ParamVector& params,
                                  const std::vector<BaselineKind>& kinds, std::size_t n,
                                  double alpha, std::size_t replicates, std::uint64_t seed,
                                  const HarnessOptions& options) {
  if (replicates < 2) {
    throw InvalidArgument("at least 2 replicates are needed");
  }
  if (kinds.empty()) {
    throw InvalidArgument("no estimator kinds requested");
  }
  ReplicateEstimates out;
  out.replicates = replicates;
  out.coords = params.size();
  out.kinds = kinds;
  out.values.assign(kinds.size(), std::vector<double>(replicates * out.coords));

  const std::uint64_t eta_root = derive_seed(seed, 0, StreamPurpose::kEta);
  parallel_for(replicates, options.workers, [&](std::size_t r) {
    const SampleBatch batch = draw_batch(model, params, n, SeedRecord{seed, r});
    const LogWeightBatch logw = eval_log_weights(model, params, batch, alpha, options.beta);
    const ScoreMatrix scores = eval_scores(model, params, batch, options.beta);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      BaselineKind kind = kinds[k];
      if (auto* prev = std::get_if<baseline::StarPrevBatch>(&kind); prev && prev->log_eta.empty()) {
        const SampleBatch aux = draw_batch(model, params, n, SeedRecord{eta_root, r});
        prev->log_eta = log_eta_star_estimates(
            eval_log_weights(model, params, aux, alpha, options.beta),
            eval_scores(model, params, aux, options.beta));
      }
      const GradientEstimate est = estimate_gradient(logw, scores, kind);
      std::copy(est.grad.begin(), est.grad.end(), out.values[k].begin() + r * out.coords);
    }
  });
  return out;
}

std::vector<CoordinateMoments> coordinate_moments(const ReplicateEstimates& est,
                                                  std::size_t kind) {
  std::vector<CoordinateMoments> out(est.coords);
  const double r = static_cast<double>(est.replicates);
  for (std::size_t k = 0; k < est.coords; ++k) {
    CompensatedSum sum;
    for (std::size_t i = 0; i < est.replicates; ++i) sum.add(est.at(kind, i, k));
    const double mean = sum.value() / r;
    CompensatedSum sq;
    for (std::size_t i = 0; i < est.replicates; ++i) {
      const double d = est.at(kind, i, k) - mean;
      sq.add(d * d);
    }
    out[k].mean = mean;
    out[k].variance = sq.value() / (r - 1.0);
    out[k].std = std::sqrt(out[k].variance);
    out[k].std_error = out[k].std / std::sqrt(r);
  }
  return out;
}

std::vector<SnrRow> snr_rows(const ReplicateEstimates& est, std::size_t kind,
                             const ParamLayout& layout, std::size_t n, double alpha,
                             std::uint64_t seed,
                             const std::optional<std::vector<double>>& shared_mean) {
  const std::vector<CoordinateMoments> moments = coordinate_moments(est, kind);
  std::vector<SnrRow> rows;
  rows.reserve(est.coords);
  for (std::size_t k = 0; k < est.coords; ++k) {
    SnrRow row;
    row.estimator = kind_name(est.kinds[kind]);
    row.alpha = alpha;
    row.n = n;
    row.coordinate = k;
    row.coordinate_name = layout.name(k);
    row.mean = moments[k].mean;
    row.std = moments[k].std;
    const double numerator = std::abs(shared_mean ? shared_mean->at(k) : row.mean);
    if (row.std > 0.0) {
      row.snr = numerator / row.std;
    } else {
      row.snr = std::numeric_limits<double>::infinity();
      row.snr_infinite = true;
    }
    row.replicates = est.replicates;
    row.seed = seed;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SnrRow> measure_snr(const Model& model, const ParamVector& params,
                                const BaselineKind& kind, std::size_t n, double alpha,
                                std::size_t replicates, std::uint64_t seed,
                                const HarnessOptions& options) {
  const ReplicateEstimates est =
      run_replicates(model, params, {kind}, n, alpha, replicates, seed, options);
  return snr_rows(est, 0, params.layout(), n, alpha, seed);
}

double fit_loglog_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) {
    throw InvalidArgument("slope fit needs at least 3 points");
  }
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [n, v] : points) {
    if (!(n > 0.0) || !(v > 0.0)) {
      throw InvalidArgument("slope fit needs positive n and values");
    }
    mx += std::log(n);
    my += std::log(v);
  }
  const double count = static_cast<double>(points.size());
  mx /= count;
  my /= count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& [n, v] : points) {
    const double dx = std::log(n) - mx;
    sxy += dx * (std::log(v) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) {
    throw InvalidArgument("slope fit needs at least two distinct n");
  }
  return sxy / sxx;
}

double fit_loglog_slope_tail(std::span<const std::pair<double, double>> points,
                             double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("tail fraction must lie in (0,1]");
  }
  const auto count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(points.size())));
  return fit_loglog_slope(points.subspan(points.size() - std::min(count, points.size())));
}

std::vector<std::pair<std::size_t, double>> measure_variance_curve(
    const Model& model, const ParamVector& params, const BaselineKind& kind,
    std::span<const std::size_t> n_grid, double alpha, std::size_t replicates,
    std::uint64_t seed, std::size_t coord, const HarnessOptions& options) {
  if (coord >= params.size()) {
    throw InvalidArgument("coordinate out of range");
  }
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(n_grid.size());
  for (std::size_t n : n_grid) {
    const ReplicateEstimates est =
        run_replicates(model, params, {kind}, n, alpha, replicates, seed, options);
    out.emplace_back(n, coordinate_moments(est, 0)[coord].variance);
  }
  return out;
}

namespace {

void write_number(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
  } else if (std::isnan(v)) {
    os << "nan";
  } else {
    os << v;
  }
}

}  // namespace

void write_snr_csv(std::ostream& os, const SnrReport& report) {
  const auto precision = os.precision(17);
  os << "estimator,alpha,n,coordinate,mean,std,snr,analytic_snr,replicates,seed\n";
  for (const SnrRow& row : report.rows) {
    os << row.estimator << ',' << row.alpha << ',' << row.n << ',' << row.coordinate_name << ',';
    write_number(os, row.mean);
    os << ',';
    write_number(os, row.std);
    os << ',';
    write_number(os, row.snr);
    os << ',';
    if (row.analytic_snr) write_number(os, *row.analytic_snr);
    os << ',' << row.replicates << ',' << row.seed << '\n';
  }
  os.precision(precision);
}

nlohmann::json snr_json(const SnrReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SnrRow& row : report.rows) {
    nlohmann::json j{{"estimator", row.estimator},
                     {"alpha", row.alpha},
                     {"n", row.n},
                     {"coordinate", row.coordinate_name},
                     {"mean", row.mean},
                     {"std", row.std},
                     {"replicates", row.replicates},
                     {"seed", row.seed}};
    // JSON has no infinity; the flag carries it.
    j["snr"] = row.snr_infinite ? nlohmann::json(nullptr) : nlohmann::json(row.snr);
    j["snr_infinite"] = row.snr_infinite;
    j["analytic_snr"] = row.analytic_snr ? nlohmann::json(*row.analytic_snr) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  return nlohmann::json{{"rows", std::move(rows)}};
}

}  // namespace iwvi
