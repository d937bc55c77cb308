#include "iwvi/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "iwvi/bounds.hpp"

namespace iwvi {

namespace {

constexpr double kMinScoreVariance = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

/// w_j^{1-alpha} in a shifted scale: u_j = exp((1-alpha) log w_j - m).
struct TemperedWeights {
  std::vector<double> scaled_log;  // (1-alpha) log w_j
  std::vector<double> u;
  std::vector<double> loo;  // sum_{j != i} u_j without cancellation
  double shift = 0.0;       // m
  double total = 0.0;       // S = sum_j u_j
  double one_minus_alpha = 1.0;

  double wbar(std::size_t j) const { return u[j] / total; }

  /// log sum_{j != i} u_j, exact even when the sum underflows.
  double log_loo(std::size_t i) const {
    if (loo[i] > 1e-290) {
      return std::log(loo[i]);
    }
    double m = kNegInf;
    for (std::size_t j = 0; j < scaled_log.size(); ++j) {
      if (j != i) m = std::max(m, scaled_log[j]);
    }
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t j = 0; j < scaled_log.size(); ++j) {
      if (j != i) s += std::exp(scaled_log[j] - m);
    }
    return m - shift + std::log(s);
  }
};

TemperedWeights temper(const LogWeightBatch& logw) {
  TemperedWeights tw;
  const std::size_t n = logw.size();
  tw.one_minus_alpha = 1.0 - logw.alpha();
  tw.scaled_log.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    tw.scaled_log[j] = tw.one_minus_alpha * logw[j];
  }
  tw.shift = *std::max_element(tw.scaled_log.begin(), tw.scaled_log.end());
  tw.u.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    tw.u[j] = std::exp(tw.scaled_log[j] - tw.shift);
  }
  // Prefix/suffix sums so that S - u_i never cancels catastrophically.
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t j = n; j-- > 0;) {
    suffix[j] = suffix[j + 1] + tw.u[j];
  }
  tw.loo.resize(n);
  double prefix = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    tw.loo[j] = prefix + suffix[j + 1];
    prefix += tw.u[j];
  }
  tw.total = prefix;
  return tw;
}

void check_shapes(const LogWeightBatch& logw, const ScoreMatrix& scores) {
  if (logw.empty()) {
    throw InvalidArgument("gradient estimate of an empty batch");
  }
  if (scores.rows() != logw.size()) {
    throw InvalidArgument("score matrix has " + std::to_string(scores.rows()) +
                          " rows for a batch of " + std::to_string(logw.size()));
  }
}

std::vector<double> first_term(const TemperedWeights& tw, const ScoreMatrix& scores) {
  std::vector<double> grad(scores.cols(), 0.0);
  for (std::size_t j = 0; j < scores.rows(); ++j) {
    const double wb = tw.wbar(j);
    const auto row = scores.w_row(j);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] += wb * row[k];
    }
  }
  return grad;
}

std::vector<double> score_sums(const ScoreMatrix& scores) {
  std::vector<double> sums(scores.cols(), 0.0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.q_row(i);
    for (std::size_t k = 0; k < sums.size(); ++k) {
      sums[k] += row[k];
    }
  }
  return sums;
}

/// log(1 - wbar_i + f_i / S) with f_i given on the u scale.
double log_argument(const TemperedWeights& tw, std::size_t i, double f_scaled) {
  if (f_scaled == 0.0) {
    const double l = tw.log_loo(i);
    if (!std::isfinite(l)) {
      throw InvalidArgument("non-positive log argument in VIMCO baseline");
    }
    return l - std::log(tw.total);
  }
  const double arg = tw.loo[i] + f_scaled;
  if (!(arg > 0.0) || !std::isfinite(arg)) {
    throw InvalidArgument("non-positive log argument in VIMCO baseline");
  }
  return std::log(arg) - std::log(tw.total);
}

/// Subtracts 1/(1-alpha) sum_i dlog q_i * log_arg_i from grad, for a baseline
/// shared by every coordinate.
void subtract_shared_baseline(const TemperedWeights& tw, const ScoreMatrix& scores,
                              const std::vector<double>& f_scaled, std::vector<double>& grad) {
  const double inv = 1.0 / tw.one_minus_alpha;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const double la = log_argument(tw, i, f_scaled[i]);
    const auto row = scores.q_row(i);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] -= inv * row[k] * la;
    }
  }
}

/// Sufficient statistics of (u, s) over a set of draws, with s = dlog q.
struct StarSums {
  double a10 = 0.0, a11 = 0.0, a12 = 0.0, a01 = 0.0, a02 = 0.0;

  void add(double u, double s, double sign = 1.0) {
    a10 += sign * u;
    a11 += sign * u * s;
    a12 += sign * u * s * s;
    a01 += sign * s;
    a02 += sign * s * s;
  }
};

/// alpha * [a12 - a11^2/a10] / [a02 - a01^2] with every a divided by `count`,
/// clamped at zero; zero for degenerate denominators.
double star_ratio(const StarSums& sums, double u_sum, double count, double alpha) {
  if (count < 2.0 || u_sum <= 0.0) {
    return 0.0;
  }
  const double a10 = u_sum / count;
  const double a11 = sums.a11 / count;
  const double a12 = sums.a12 / count;
  const double a01 = sums.a01 / count;
  const double a02 = sums.a02 / count;
  const double den = a02 - a01 * a01;
  if (!(den >= kMinScoreVariance)) {
    return 0.0;
  }
  const double num = a12 - a11 * a11 / a10;
  return std::max(0.0, alpha * num / den);
}

/// f_{-i} on the u scale for coordinate k.
std::vector<double> f_star_scaled(const TemperedWeights& tw, const ScoreMatrix& scores,
                                  std::size_t k, double alpha, std::size_t subsample) {
  const std::size_t n = scores.rows();
  const std::size_t n0 = (subsample == 0 || subsample > n) ? n : subsample;
  std::vector<double> f(n, 0.0);
  if (alpha == 0.0) {
    return f;
  }
  StarSums full;
  for (std::size_t j = 0; j < n0; ++j) {
    full.add(tw.u[j], scores.q(j, k));
  }
  // Leave-one-out weight totals over the subsample without cancellation.
  std::vector<double> loo_u(n0, 0.0);
  {
    std::vector<double> suffix(n0 + 1, 0.0);
    for (std::size_t j = n0; j-- > 0;) suffix[j] = suffix[j + 1] + tw.u[j];
    double prefix = 0.0;
    for (std::size_t j = 0; j < n0; ++j) {
      loo_u[j] = prefix + suffix[j + 1];
      prefix += tw.u[j];
    }
  }
  const double all_value = star_ratio(full, full.a10, static_cast<double>(n0), alpha);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= n0) {
      f[i] = all_value;
      continue;
    }
    StarSums loo = full;
    loo.add(tw.u[i], scores.q(i, k), -1.0);
    f[i] = star_ratio(loo, loo_u[i], static_cast<double>(n0 - 1), alpha);
  }
  return f;
}

GradientEstimate make_estimate(std::vector<double> grad, BaselineKind kind,
                               const LogWeightBatch& logw) {
  GradientEstimate est{std::move(grad), std::move(kind), logw.size(), logw.alpha(), std::nullopt};
  for (double g : est.grad) {
    if (!std::isfinite(g)) {
      throw ModelError("gradient estimate is not finite");
    }
  }
  return est;
}

}  // namespace

std::string kind_name(const BaselineKind& kind) {
  return std::visit(
      Overloaded{
          [](const baseline::Naive&) { return std::string("naive"); },
          [](const baseline::Inter&) { return std::string("inter"); },
          [](const baseline::ArithmeticMean&) { return std::string("am"); },
          [](const baseline::GeometricMean&) { return std::string("gm"); },
          [](const baseline::ConstEta& c) {
            std::ostringstream os;
            os << "const-eta:" << c.eta;
            return os.str();
          },
          [](const baseline::StarLeaveOneOut&) { return std::string("star"); },
          [](const baseline::StarPrevBatch&) { return std::string("star-prev"); },
          [](const baseline::StarAlphaZero&) { return std::string("star0"); },
          [](const baseline::Elbo&) { return std::string("elbo"); },
      },
      kind);
}

BaselineKind parse_kind(std::string_view name, double alpha) {
  if (name == "naive") return baseline::Naive{};
  if (name == "inter") return baseline::Inter{};
  if (name == "am") return baseline::ArithmeticMean{};
  if (name == "gm") return baseline::GeometricMean{};
  if (name == "star") {
    if (alpha == 0.0) return baseline::StarAlphaZero{};
    return baseline::StarLeaveOneOut{};
  }
  if (name == "star-loo") return baseline::StarLeaveOneOut{};
  if (name == "star-prev") return baseline::StarPrevBatch{};
  if (name == "star0") return baseline::StarAlphaZero{};
  if (name == "elbo") return baseline::Elbo{};
  constexpr std::string_view kEtaPrefix = "const-eta:";
  if (name.starts_with(kEtaPrefix)) {
    const std::string value(name.substr(kEtaPrefix.size()));
    std::size_t used = 0;
    double eta = 0.0;
    try {
      eta = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty() || !(eta >= 0.0)) {
      throw InvalidArgument("const-eta needs a nonnegative number, got '" + value + "'");
    }
    return baseline::ConstEta{eta};
  }
  throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

GradientEstimate naive_grad(const LogWeightBatch& logw, const ScoreMatrix& scores) {
  check_shapes(logw, scores);
  const TemperedWeights tw = temper(logw);
  std::vector<double> grad = first_term(tw, scores);
  const double bound = vr_iwae_estimate(logw);
  const std::vector<double> sums = score_sums(scores);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad[k] += sums[k] * bound;
  }
  return make_estimate(std::move(grad), baseline::Naive{}, logw);
}

GradientEstimate inter_grad(const LogWeightBatch& logw, const ScoreMatrix& scores,
                            double log_norm_const) {
  check_shapes(logw, scores);
  const TemperedWeights tw = temper(logw);
  std::vector<double> grad = first_term(tw, scores);
  const double n = static_cast<double>(logw.size());
  const double residual = tw.shift + std::log(tw.total) - std::log(n) - log_norm_const;
  const std::vector<double> sums = score_sums(scores);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad[k] += sums[k] * residual / tw.one_minus_alpha;
  }
  return make_estimate(std::move(grad), baseline::Inter{log_norm_const}, logw);
}

std::vector<double> f_star_leave_one_out(const LogWeightBatch& logw, const ScoreMatrix& scores,
                                         std::size_t coord, std::size_t subsample) {
  check_shapes(logw, scores);
  if (coord >= scores.cols()) {
    throw InvalidArgument("coordinate out of range");
  }
  const std::size_t n0 = (subsample == 0 || subsample > logw.size()) ? logw.size() : subsample;
  if (n0 < 3) {
    throw InvalidArgument("leave-one-out optimal baseline needs at least 3 draws");
  }
  const TemperedWeights tw = temper(logw);
  std::vector<double> f = f_star_scaled(tw, scores, coord, logw.alpha(), subsample);
  const double scale = std::exp(tw.shift);
  for (double& v : f) {
    v *= scale;
  }
  return f;
}

GradientEstimate vimco_star_alpha0(const LogWeightBatch& logw, const ScoreMatrix& scores) {
  check_shapes(logw, scores);
  if (logw.alpha() != 0.0) {
    throw InvalidArgument("the closed-form star estimator requires alpha = 0");
  }
  if (logw.size() < 2) {
    throw InvalidArgument("the closed-form star estimator requires N >= 2");
  }
  const TemperedWeights tw = temper(logw);
  std::vector<double> grad = first_term(tw, scores);
  const double log_total = std::log(tw.total);
  for (std::size_t j = 0; j < scores.rows(); ++j) {
    const double log_one_minus_wbar = tw.log_loo(j) - log_total;
    if (!std::isfinite(log_one_minus_wbar)) {
      throw InvalidArgument("non-positive log argument in VIMCO baseline");
    }
    const auto row = scores.q_row(j);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] -= log_one_minus_wbar * row[k];
    }
  }
  return make_estimate(std::move(grad), baseline::StarAlphaZero{}, logw);
}

namespace {

double log_eta_star_scaled(const TemperedWeights& tw, const ScoreMatrix& scores, std::size_t k,
                           double alpha) {
  StarSums sums;
  for (std::size_t j = 0; j < scores.rows(); ++j) {
    sums.add(tw.u[j], scores.q(j, k));
  }
  const double ratio = star_ratio(sums, tw.total, static_cast<double>(scores.rows()), alpha);
  return ratio > 0.0 ? std::log(ratio) + tw.shift : kNegInf;
}

}  // namespace

double eta_star_estimate(const LogWeightBatch& prev_logw, const ScoreMatrix& prev_scores,
                         std::size_t coord) {
  check_shapes(prev_logw, prev_scores);
  if (coord >= prev_scores.cols()) {
    throw InvalidArgument("coordinate out of range");
  }
  const TemperedWeights tw = temper(prev_logw);
  return std::exp(log_eta_star_scaled(tw, prev_scores, coord, prev_logw.alpha()));
}

std::vector<double> log_eta_star_estimates(const LogWeightBatch& prev_logw,
                                           const ScoreMatrix& prev_scores) {
  check_shapes(prev_logw, prev_scores);
  const TemperedWeights tw = temper(prev_logw);
  std::vector<double> out(prev_scores.cols());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = log_eta_star_scaled(tw, prev_scores, k, prev_logw.alpha());
  }
  return out;
}

GradientEstimate elbo_grad(const LogWeightBatch& logw, const ScoreMatrix& scores) {
  check_shapes(logw, scores);
  const std::size_t n = logw.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> grad(scores.cols(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += logw[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double baseline =
        n > 1 ? (total - logw[i]) / static_cast<double>(n - 1) : 0.0;
    const double signal = logw[i] - baseline;
    const auto wrow = scores.w_row(i);
    const auto qrow = scores.q_row(i);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] += inv_n * (wrow[k] + qrow[k] * signal);
    }
  }
  return make_estimate(std::move(grad), baseline::Elbo{}, logw);
}

GradientEstimate vimco_grad(const LogWeightBatch& logw, const ScoreMatrix& scores,
                            const BaselineKind& kind) {
  if (std::holds_alternative<baseline::Naive>(kind)) return naive_grad(logw, scores);
  if (const auto* inter = std::get_if<baseline::Inter>(&kind)) {
    return inter_grad(logw, scores, inter->log_norm_const);
  }
  if (std::holds_alternative<baseline::Elbo>(kind)) return elbo_grad(logw, scores);

  check_shapes(logw, scores);
  const std::size_t n = logw.size();
  const double alpha = logw.alpha();
  const TemperedWeights tw = temper(logw);
  std::vector<double> grad = first_term(tw, scores);
  const double inv = 1.0 / tw.one_minus_alpha;

  // Baselines shared by every coordinate.
  std::optional<std::vector<double>> shared;
  std::optional<std::vector<double>> eta_used;
  std::visit(
      Overloaded{
          [&](const baseline::ArithmeticMean&) {
            if (n < 2) throw InvalidArgument("the AM baseline requires N >= 2");
            shared.emplace(n);
            for (std::size_t i = 0; i < n; ++i) {
              (*shared)[i] = tw.loo[i] / static_cast<double>(n - 1);
            }
          },
          [&](const baseline::GeometricMean&) {
            if (n < 2) throw InvalidArgument("the GM baseline requires N >= 2");
            double sum_log = 0.0;
            for (double l : tw.scaled_log) sum_log += l;
            shared.emplace(n);
            for (std::size_t i = 0; i < n; ++i) {
              const double mean_log = (sum_log - tw.scaled_log[i]) / static_cast<double>(n - 1);
              (*shared)[i] = std::exp(mean_log - tw.shift);
            }
          },
          [&](const baseline::ConstEta& c) {
            if (!(c.eta >= 0.0)) throw InvalidArgument("eta must be nonnegative");
            shared.emplace(n, c.eta * std::exp(-tw.shift));
          },
          [&](const baseline::StarAlphaZero&) {
            if (alpha != 0.0) {
              throw InvalidArgument("the closed-form star estimator requires alpha = 0");
            }
            if (n < 2) throw InvalidArgument("the closed-form star estimator requires N >= 2");
            shared.emplace(n, 0.0);
          },
          [&](const baseline::StarLeaveOneOut& s) {
            const std::size_t n0 = (s.subsample == 0 || s.subsample > n) ? n : s.subsample;
            if (alpha > 0.0 && n0 < 3) {
              throw InvalidArgument("leave-one-out optimal baseline needs at least 3 draws");
            }
            if (n < 2) throw InvalidArgument("the star baseline requires N >= 2");
            eta_used.emplace(scores.cols(), 0.0);
            for (std::size_t k = 0; k < scores.cols(); ++k) {
              const std::vector<double> f = f_star_scaled(tw, scores, k, alpha, s.subsample);
              double mean_f = 0.0;
              for (std::size_t i = 0; i < n; ++i) {
                const double la = log_argument(tw, i, f[i]);
                grad[k] -= inv * scores.q(i, k) * la;
                mean_f += f[i];
              }
              (*eta_used)[k] = mean_f / static_cast<double>(n) * std::exp(tw.shift);
            }
          },
          [&](const baseline::StarPrevBatch& s) {
            if (s.log_eta.size() != scores.cols()) {
              throw InvalidArgument("previous-batch eta has " + std::to_string(s.log_eta.size()) +
                                    " coordinates, expected " + std::to_string(scores.cols()));
            }
            eta_used.emplace(scores.cols(), 0.0);
            for (std::size_t k = 0; k < scores.cols(); ++k) {
              const double f = std::exp(s.log_eta[k] - tw.shift);
              for (std::size_t i = 0; i < n; ++i) {
                grad[k] -= inv * scores.q(i, k) * log_argument(tw, i, f);
              }
              (*eta_used)[k] = std::exp(s.log_eta[k]);
            }
          },
          [](const auto&) {},
      },
      kind);

  if (shared) {
    subtract_shared_baseline(tw, scores, *shared, grad);
  }
  GradientEstimate est = make_estimate(std::move(grad), kind, logw);
  est.eta_used = std::move(eta_used);
  return est;
}

GradientEstimate estimate_gradient(const LogWeightBatch& logw, const ScoreMatrix& scores,
                                   const BaselineKind& kind) {
  if (std::holds_alternative<baseline::StarAlphaZero>(kind)) {
    return vimco_star_alpha0(logw, scores);
  }
  return vimco_grad(logw, scores, kind);
}

}  // namespace iwvi
