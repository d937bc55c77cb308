#include "iwvi/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iwvi {

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) {
    return -std::numeric_limits<double>::infinity();
  }
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) {
    return m;
  }
  double s = 0.0;
  for (double v : x) {
    s += std::exp(v - m);
  }
  return m + std::log(s);
}

double vr_iwae_estimate(const LogWeightBatch& logw) {
  if (logw.empty()) {
    throw InvalidArgument("VR-IWAE estimate of an empty batch");
  }
  const double one_minus_alpha = 1.0 - logw.alpha();
  std::vector<double> scaled(logw.size());
  for (std::size_t i = 0; i < logw.size(); ++i) {
    scaled[i] = one_minus_alpha * logw[i];
  }
  const double n = static_cast<double>(logw.size());
  return (log_sum_exp(scaled) - std::log(n)) / one_minus_alpha;
}

double elbo_estimate(std::span<const double> log_w) {
  if (log_w.empty()) {
    throw InvalidArgument("ELBO estimate of an empty batch");
  }
  double s = 0.0;
  for (double v : log_w) {
    s += v;
  }
  return s / static_cast<double>(log_w.size());
}

NormalizedWeights normalized_weights(const LogWeightBatch& logw) {
  if (logw.empty()) {
    throw InvalidArgument("normalized weights of an empty batch");
  }
  const double one_minus_alpha = 1.0 - logw.alpha();
  const auto values = logw.values();
  const double m = *std::max_element(values.begin(), values.end());
  NormalizedWeights out;
  out.alpha = logw.alpha();
  out.wbar.resize(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.wbar[i] = std::exp(one_minus_alpha * (values[i] - m));
    total += out.wbar[i];
  }
  for (double& w : out.wbar) {
    w /= total;
  }
  return out;
}

double ess(const LogWeightBatch& logw) {
  const NormalizedWeights nw = normalized_weights(logw);
  double sum_sq = 0.0;
  for (double w : nw.wbar) {
    sum_sq += w * w;
  }
  return 1.0 / sum_sq;
}

}  // namespace iwvi
