#ifndef IWVI_BOUNDS_HPP
#define IWVI_BOUNDS_HPP

#include <span>
#include <vector>

#include "iwvi/model.hpp"

namespace iwvi {

/// Self-normalized tempered weights w^{1-alpha} / sum_l w_l^{1-alpha}.
struct NormalizedWeights {
  std::vector<double> wbar;
  double alpha = 0.0;
};

/// log sum_i exp(x_i) with max-shift. Returns -inf for an empty span.
double log_sum_exp(std::span<const double> x);

/// One Monte Carlo sample of the VR-IWAE bound:
/// (1/(1-alpha)) * [logsumexp((1-alpha) log w) - log N].
/// With N = 1 this is the ELBO sample log w.
double vr_iwae_estimate(const LogWeightBatch& logw);

/// The alpha -> 1 limit: the sample mean of log w (an unbiased ELBO estimate).
double elbo_estimate(std::span<const double> log_w);

NormalizedWeights normalized_weights(const LogWeightBatch& logw);

/// Effective sample size 1 / sum_i wbar_i^2 of the tempered weights; lies in
/// [1, N].
double ess(const LogWeightBatch& logw);

}  // namespace iwvi

#endif  // IWVI_BOUNDS_HPP
