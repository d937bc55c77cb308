#ifndef IWVI_SVOL_HPP
#define IWVI_SVOL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "iwvi/model.hpp"
#include "iwvi/rng.hpp"

namespace iwvi::svol {

/// Stochastic-volatility parameters in the natural space:
///   y_1 ~ N(beta0, sigma2 / (1 - beta1^2))
///   y_t | y_{t-1} ~ N(beta0 + beta1 (y_{t-1} - beta0), sigma2)
///   x_t | y_t ~ N(0, exp(y_t))
struct SvParams {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double sigma2 = 1.0;

  /// z = (beta0, log((1 - beta1) / (1 + beta1)), log sigma2).
  std::array<double, 3> to_unconstrained() const;
  static SvParams from_unconstrained(std::span<const double> z);
  /// Throws InvalidArgument unless |beta1| < 1, sigma2 > 0 and all finite.
  void validate() const;
  double stationary_variance() const { return sigma2 / (1.0 - beta1 * beta1); }
};

/// Forward simulation of x_{1:T}. Throws InvalidArgument if T == 0 or the
/// parameters are invalid.
std::vector<double> simulate_sv(const SvParams& sv, std::size_t T, Rng& rng);

/// log N(x; 0, exp(y)) without exponentiating large arguments.
double sv_obs_logpdf(double x, double y);

struct PfEstimate {
  double log_lik_hat = 0.0;
  std::size_t particles = 0;
  std::uint64_t seed = 0;
};

namespace detail {

double log_mean_exp(std::span<const double> v);

/// Multinomial resampling: P ancestor indices drawn i.i.d. from the weights
/// exp(log_w - max), using sorted uniforms.
void multinomial_resample(std::span<const double> log_w, Rng& rng,
                          std::vector<std::size_t>& ancestors);

void check_filter_inputs(std::span<const double> data, std::size_t particles);

}  // namespace detail

/// Bootstrap particle filter with the SV transition and an arbitrary
/// observation log-density obs(x_t, y_t). Multinomial resampling every step;
/// the returned log-likelihood is the log of an unbiased estimate.
template <class ObsLogDensity>
PfEstimate particle_filter_with(const SvParams& sv, std::span<const double> data,
                                std::size_t particles, std::uint64_t seed, ObsLogDensity&& obs) {
  detail::check_filter_inputs(data, particles);
  sv.validate();
  Rng rng = make_stream(seed, 0, StreamPurpose::kParticle);
  std::normal_distribution<double> normal;
  const double sigma = std::sqrt(sv.sigma2);
  const double sd0 = std::sqrt(sv.stationary_variance());

  std::vector<double> y(particles);
  std::vector<double> next(particles);
  std::vector<double> log_w(particles);
  std::vector<std::size_t> ancestors;
  for (double& v : y) v = sv.beta0 + sd0 * normal(rng);

  double log_lik = 0.0;
  for (std::size_t t = 0; t < data.size(); ++t) {
    if (t > 0) {
      detail::multinomial_resample(log_w, rng, ancestors);
      for (std::size_t p = 0; p < particles; ++p) {
        next[p] = sv.beta0 + sv.beta1 * (y[ancestors[p]] - sv.beta0) + sigma * normal(rng);
      }
      y.swap(next);
    }
    for (std::size_t p = 0; p < particles; ++p) log_w[p] = obs(data[t], y[p]);
    log_lik += detail::log_mean_exp(log_w);
    if (!std::isfinite(log_lik)) break;
  }
  return PfEstimate{log_lik, particles, seed};
}

/// The SV model's filter: observation N(0, exp(y_t)).
PfEstimate particle_filter(const SvParams& sv, std::span<const double> data,
                           std::size_t particles, std::uint64_t seed);

/// Linear-Gaussian surrogate with the same transition and x_t ~ N(y_t, 1).
PfEstimate particle_filter_linear_gaussian(const SvParams& sv, std::span<const double> data,
                                           std::size_t particles, std::uint64_t seed);

/// Independent Gaussian prior on the unconstrained vector z.
struct SvPrior {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> sd{10.0, 1.0, 2.0};

  double logpdf(std::span<const double> z) const;
};

/// q(z) = N(z; mu, L L^T) with L lower triangular. Parameter vector layout:
/// mu (d), log L_aa (d), then the strict lower triangle L_ab (a > b) row by row.
class FullCovGaussian {
 public:
  explicit FullCovGaussian(std::size_t dim);

  std::size_t dim() const { return d_; }
  std::size_t param_count() const { return 2 * d_ + d_ * (d_ - 1) / 2; }

  /// Unit covariance centred at mu.
  std::vector<double> identity_params(std::span<const double> mu) const;

  void sample(std::span<const double> psi, Rng& rng, std::span<double> z) const;
  double logpdf(std::span<const double> psi, std::span<const double> z) const;
  /// d/dpsi log q(z).
  void score(std::span<const double> psi, std::span<const double> z, std::span<double> out) const;
  /// Sigma = L L^T, row-major d x d.
  std::vector<double> covariance(std::span<const double> psi) const;

 private:
  /// Dense lower-triangular L, row-major.
  std::vector<double> factor(std::span<const double> psi) const;
  std::size_t offdiag_index(std::size_t a, std::size_t b) const;

  std::size_t d_;
};

/// Pseudo-marginal SV model: latent z (3 unconstrained parameters), log
/// weight beta * log p_hat(x|z) + log prior(z) - log q(z), where p_hat is a
/// particle-filter estimate seeded by the per-sample aux seed. Every
/// coordinate is variational; the scores never involve the likelihood.
class SvModel final : public Model {
 public:
  SvModel(std::vector<double> data, std::size_t particles, SvPrior prior = {});

  const std::shared_ptr<const ParamLayout>& layout() const override { return layout_; }
  std::size_t latent_dim() const override { return 3; }
  const FullCovGaussian& family() const { return family_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t particles() const { return particles_; }
  const SvPrior& prior() const { return prior_; }

  /// q centred at mu with covariance scale^2 I.
  ParamVector initial_params(std::span<const double> mu, double scale = 1.0) const;

  void sample(const ParamVector& params, Rng& rng, std::span<double> z) const override;
  double log_weight(const ParamVector& params, std::span<const double> z, double beta,
                    std::uint64_t aux_seed) const override;
  void scores(const ParamVector& params, std::span<const double> z, double beta,
              std::span<double> q_score, std::span<double> w_score) const override;
  double log_q(const ParamVector& params, std::span<const double> z) const override;

 private:
  std::vector<double> data_;
  std::size_t particles_;
  SvPrior prior_;
  FullCovGaussian family_;
  std::shared_ptr<const ParamLayout> layout_;
};

/// Reads "t,x" rows (header optional). Throws InvalidArgument on malformed or
/// non-finite input.
std::vector<double> read_observations_csv(std::istream& is);
void write_observations_csv(std::ostream& os, std::span<const double> x);

struct MomentSummary {
  double mean = 0.0;
  double std = 0.0;
};

/// Monte Carlo summary of q: moments of z and of the untransformed
/// beta0, beta1, sigma2.
struct PosteriorSummary {
  std::array<MomentSummary, 3> z;
  MomentSummary beta0;
  MomentSummary beta1;
  MomentSummary sigma2;
  std::size_t draws = 0;
};

PosteriorSummary summarize_posterior(const SvModel& model, const ParamVector& params,
                                     std::size_t draws, std::uint64_t seed);
nlohmann::json posterior_json(const PosteriorSummary& summary);

}  // namespace iwvi::svol

#endif  // IWVI_SVOL_HPP
