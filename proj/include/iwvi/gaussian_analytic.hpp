#ifndef IWVI_GAUSSIAN_ANALYTIC_HPP
#define IWVI_GAUSSIAN_ANALYTIC_HPP

#include <cstddef>
#include <vector>

namespace iwvi::gaussian {

/// p_theta = N(theta, I_d), q_phi = N(phi, I_d), Renyi parameter alpha, and
/// the coordinate k (0-based) whose phi-gradient is studied.
struct GaussianSetting {
  std::vector<double> theta;
  std::vector<double> phi;
  double alpha = 0.0;
  std::size_t coordinate = 0;

  /// Throws iwvi::InvalidArgument on mismatched or empty vectors, non-finite
  /// entries, alpha outside [0,1) or a coordinate out of range.
  void validate() const;
  double sq_distance() const;
  double delta() const { return phi[coordinate] - theta[coordinate]; }
};

enum class VarianceKind { kAm, kGm, kConstEta, kStar };

/// d/dphi_k of the VR bound: -alpha (phi_k - theta_k).
double grad_vr(const GaussianSetting& s);

/// gamma_alpha^2 = (exp((1-alpha)^2 |theta-phi|^2) - 1) / (1-alpha).
double gamma_sq(const GaussianSetting& s);

/// d/dphi_k gamma_alpha^2 = 2 (1-alpha) (phi_k - theta_k) exp((1-alpha)^2 |phi-theta|^2).
double grad_gamma_sq(const GaussianSetting& s);

/// log E[w^{1-alpha}] = -alpha (1-alpha) |theta-phi|^2 / 2.
double log_norm_const(const GaussianSetting& s);

/// A_eta for eta / E[w^{1-alpha}] = ratio.
double a_eta(const GaussianSetting& s, double ratio);

/// eta / E[w^{1-alpha}] selected by the AM, GM and star baselines.
double eta_ratio(const GaussianSetting& s, VarianceKind kind);

/// Leading-order variance constant. AM/GM/ConstEta/Star(alpha>0) scale as 1/N;
/// Star at alpha = 0 returns the 1/N^3 constant. `ratio` is used for kConstEta.
double asymptotic_variance(const GaussianSetting& s, VarianceKind kind, double ratio = 0.0);

/// |grad_vr - grad_gamma_sq / (2n)| / sqrt(V / n^r), r = 3 for Star at
/// alpha = 0 and r = 1 otherwise.
double snr_prediction(const GaussianSetting& s, VarianceKind kind, std::size_t n,
                      double ratio = 0.0);

/// Exact variance at q = p (unit-variance scores): 1/n for AM and GM,
/// (1/n) [1 + n/(1-alpha) log(1 - (1-alpha)/n)]^2 for Star.
double optimality_variance(std::size_t n, double alpha, VarianceKind kind);

}  // namespace iwvi::gaussian

#endif  // IWVI_GAUSSIAN_ANALYTIC_HPP
