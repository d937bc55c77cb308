#include "iwvi/gaussian_analytic.hpp"

#include <cmath>

#include "iwvi/model.hpp"

namespace iwvi::gaussian {

void GaussianSetting::validate() const {
  if (theta.empty() || theta.size() != phi.size()) {
    throw InvalidArgument("theta and phi must be non-empty and of equal dimension");
  }
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (!std::isfinite(theta[k]) || !std::isfinite(phi[k])) {
      throw InvalidArgument("theta and phi must be finite");
    }
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidArgument("alpha must lie in [0,1)");
  }
  if (coordinate >= theta.size()) {
    throw InvalidArgument("coordinate out of range");
  }
}

double GaussianSetting::sq_distance() const {
  double d = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    d += (phi[k] - theta[k]) * (phi[k] - theta[k]);
  }
  return d;
}

double grad_vr(const GaussianSetting& s) {
  s.validate();
  return -s.alpha * s.delta();
}

double gamma_sq(const GaussianSetting& s) {
  s.validate();
  const double b = 1.0 - s.alpha;
  return std::expm1(b * b * s.sq_distance()) / b;
}

double grad_gamma_sq(const GaussianSetting& s) {
  s.validate();
  const double b = 1.0 - s.alpha;
  return 2.0 * b * s.delta() * std::exp(b * b * s.sq_distance());
}

double log_norm_const(const GaussianSetting& s) {
  s.validate();
  return -0.5 * s.alpha * (1.0 - s.alpha) * s.sq_distance();
}

double a_eta(const GaussianSetting& s, double ratio) {
  s.validate();
  const double b = 1.0 - s.alpha;
  const double b2 = b * b;
  const double delta = s.delta();
  const double first =
      s.alpha * s.alpha / b2 * std::exp(b2 * s.sq_distance()) * (1.0 + b2 * delta * delta);
  return first + ratio * (ratio - 2.0 * s.alpha) / b2;
}

double eta_ratio(const GaussianSetting& s, VarianceKind kind) {
  s.validate();
  const double b = 1.0 - s.alpha;
  switch (kind) {
    case VarianceKind::kAm:
      return 1.0;
    case VarianceKind::kGm:
      return std::exp(-0.5 * b * b * s.sq_distance());
    case VarianceKind::kStar:
      return s.alpha;
    case VarianceKind::kConstEta:
      break;
  }
  throw InvalidArgument("eta ratio of a constant-eta baseline is caller supplied");
}

namespace {

double star_alpha_zero_variance(const GaussianSetting& s) {
  const double d2 = s.sq_distance();
  const double delta2 = s.delta() * s.delta();
  return (0.25 + 4.0 * delta2) * std::exp(6.0 * d2) - 6.0 * delta2 * std::exp(4.0 * d2) +
         (std::exp(d2) - 0.25) * 4.0 * delta2 * std::exp(2.0 * d2);
}

}  // namespace

double asymptotic_variance(const GaussianSetting& s, VarianceKind kind, double ratio) {
  s.validate();
  if (kind == VarianceKind::kStar && s.alpha == 0.0) {
    return star_alpha_zero_variance(s);
  }
  if (kind == VarianceKind::kConstEta) {
    if (!(ratio >= 0.0)) {
      throw InvalidArgument("eta ratio must be nonnegative");
    }
    return a_eta(s, ratio);
  }
  return a_eta(s, eta_ratio(s, kind));
}

double snr_prediction(const GaussianSetting& s, VarianceKind kind, std::size_t n, double ratio) {
  if (n == 0) {
    throw InvalidArgument("n must be positive");
  }
  const double nn = static_cast<double>(n);
  const double mean = grad_vr(s) - grad_gamma_sq(s) / (2.0 * nn);
  const double v = asymptotic_variance(s, kind, ratio);
  const double rate = (kind == VarianceKind::kStar && s.alpha == 0.0) ? nn * nn * nn : nn;
  return std::abs(mean) / std::sqrt(v / rate);
}

double optimality_variance(std::size_t n, double alpha, VarianceKind kind) {
  if (n == 0) {
    throw InvalidArgument("n must be positive");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidArgument("alpha must lie in [0,1)");
  }
  const double nn = static_cast<double>(n);
  switch (kind) {
    case VarianceKind::kAm:
    case VarianceKind::kGm:
      return 1.0 / nn;
    case VarianceKind::kStar: {
      const double b = 1.0 - alpha;
      if (b / nn >= 1.0) {
        throw InvalidArgument("(1-alpha)/n must be below 1");
      }
      const double bracket = 1.0 + nn / b * std::log1p(-b / nn);
      return bracket * bracket / nn;
    }
    case VarianceKind::kConstEta:
      break;
  }
  throw InvalidArgument("optimality variance is defined for AM, GM and star");
}

}  // namespace iwvi::gaussian
