#ifndef IWVI_TESTS_SUPPORT_HPP
#define IWVI_TESTS_SUPPORT_HPP

// Independent oracles. Nothing here calls into the library's estimators,
// bounds or filters; they are computed from first principles.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace iwvi::oracle {

inline double lse(const std::vector<double>& x) {
  double m = -INFINITY;
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// One sample of the VR-IWAE bound from raw log weights.
inline double vr_bound(const std::vector<double>& log_w, double alpha) {
  std::vector<double> scaled;
  for (double v : log_w) scaled.push_back((1.0 - alpha) * v);
  return (lse(scaled) - std::log(static_cast<double>(log_w.size()))) / (1.0 - alpha);
}

struct MeanSe {
  std::vector<double> mean;
  std::vector<double> se;
};

/// Gradient of E[VR-IWAE bound] for p = N(theta, I), q = N(phi, I) by central
/// differences under the reparameterization z = phi + eps with frozen eps.
/// Coordinates: theta_1..theta_d, phi_1..phi_d.
inline MeanSe reparam_fd_gradient(const std::vector<double>& theta, const std::vector<double>& phi,
                                  double alpha, std::size_t n, std::size_t reps,
                                  std::uint64_t seed, double h = 1e-4) {
  const std::size_t d = theta.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> sum(2 * d, 0.0), sum_sq(2 * d, 0.0);
  std::vector<double> eps(n * d);
  auto bound = [&](const std::vector<double>& th, const std::vector<double>& ph) {
    std::vector<double> log_w(n);
    for (std::size_t i = 0; i < n; ++i) {
      double lw = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double z = ph[k] + eps[i * d + k];
        lw += -0.5 * (z - th[k]) * (z - th[k]) + 0.5 * (z - ph[k]) * (z - ph[k]);
      }
      log_w[i] = lw;
    }
    return vr_bound(log_w, alpha);
  };
  for (std::size_t r = 0; r < reps; ++r) {
    for (double& e : eps) e = normal(rng);
    for (std::size_t c = 0; c < 2 * d; ++c) {
      auto th = theta;
      auto ph = phi;
      double& x = c < d ? th[c] : ph[c - d];
      const double x0 = x;
      x = x0 + h;
      const double up = bound(th, ph);
      x = x0 - h;
      const double down = bound(th, ph);
      const double g = (up - down) / (2.0 * h);
      sum[c] += g;
      sum_sq[c] += g * g;
    }
  }
  MeanSe out;
  const double r = static_cast<double>(reps);
  for (std::size_t c = 0; c < 2 * d; ++c) {
    const double m = sum[c] / r;
    const double var = (sum_sq[c] - r * m * m) / (r - 1.0);
    out.mean.push_back(m);
    out.se.push_back(std::sqrt(var / r));
  }
  return out;
}

/// Exact log-likelihood of x_{1:T} under y_1 ~ N(b0, s2 / (1 - b1^2)),
/// y_t = b0 + b1 (y_{t-1} - b0) + N(0, s2), x_t = y_t + N(0, 1).
inline double kalman_loglik(double b0, double b1, double s2, const std::vector<double>& x) {
  double m = b0;
  double p = s2 / (1.0 - b1 * b1);
  double ll = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t > 0) {
      m = b0 + b1 * (m - b0);
      p = b1 * b1 * p + s2;
    }
    const double s = p + 1.0;
    const double r = x[t] - m;
    ll += -0.5 * std::log(2.0 * std::numbers::pi * s) - 0.5 * r * r / s;
    const double k = p / s;
    m += k * r;
    p *= (1.0 - k);
  }
  return ll;
}

/// Gauss-Legendre nodes and weights on [a, b] (Newton on P_n).
inline std::vector<std::pair<double, double>> gauss_legendre(std::size_t n, double a, double b) {
  std::vector<std::pair<double, double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    out[i] = {0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w};
  }
  return out;
}

inline double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

/// Sample mean and standard error.
inline std::pair<double, double> mean_se(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double n = static_cast<double>(v.size());
  const double m = s / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace iwvi::oracle

#endif  // IWVI_TESTS_SUPPORT_HPP
