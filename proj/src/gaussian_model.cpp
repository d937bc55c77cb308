#include "iwvi/gaussian_model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace iwvi {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::shared_ptr<const ParamLayout> make_layout(std::size_t dim) {
  auto layout = std::make_shared<ParamLayout>();
  for (std::size_t k = 0; k < dim; ++k) {
    layout->add("theta_" + std::to_string(k + 1), Block::kTheta);
  }
  for (std::size_t k = 0; k < dim; ++k) {
    layout->add("phi_" + std::to_string(k + 1), Block::kPhi);
  }
  return layout;
}

}  // namespace

GaussianModel::GaussianModel(std::size_t dim) : dim_(dim) {
  if (dim == 0) {
    throw InvalidArgument("Gaussian model dimension must be positive");
  }
  layout_ = make_layout(dim);
}

ParamVector GaussianModel::params(const std::vector<double>& theta,
                                  const std::vector<double>& phi) const {
  if (theta.size() != dim_ || phi.size() != dim_) {
    throw InvalidArgument("theta and phi must both have dimension " + std::to_string(dim_));
  }
  std::vector<double> values(theta);
  values.insert(values.end(), phi.begin(), phi.end());
  return ParamVector(layout_, std::move(values));
}

void GaussianModel::sample(const ParamVector& params, Rng& rng, std::span<double> z) const {
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < dim_; ++k) {
    z[k] = params[phi_index(k)] + normal(rng);
  }
}

double GaussianModel::log_weight(const ParamVector& params, std::span<const double> z,
                                 double beta, std::uint64_t) const {
  double log_p = 0.0;
  double log_q = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    const double dp = z[k] - params[theta_index(k)];
    const double dq = z[k] - params[phi_index(k)];
    log_p -= 0.5 * dp * dp + kHalfLog2Pi;
    log_q -= 0.5 * dq * dq + kHalfLog2Pi;
  }
  return beta * log_p - log_q;
}

void GaussianModel::scores(const ParamVector& params, std::span<const double> z, double beta,
                           std::span<double> q_score, std::span<double> w_score) const {
  for (std::size_t k = 0; k < dim_; ++k) {
    const double dq = z[k] - params[phi_index(k)];
    q_score[theta_index(k)] = 0.0;
    q_score[phi_index(k)] = dq;
    w_score[theta_index(k)] = beta * (z[k] - params[theta_index(k)]);
    // p does not depend on phi.
    w_score[phi_index(k)] = -dq;
  }
}

double GaussianModel::log_q(const ParamVector& params, std::span<const double> z) const {
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    const double dq = z[k] - params[phi_index(k)];
    out -= 0.5 * dq * dq + kHalfLog2Pi;
  }
  return out;
}

}  // namespace iwvi
