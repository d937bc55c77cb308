#ifndef IWVI_GAUSSIAN_MODEL_HPP
#define IWVI_GAUSSIAN_MODEL_HPP

#include <vector>

#include "iwvi/model.hpp"

namespace iwvi {

/// Isotropic Gaussian toy problem: p_theta(x, z) = N(z; theta, I_d) (so the
/// marginal likelihood is 1) and q_phi(z|x) = N(z; phi, I_d).
///
/// Coordinates are theta_1..theta_d followed by phi_1..phi_d.
class GaussianModel final : public Model {
 public:
  explicit GaussianModel(std::size_t dim);

  ParamVector params(const std::vector<double>& theta, const std::vector<double>& phi) const;

  const std::shared_ptr<const ParamLayout>& layout() const override { return layout_; }
  std::size_t latent_dim() const override { return dim_; }
  std::size_t theta_index(std::size_t k) const { return k; }
  std::size_t phi_index(std::size_t k) const { return dim_ + k; }

  void sample(const ParamVector& params, Rng& rng, std::span<double> z) const override;
  double log_weight(const ParamVector& params, std::span<const double> z, double beta,
                    std::uint64_t aux_seed) const override;
  void scores(const ParamVector& params, std::span<const double> z, double beta,
              std::span<double> q_score, std::span<double> w_score) const override;
  double log_q(const ParamVector& params, std::span<const double> z) const override;

 private:
  std::size_t dim_;
  std::shared_ptr<const ParamLayout> layout_;
};

}  // namespace iwvi

#endif  // IWVI_GAUSSIAN_MODEL_HPP
