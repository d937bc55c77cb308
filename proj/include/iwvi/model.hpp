#ifndef IWVI_MODEL_HPP
#define IWVI_MODEL_HPP

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iwvi/rng.hpp"

namespace iwvi {

/// Raised when an argument violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a model evaluation leaves the domain the estimators assume
/// (e.g. a zero density under q or p, which makes a log weight infinite).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which block of the parameter vector a coordinate belongs to. Model
/// parameters (theta) enter p only; variational parameters (phi) enter q and
/// possibly p.
enum class Block { kTheta, kPhi };

/// Names and blocks of a model's parameter coordinates. Fixed for the lifetime
/// of a model.
class ParamLayout {
 public:
  void add(std::string name, Block block);

  std::size_t size() const { return names_.size(); }
  std::size_t theta_count() const;
  std::size_t phi_count() const;
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Block block(std::size_t i) const { return blocks_.at(i); }
  /// Throws InvalidArgument if the name is unknown.
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Block> blocks_;
};

/// Values over a model's named coordinates.
class ParamVector {
 public:
  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(const std::string& name) const { return values_.at(layout_->index_of(name)); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  bool all_finite() const;

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

/// N latent draws from q, stored row-major (n x dim).
struct SampleBatch {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> latents;
  SeedRecord seed;

  std::span<const double> latent(std::size_t i) const {
    return std::span<const double>(latents).subspan(i * dim, dim);
  }
};

/// log w(z_i; x) for every sample in a batch, tagged with the Renyi alpha.
class LogWeightBatch {
 public:
  /// Throws InvalidArgument on a non-finite entry or alpha outside [0, 1).
  LogWeightBatch(std::vector<double> log_w, double alpha);

  std::size_t size() const { return log_w_.size(); }
  bool empty() const { return log_w_.empty(); }
  double operator[](std::size_t i) const { return log_w_[i]; }
  std::span<const double> values() const { return log_w_; }
  double alpha() const { return alpha_; }

 private:
  std::vector<double> log_w_;
  double alpha_;
};

/// Per-sample score functions. Both matrices are n x P over the full parameter
/// vector; q-scores are identically zero on theta coordinates.
class ScoreMatrix {
 public:
  ScoreMatrix(std::size_t n, std::size_t n_params);

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return p_; }

  double q(std::size_t i, std::size_t k) const { return q_[i * p_ + k]; }
  double w(std::size_t i, std::size_t k) const { return w_[i * p_ + k]; }
  std::span<double> q_row(std::size_t i) { return std::span<double>(q_).subspan(i * p_, p_); }
  std::span<double> w_row(std::size_t i) { return std::span<double>(w_).subspan(i * p_, p_); }
  std::span<const double> q_row(std::size_t i) const {
    return std::span<const double>(q_).subspan(i * p_, p_);
  }
  std::span<const double> w_row(std::size_t i) const {
    return std::span<const double>(w_).subspan(i * p_, p_);
  }

 private:
  std::size_t n_;
  std::size_t p_;
  std::vector<double> q_;
  std::vector<double> w_;
};

/// The probabilistic model seen by every estimator: a variational family
/// q_phi(z|x) to sample from, and closed-form log weights and scores. The
/// observation x lives inside the model object.
class Model {
 public:
  virtual ~Model() = default;

  virtual const std::shared_ptr<const ParamLayout>& layout() const = 0;
  virtual std::size_t latent_dim() const = 0;

  /// Draws one z ~ q_phi(.|x) into `z`.
  virtual void sample(const ParamVector& params, Rng& rng, std::span<double> z) const = 0;

  /// log p(x, z) - log q(z|x), with the likelihood factor raised to `beta`.
  /// `aux_seed` feeds models whose weight is itself random (pseudo-marginal).
  virtual double log_weight(const ParamVector& params, std::span<const double> z,
                            double beta, std::uint64_t aux_seed) const = 0;

  /// Writes d/dpsi log q(z|x) into `q_score` and d/dpsi log w(z;x) into
  /// `w_score`, both over the full parameter vector.
  virtual void scores(const ParamVector& params, std::span<const double> z, double beta,
                      std::span<double> q_score, std::span<double> w_score) const = 0;

  /// log q_phi(z|x); used by finite-difference checks.
  virtual double log_q(const ParamVector& params, std::span<const double> z) const = 0;
};

/// n i.i.d. draws from q_phi, reproducible from `seed`.
SampleBatch draw_batch(const Model& model, const ParamVector& params, std::size_t n,
                       const SeedRecord& seed);

LogWeightBatch eval_log_weights(const Model& model, const ParamVector& params,
                                const SampleBatch& batch, double alpha, double beta = 1.0);

ScoreMatrix eval_scores(const Model& model, const ParamVector& params, const SampleBatch& batch,
                        double beta = 1.0);

/// Seed handed to Model::log_weight for sample `i` of a batch.
std::uint64_t aux_seed_for(const SeedRecord& seed, std::size_t i);

}  // namespace iwvi

#endif  // IWVI_MODEL_HPP
