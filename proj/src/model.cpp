#include "iwvi/model.hpp"

#include <algorithm>
#include <cmath>

namespace iwvi {

void ParamLayout::add(std::string name, Block block) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw InvalidArgument("duplicate parameter name: " + name);
  }
  names_.push_back(std::move(name));
  blocks_.push_back(block);
}

std::size_t ParamLayout::theta_count() const {
  return static_cast<std::size_t>(std::count(blocks_.begin(), blocks_.end(), Block::kTheta));
}

std::size_t ParamLayout::phi_count() const {
  return static_cast<std::size_t>(std::count(blocks_.begin(), blocks_.end(), Block::kPhi));
}

std::size_t ParamLayout::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    throw InvalidArgument("unknown parameter: " + name);
  }
  return static_cast<std::size_t>(it - names_.begin());
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_ || layout_->size() == 0) {
    throw InvalidArgument("parameter layout must be non-empty");
  }
  if (values_.size() != layout_->size()) {
    throw InvalidArgument("parameter vector has " + std::to_string(values_.size()) +
                          " entries, layout has " + std::to_string(layout_->size()));
  }
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

LogWeightBatch::LogWeightBatch(std::vector<double> log_w, double alpha)
    : log_w_(std::move(log_w)), alpha_(alpha) {
  if (!(alpha_ >= 0.0 && alpha_ < 1.0)) {
    throw InvalidArgument("alpha must lie in [0,1)");
  }
  for (std::size_t i = 0; i < log_w_.size(); ++i) {
    if (!std::isfinite(log_w_[i])) {
      throw InvalidArgument("log weight " + std::to_string(i) + " is not finite");
    }
  }
}

ScoreMatrix::ScoreMatrix(std::size_t n, std::size_t n_params)
    : n_(n), p_(n_params), q_(n * n_params, 0.0), w_(n * n_params, 0.0) {}

SampleBatch draw_batch(const Model& model, const ParamVector& params, std::size_t n,
                       const SeedRecord& seed) {
  if (n == 0) {
    throw InvalidArgument("batch size must be positive");
  }
  if (!params.all_finite()) {
    throw InvalidArgument("parameters must be finite");
  }
  SampleBatch batch;
  batch.n = n;
  batch.dim = model.latent_dim();
  batch.seed = seed;
  batch.latents.resize(n * batch.dim);
  Rng rng = make_stream(seed, StreamPurpose::kSample);
  for (std::size_t i = 0; i < n; ++i) {
    model.sample(params, rng, std::span<double>(batch.latents).subspan(i * batch.dim, batch.dim));
  }
  return batch;
}

std::uint64_t aux_seed_for(const SeedRecord& seed, std::size_t i) {
  return derive_seed(derive_seed(seed.root, seed.stream, StreamPurpose::kParticle), i,
                     StreamPurpose::kParticle);
}

LogWeightBatch eval_log_weights(const Model& model, const ParamVector& params,
                                const SampleBatch& batch, double alpha, double beta) {
  std::vector<double> log_w(batch.n);
  for (std::size_t i = 0; i < batch.n; ++i) {
    log_w[i] = model.log_weight(params, batch.latent(i), beta, aux_seed_for(batch.seed, i));
    if (!std::isfinite(log_w[i])) {
      throw ModelError("log weight of sample " + std::to_string(i) +
                       " is not finite (zero density under p or q)");
    }
  }
  return LogWeightBatch(std::move(log_w), alpha);
}

ScoreMatrix eval_scores(const Model& model, const ParamVector& params, const SampleBatch& batch,
                        double beta) {
  ScoreMatrix scores(batch.n, params.size());
  for (std::size_t i = 0; i < batch.n; ++i) {
    model.scores(params, batch.latent(i), beta, scores.q_row(i), scores.w_row(i));
  }
  return scores;
}

}  // namespace iwvi
