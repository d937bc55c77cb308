#ifndef IWVI_ESTIMATORS_HPP
#define IWVI_ESTIMATORS_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iwvi/model.hpp"

namespace iwvi {

namespace baseline {

/// No baseline: the plain REINFORCE estimator of the VR-IWAE gradient.
struct Naive {};

/// Global baseline log E[w^{1-alpha}], known in closed form (analytic models
/// only).
struct Inter {
  double log_norm_const = 0.0;
};

/// f_{-i} = leave-one-out arithmetic mean of w^{1-alpha}.
struct ArithmeticMean {};

/// f_{-i} = leave-one-out geometric mean of w^{1-alpha}.
struct GeometricMean {};

/// f_{-i} = eta for every i.
struct ConstEta {
  double eta = 0.0;
};

/// f_{-i} = leave-one-out plug-in estimate of the variance-optimal eta, one
/// per parameter coordinate. `subsample` > 0 restricts the statistics to the
/// first `subsample` draws.
struct StarLeaveOneOut {
  std::size_t subsample = 0;
};

/// f_{-i} = eta estimated from an independent earlier batch. Holds log eta per
/// parameter coordinate (-inf encodes eta = 0).
struct StarPrevBatch {
  std::vector<double> log_eta;
};

/// The alpha = 0 closed form, f_{-i} = 0.
struct StarAlphaZero {};

/// REINFORCE gradient of the ELBO (the alpha -> 1 limit) with a leave-one-out
/// mean of log w as per-sample baseline.
struct Elbo {};

}  // namespace baseline

using BaselineKind =
    std::variant<baseline::Naive, baseline::Inter, baseline::ArithmeticMean,
                 baseline::GeometricMean, baseline::ConstEta, baseline::StarLeaveOneOut,
                 baseline::StarPrevBatch, baseline::StarAlphaZero, baseline::Elbo>;

/// Short stable name used in CSV/JSON output ("naive", "am", "star", ...).
std::string kind_name(const BaselineKind& kind);

/// Parses a name produced by kind_name. "star" resolves to StarAlphaZero when
/// alpha == 0 and to StarLeaveOneOut otherwise; "const-eta:<value>" carries
/// its eta. Throws InvalidArgument on unknown names.
BaselineKind parse_kind(std::string_view name, double alpha);

struct GradientEstimate {
  std::vector<double> grad;
  BaselineKind kind;
  std::size_t n = 0;
  double alpha = 0.0;
  /// Per-coordinate eta actually used, for the star kinds.
  std::optional<std::vector<double>> eta_used;
};

/// Unbiased estimator with no variance reduction:
///   sum_j wbar_j dlog w_j + (sum_i dlog q_i) * vr_iwae_estimate(logw).
GradientEstimate naive_grad(const LogWeightBatch& logw, const ScoreMatrix& scores);

/// NAIVE with the exact global baseline log E[w^{1-alpha}] subtracted inside
/// the score term.
GradientEstimate inter_grad(const LogWeightBatch& logw, const ScoreMatrix& scores,
                            double log_norm_const);

/// Generalized VIMCO estimator
///   sum_j wbar_j dlog w_j
///     - 1/(1-alpha) sum_i dlog q_i log(1 - wbar_i + f_{-i} / sum_j w_j^{1-alpha})
/// for the per-sample baseline selected by `kind`. Naive and Inter dispatch to
/// their own functions; Elbo dispatches to elbo_grad.
GradientEstimate vimco_grad(const LogWeightBatch& logw, const ScoreMatrix& scores,
                            const BaselineKind& kind);

/// Leave-one-out estimates f_{-i} of the optimal eta for coordinate `coord`
/// (absolute scale, i.e. in units of w^{1-alpha}). Requires N >= 3; returns
/// zeros when alpha = 0.
std::vector<double> f_star_leave_one_out(const LogWeightBatch& logw, const ScoreMatrix& scores,
                                         std::size_t coord, std::size_t subsample = 0);

/// Closed form at alpha = 0:
///   sum_j [wbar_j dlog w_j - log(1 - wbar_j) dlog q_j].
GradientEstimate vimco_star_alpha0(const LogWeightBatch& logw, const ScoreMatrix& scores);

/// Plug-in estimate of the optimal eta for coordinate `coord` from a whole
/// (earlier, independent) batch; clamped at zero.
double eta_star_estimate(const LogWeightBatch& prev_logw, const ScoreMatrix& prev_scores,
                         std::size_t coord);

/// log of eta_star_estimate for every coordinate, computed without leaving the
/// log domain for the weights. -inf where the estimate is zero.
std::vector<double> log_eta_star_estimates(const LogWeightBatch& prev_logw,
                                           const ScoreMatrix& prev_scores);

/// Gradient of the ELBO sample mean (alpha ignored).
GradientEstimate elbo_grad(const LogWeightBatch& logw, const ScoreMatrix& scores);

/// Dispatches on kind.
GradientEstimate estimate_gradient(const LogWeightBatch& logw, const ScoreMatrix& scores,
                                   const BaselineKind& kind);

}  // namespace iwvi

#endif  // IWVI_ESTIMATORS_HPP
