#include "iwvi/svol.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace iwvi::svol {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kMaxExp = 700.0;

double normal_logpdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return -0.5 * u * u - std::log(sd) - kHalfLog2Pi;
}

}  // namespace

std::array<double, 3> SvParams::to_unconstrained() const {
  return {beta0, std::log((1.0 - beta1) / (1.0 + beta1)), std::log(sigma2)};
}

SvParams SvParams::from_unconstrained(std::span<const double> z) {
  if (z.size() != 3) {
    throw InvalidArgument("SV parameter vector must have 3 entries");
  }
  // (1 - e^u) / (1 + e^u) = -tanh(u / 2), accurate for large |u|.
  return SvParams{z[0], -std::tanh(0.5 * z[1]), std::exp(z[2])};
}

void SvParams::validate() const {
  if (!std::isfinite(beta0) || !std::isfinite(beta1) || !std::isfinite(sigma2)) {
    throw InvalidArgument("SV parameters must be finite");
  }
  if (!(std::abs(beta1) < 1.0)) {
    throw InvalidArgument("beta1 must satisfy |beta1| < 1");
  }
  if (!(sigma2 > 0.0)) {
    throw InvalidArgument("sigma2 must be positive");
  }
}

std::vector<double> simulate_sv(const SvParams& sv, std::size_t T, Rng& rng) {
  if (T == 0) {
    throw InvalidArgument("series length must be positive");
  }
  sv.validate();
  std::normal_distribution<double> normal;
  const double sigma = std::sqrt(sv.sigma2);
  std::vector<double> x(T);
  double y = sv.beta0 + std::sqrt(sv.stationary_variance()) * normal(rng);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) y = sv.beta0 + sv.beta1 * (y - sv.beta0) + sigma * normal(rng);
    x[t] = std::exp(0.5 * std::min(y, kMaxExp)) * normal(rng);
  }
  return x;
}

double sv_obs_logpdf(double x, double y) {
  // exp(-y) is only formed for y >= -kMaxExp; below that the density of any
  // nonzero x is zero in double precision.
  if (y < -kMaxExp) {
    return x == 0.0 ? -kHalfLog2Pi - 0.5 * y : -std::numeric_limits<double>::infinity();
  }
  return -kHalfLog2Pi - 0.5 * y - 0.5 * x * x * std::exp(-y);
}

namespace detail {

double log_mean_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

void multinomial_resample(std::span<const double> log_w, Rng& rng,
                          std::vector<std::size_t>& ancestors) {
  const std::size_t P = log_w.size();
  const double m = *std::max_element(log_w.begin(), log_w.end());
  thread_local std::vector<double> cum;
  cum.resize(P);
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    total += std::exp(log_w[p] - m);
    cum[p] = total;
  }
  // Sorted uniforms from normalized exponential spacings.
  std::exponential_distribution<double> expo(1.0);
  thread_local std::vector<double> spacing;
  spacing.resize(P + 1);
  double total_spacing = 0.0;
  for (double& e : spacing) {
    e = expo(rng);
    total_spacing += e;
  }
  const double scale = total / total_spacing;
  ancestors.resize(P);
  double u = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < P; ++i) {
    u += spacing[i] * scale;
    while (j + 1 < P && cum[j] < u) ++j;
    ancestors[i] = j;
  }
}

void check_filter_inputs(std::span<const double> data, std::size_t particles) {
  if (particles < 2) {
    throw InvalidArgument("particle filter needs at least 2 particles");
  }
  if (data.empty()) {
    throw InvalidArgument("observation series must be non-empty");
  }
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw InvalidArgument("observations must be finite");
    }
  }
}

}  // namespace detail

PfEstimate particle_filter(const SvParams& sv, std::span<const double> data,
                           std::size_t particles, std::uint64_t seed) {
  return particle_filter_with(sv, data, particles, seed, sv_obs_logpdf);
}

PfEstimate particle_filter_linear_gaussian(const SvParams& sv, std::span<const double> data,
                                           std::size_t particles, std::uint64_t seed) {
  return particle_filter_with(sv, data, particles, seed,
                              [](double x, double y) { return normal_logpdf(x, y, 1.0); });
}

double SvPrior::logpdf(std::span<const double> z) const {
  if (z.size() != 3) {
    throw InvalidArgument("SV parameter vector must have 3 entries");
  }
  double out = 0.0;
  for (std::size_t k = 0; k < 3; ++k) out += normal_logpdf(z[k], mean[k], sd[k]);
  return out;
}

FullCovGaussian::FullCovGaussian(std::size_t dim) : d_(dim) {
  if (dim == 0) {
    throw InvalidArgument("Gaussian family dimension must be positive");
  }
}

std::size_t FullCovGaussian::offdiag_index(std::size_t a, std::size_t b) const {
  return 2 * d_ + a * (a - 1) / 2 + b;
}

std::vector<double> FullCovGaussian::identity_params(std::span<const double> mu) const {
  if (mu.size() != d_) {
    throw InvalidArgument("mean has the wrong dimension");
  }
  std::vector<double> psi(param_count(), 0.0);
  std::copy(mu.begin(), mu.end(), psi.begin());
  return psi;
}

std::vector<double> FullCovGaussian::factor(std::span<const double> psi) const {
  if (psi.size() != param_count()) {
    throw InvalidArgument("variational parameter vector has the wrong size");
  }
  std::vector<double> L(d_ * d_, 0.0);
  for (std::size_t a = 0; a < d_; ++a) {
    L[a * d_ + a] = std::exp(psi[d_ + a]);
    for (std::size_t b = 0; b < a; ++b) L[a * d_ + b] = psi[offdiag_index(a, b)];
  }
  return L;
}

std::vector<double> FullCovGaussian::covariance(std::span<const double> psi) const {
  const std::vector<double> L = factor(psi);
  std::vector<double> S(d_ * d_, 0.0);
  for (std::size_t a = 0; a < d_; ++a) {
    for (std::size_t b = 0; b < d_; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k <= std::min(a, b); ++k) s += L[a * d_ + k] * L[b * d_ + k];
      S[a * d_ + b] = s;
    }
  }
  return S;
}

void FullCovGaussian::sample(std::span<const double> psi, Rng& rng, std::span<double> z) const {
  const std::vector<double> L = factor(psi);
  std::normal_distribution<double> normal;
  std::vector<double> eps(d_);
  for (double& e : eps) e = normal(rng);
  for (std::size_t a = 0; a < d_; ++a) {
    double s = psi[a];
    for (std::size_t b = 0; b <= a; ++b) s += L[a * d_ + b] * eps[b];
    z[a] = s;
  }
}

namespace {

/// e = L^{-1} r by forward substitution.
std::vector<double> forward_solve(const std::vector<double>& L, std::size_t d,
                                  std::span<const double> r) {
  std::vector<double> e(d);
  for (std::size_t a = 0; a < d; ++a) {
    double s = r[a];
    for (std::size_t b = 0; b < a; ++b) s -= L[a * d + b] * e[b];
    e[a] = s / L[a * d + a];
  }
  return e;
}

/// v = L^{-T} e by back substitution.
std::vector<double> back_solve_transpose(const std::vector<double>& L, std::size_t d,
                                         const std::vector<double>& e) {
  std::vector<double> v(d);
  for (std::size_t a = d; a-- > 0;) {
    double s = e[a];
    for (std::size_t b = a + 1; b < d; ++b) s -= L[b * d + a] * v[b];
    v[a] = s / L[a * d + a];
  }
  return v;
}

}  // namespace

double FullCovGaussian::logpdf(std::span<const double> psi, std::span<const double> z) const {
  const std::vector<double> L = factor(psi);
  std::vector<double> r(d_);
  for (std::size_t a = 0; a < d_; ++a) r[a] = z[a] - psi[a];
  const std::vector<double> e = forward_solve(L, d_, r);
  double out = -static_cast<double>(d_) * kHalfLog2Pi;
  for (std::size_t a = 0; a < d_; ++a) out -= 0.5 * e[a] * e[a] + psi[d_ + a];
  return out;
}

void FullCovGaussian::score(std::span<const double> psi, std::span<const double> z,
                            std::span<double> out) const {
  const std::vector<double> L = factor(psi);
  std::vector<double> r(d_);
  for (std::size_t a = 0; a < d_; ++a) r[a] = z[a] - psi[a];
  const std::vector<double> e = forward_solve(L, d_, r);
  const std::vector<double> v = back_solve_transpose(L, d_, e);
  for (std::size_t a = 0; a < d_; ++a) {
    out[a] = v[a];
    out[d_ + a] = L[a * d_ + a] * v[a] * e[a] - 1.0;
    for (std::size_t b = 0; b < a; ++b) out[offdiag_index(a, b)] = v[a] * e[b];
  }
}

SvModel::SvModel(std::vector<double> data, std::size_t particles, SvPrior prior)
    : data_(std::move(data)), particles_(particles), prior_(prior), family_(3) {
  detail::check_filter_inputs(data_, particles_);
  auto layout = std::make_shared<ParamLayout>();
  for (std::size_t a = 1; a <= 3; ++a) layout->add("mu_" + std::to_string(a), Block::kPhi);
  for (std::size_t a = 1; a <= 3; ++a) {
    layout->add("logL_" + std::to_string(a) + std::to_string(a), Block::kPhi);
  }
  for (std::size_t a = 2; a <= 3; ++a) {
    for (std::size_t b = 1; b < a; ++b) {
      layout->add("L_" + std::to_string(a) + std::to_string(b), Block::kPhi);
    }
  }
  layout_ = std::move(layout);
}

ParamVector SvModel::initial_params(std::span<const double> mu, double scale) const {
  if (!(scale > 0.0)) {
    throw InvalidArgument("initial scale must be positive");
  }
  std::vector<double> psi = family_.identity_params(mu);
  for (std::size_t a = 0; a < 3; ++a) psi[3 + a] = std::log(scale);
  return ParamVector(layout_, std::move(psi));
}

void SvModel::sample(const ParamVector& params, Rng& rng, std::span<double> z) const {
  family_.sample(params.values(), rng, z);
}

double SvModel::log_weight(const ParamVector& params, std::span<const double> z, double beta,
                           std::uint64_t aux_seed) const {
  const SvParams sv = SvParams::from_unconstrained(z);
  if (!(std::abs(sv.beta1) < 1.0) || !(sv.sigma2 > 0.0) || !std::isfinite(sv.sigma2)) {
    // Saturated transform: the particle filter is undefined there.
    return -std::numeric_limits<double>::infinity();
  }
  const PfEstimate pf = particle_filter(sv, data_, particles_, aux_seed);
  return beta * pf.log_lik_hat + prior_.logpdf(z) - family_.logpdf(params.values(), z);
}

void SvModel::scores(const ParamVector& params, std::span<const double> z, double,
                     std::span<double> q_score, std::span<double> w_score) const {
  family_.score(params.values(), z, q_score);
  for (std::size_t k = 0; k < q_score.size(); ++k) w_score[k] = -q_score[k];
}

double SvModel::log_q(const ParamVector& params, std::span<const double> z) const {
  return family_.logpdf(params.values(), z);
}

std::vector<double> read_observations_csv(std::istream& is) {
  std::vector<double> x;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": expected 't,x'");
    }
    const std::string value = line.substr(comma + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header
      throw InvalidArgument("line " + std::to_string(line_no) + ": not a number");
    }
    const auto rest = value.find_first_not_of(" \t\r", used);
    if (rest != std::string::npos) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": not a number");
    }
    if (!std::isfinite(v)) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": non-finite observation");
    }
    x.push_back(v);
  }
  if (x.empty()) {
    throw InvalidArgument("observation file contains no data");
  }
  return x;
}

void write_observations_csv(std::ostream& os, std::span<const double> x) {
  const auto precision = os.precision(17);
  os << "t,x\n";
  for (std::size_t t = 0; t < x.size(); ++t) os << (t + 1) << ',' << x[t] << '\n';
  os.precision(precision);
}

namespace {

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
  }
  MomentSummary finish(std::size_t n) const {
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    const double var = std::max(0.0, (sum_sq - nn * mean * mean) / (nn - 1.0));
    return MomentSummary{mean, std::sqrt(var)};
  }
};

}  // namespace

PosteriorSummary summarize_posterior(const SvModel& model, const ParamVector& params,
                                     std::size_t draws, std::uint64_t seed) {
  if (draws < 2) {
    throw InvalidArgument("posterior summary needs at least 2 draws");
  }
  Rng rng = make_stream(seed, 0, StreamPurpose::kSummary);
  std::array<Accumulator, 3> z_acc{};
  Accumulator b0;
  Accumulator b1;
  Accumulator s2;
  std::array<double, 3> z{};
  for (std::size_t i = 0; i < draws; ++i) {
    model.sample(params, rng, z);
    for (std::size_t k = 0; k < 3; ++k) z_acc[k].add(z[k]);
    const SvParams sv = SvParams::from_unconstrained(z);
    b0.add(sv.beta0);
    b1.add(sv.beta1);
    s2.add(sv.sigma2);
  }
  PosteriorSummary out;
  for (std::size_t k = 0; k < 3; ++k) out.z[k] = z_acc[k].finish(draws);
  out.beta0 = b0.finish(draws);
  out.beta1 = b1.finish(draws);
  out.sigma2 = s2.finish(draws);
  out.draws = draws;
  return out;
}

nlohmann::json posterior_json(const PosteriorSummary& summary) {
  auto moment = [](const MomentSummary& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  return nlohmann::json{
      {"draws", summary.draws},
      {"z", {moment(summary.z[0]), moment(summary.z[1]), moment(summary.z[2])}},
      {"beta0", moment(summary.beta0)},
      {"beta1", moment(summary.beta1)},
      {"sigma2", moment(summary.sigma2)}};
}

}  // namespace iwvi::svol
