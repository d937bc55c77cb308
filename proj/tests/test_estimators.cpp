#include <doctest.h>

#include <cmath>
#include <random>

#include "iwvi/bounds.hpp"
#include "iwvi/diagnostics.hpp"
#include "iwvi/estimators.hpp"
#include "iwvi/gaussian_analytic.hpp"
#include "iwvi/gaussian_model.hpp"
#include "support.hpp"

using namespace iwvi;

namespace {

struct RandomBatch {
  std::vector<double> log_w;
  std::vector<double> q;  // n x p
  std::vector<double> w;  // n x p
  std::size_t n = 0;
  std::size_t p = 0;

  LogWeightBatch batch(double alpha) const { return LogWeightBatch(log_w, alpha); }
  ScoreMatrix scores() const {
    ScoreMatrix s(n, p);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p; ++k) {
        s.q_row(i)[k] = q[i * p + k];
        s.w_row(i)[k] = w[i * p + k];
      }
    }
    return s;
  }
};

RandomBatch random_batch(std::size_t n, std::size_t p, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  RandomBatch b;
  b.n = n;
  b.p = p;
  for (std::size_t i = 0; i < n; ++i) b.log_w.push_back(1.5 * normal(rng));
  for (std::size_t i = 0; i < n * p; ++i) {
    b.q.push_back(normal(rng));
    b.w.push_back(normal(rng));
  }
  return b;
}

// Direct transcriptions, computed from raw weights without the library.

std::vector<double> first_term(const RandomBatch& b, double alpha) {
  std::vector<double> t(b.n);
  double s = 0.0;
  for (std::size_t i = 0; i < b.n; ++i) {
    t[i] = std::exp((1.0 - alpha) * b.log_w[i]);
    s += t[i];
  }
  std::vector<double> g(b.p, 0.0);
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t k = 0; k < b.p; ++k) g[k] += t[i] / s * b.w[i * b.p + k];
  }
  return g;
}

/// Mnih-Rezende VIMCO with the leave-one-out arithmetic mean (alpha = 0).
std::vector<double> vimco_mnih_rezende(const RandomBatch& b) {
  const double n = static_cast<double>(b.n);
  double total = 0.0;
  for (double lw : b.log_w) total += std::exp(lw);
  const double L = std::log(total / n);
  std::vector<double> g = first_term(b, 0.0);
  for (std::size_t i = 0; i < b.n; ++i) {
    const double others = total - std::exp(b.log_w[i]);
    const double L_i = std::log((others + others / (n - 1.0)) / n);
    for (std::size_t k = 0; k < b.p; ++k) g[k] += b.q[i * b.p + k] * (L - L_i);
  }
  return g;
}

/// Generalized VIMCO with an explicit baseline f_{-i} per sample and coordinate.
std::vector<double> vimco_general(const RandomBatch& b, double alpha,
                                  const std::function<double(std::size_t, std::size_t)>& f) {
  double s = 0.0;
  std::vector<double> t(b.n);
  for (std::size_t i = 0; i < b.n; ++i) {
    t[i] = std::exp((1.0 - alpha) * b.log_w[i]);
    s += t[i];
  }
  std::vector<double> g = first_term(b, alpha);
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t k = 0; k < b.p; ++k) {
      g[k] -= b.q[i * b.p + k] * std::log(1.0 - t[i] / s + f(i, k) / s) / (1.0 - alpha);
    }
  }
  return g;
}

/// f_{-i} = alpha [a_{1,2} - a_{1,1}^2 / a_{1,0}] / [a_{0,2} - a_{0,1}^2], where
/// a_{k,l} averages (w_j^{1-alpha})^k (dlog q_j)^l over j != i.
double star_loo_transcription(const RandomBatch& b, double alpha, std::size_t i, std::size_t k) {
  auto a = [&](int kw, int ls) {
    double s = 0.0;
    for (std::size_t j = 0; j < b.n; ++j) {
      if (j == i) continue;
      s += std::pow(std::exp((1.0 - alpha) * b.log_w[j]), kw) * std::pow(b.q[j * b.p + k], ls);
    }
    return s / (b.n - 1.0);
  };
  const double den = a(0, 2) - a(0, 1) * a(0, 1);
  if (den < 1e-12) return 0.0;
  return std::max(0.0, alpha * (a(1, 2) - a(1, 1) * a(1, 1) / a(1, 0)) / den);
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k] == doctest::Approx(b[k]).epsilon(tol).scale(1.0));
  }
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (const char* name : {"naive", "inter", "am", "gm", "star", "star-prev", "elbo"}) {
    CHECK(kind_name(parse_kind(name, 0.5)) == name);
  }
  CHECK(std::holds_alternative<baseline::StarAlphaZero>(parse_kind("star", 0.0)));
  CHECK(std::holds_alternative<baseline::StarLeaveOneOut>(parse_kind("star", 0.3)));
  CHECK(std::get<baseline::ConstEta>(parse_kind("const-eta:0.25", 0.5)).eta == 0.25);
  CHECK_THROWS_AS(parse_kind("const-eta:abc", 0.5), InvalidArgument);
  CHECK_THROWS_AS(parse_kind("const-eta:-1", 0.5), InvalidArgument);
  CHECK_THROWS_AS(parse_kind("vimco", 0.5), InvalidArgument);
}

TEST_CASE("naive estimator") {
  SUBCASE("constant weights leave the mean w score") {
    RandomBatch b;
    std::mt19937_64 rng(1);
    b = random_batch(4, 2, rng);
    b.log_w.assign(4, 0.0);
    const auto g = naive_grad(b.batch(0.4), b.scores());
    for (std::size_t k = 0; k < 2; ++k) {
      double m = 0.0;
      for (std::size_t i = 0; i < 4; ++i) m += b.w[i * 2 + k] / 4.0;
      CHECK(g.grad[k] == doctest::Approx(m));
    }
  }
  SUBCASE("single sample expansion") {
    RandomBatch b;
    b.n = 1;
    b.p = 1;
    b.log_w = {0.7};
    b.q = {1.3};
    b.w = {-0.4};
    const auto g = naive_grad(b.batch(0.0), b.scores());
    CHECK(g.grad[0] == doctest::Approx(-0.4 + 1.3 * 0.7));
  }
  SUBCASE("matches a direct transcription") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
      const RandomBatch b = random_batch(7, 3, rng);
      const double alpha = 0.1 * t / 2.0;
      std::vector<double> expect = first_term(b, alpha);
      const double bound = oracle::vr_bound(b.log_w, alpha);
      for (std::size_t i = 0; i < b.n; ++i) {
        for (std::size_t k = 0; k < b.p; ++k) expect[k] += b.q[i * b.p + k] * bound;
      }
      check_close(naive_grad(b.batch(alpha), b.scores()).grad, expect, 1e-12);
    }
  }
}

TEST_CASE("inter estimator") {
  std::mt19937_64 rng(3);
  RandomBatch b = random_batch(5, 2, rng);
  b.log_w.assign(5, 0.0);
  const auto g = inter_grad(b.batch(0.5), b.scores(), 0.0);
  const auto f = first_term(b, 0.5);
  check_close(g.grad, f, 1e-14);
  // E[w] = 1 for the Gaussian model, so at alpha = 0 the baseline is zero and INTER == NAIVE.
  const RandomBatch c = random_batch(6, 2, rng);
  check_close(inter_grad(c.batch(0.0), c.scores(), 0.0).grad,
              naive_grad(c.batch(0.0), c.scores()).grad, 1e-13);
}

TEST_CASE("inter has lower variance than naive at N=320") {
  GaussianModel m(1);
  const ParamVector p = m.params({0.0}, {1.0});
  // log E[w^{1-alpha}] = -alpha (1-alpha) / 2 at theta = 0, phi = 1.
  const auto est = run_replicates(m, p, {baseline::Naive{}, baseline::Inter{-0.125}}, 320, 0.5,
                                  10000, 5, {1, 1.0});
  CHECK(coordinate_moments(est, 1)[1].variance < coordinate_moments(est, 0)[1].variance);
}

TEST_CASE("VIMCO baselines") {
  std::mt19937_64 rng(4);
  SUBCASE("equal weights: AM and GM reduce to the mean w score") {
    RandomBatch b = random_batch(6, 2, rng);
    b.log_w.assign(6, 0.3);
    for (double alpha : {0.0, 0.6}) {
      const auto am = vimco_grad(b.batch(alpha), b.scores(), baseline::ArithmeticMean{});
      const auto gm = vimco_grad(b.batch(alpha), b.scores(), baseline::GeometricMean{});
      check_close(am.grad, first_term(b, alpha), 1e-13);
      check_close(gm.grad, am.grad, 1e-13);
    }
  }
  SUBCASE("AM at alpha = 0 is Mnih-Rezende VIMCO") {
    for (int t = 0; t < 20; ++t) {
      const RandomBatch b = random_batch(2 + t, 2, rng);
      check_close(vimco_grad(b.batch(0.0), b.scores(), baseline::ArithmeticMean{}).grad,
                  vimco_mnih_rezende(b), 1e-12);
    }
  }
  SUBCASE("AM, GM and const-eta match the general display") {
    for (double alpha : {0.0, 0.25, 0.8}) {
      const RandomBatch b = random_batch(9, 2, rng);
      const double a1 = 1.0 - alpha;
      auto am = [&](std::size_t i, std::size_t) {
        double s = 0.0;
        for (std::size_t j = 0; j < b.n; ++j) s += j == i ? 0.0 : std::exp(a1 * b.log_w[j]);
        return s / (b.n - 1.0);
      };
      auto gm = [&](std::size_t i, std::size_t) {
        double s = 0.0;
        for (std::size_t j = 0; j < b.n; ++j) s += j == i ? 0.0 : a1 * b.log_w[j];
        return std::exp(s / (b.n - 1.0));
      };
      auto c = [](std::size_t, std::size_t) { return 0.7; };
      check_close(vimco_grad(b.batch(alpha), b.scores(), baseline::ArithmeticMean{}).grad,
                  vimco_general(b, alpha, am), 1e-12);
      check_close(vimco_grad(b.batch(alpha), b.scores(), baseline::GeometricMean{}).grad,
                  vimco_general(b, alpha, gm), 1e-12);
      check_close(vimco_grad(b.batch(alpha), b.scores(), baseline::ConstEta{0.7}).grad,
                  vimco_general(b, alpha, c), 1e-12);
    }
  }
  SUBCASE("star leave-one-out matches the general display") {
    const RandomBatch b = random_batch(8, 3, rng);
    const double alpha = 0.4;
    auto f = [&](std::size_t i, std::size_t k) { return star_loo_transcription(b, alpha, i, k); };
    check_close(vimco_grad(b.batch(alpha), b.scores(), baseline::StarLeaveOneOut{}).grad,
                vimco_general(b, alpha, f), 1e-11);
  }
  SUBCASE("preconditions") {
    const RandomBatch one = random_batch(1, 1, rng);
    CHECK_THROWS_AS(vimco_grad(one.batch(0.0), one.scores(), baseline::ArithmeticMean{}),
                    InvalidArgument);
    CHECK_THROWS_AS(vimco_grad(one.batch(0.0), one.scores(), baseline::GeometricMean{}),
                    InvalidArgument);
    CHECK_THROWS_AS(vimco_grad(one.batch(0.0), one.scores(), baseline::ConstEta{0.0}),
                    InvalidArgument);
    const RandomBatch b = random_batch(4, 2, rng);
    CHECK_THROWS_AS(vimco_grad(b.batch(0.0), ScoreMatrix(3, 2), baseline::ArithmeticMean{}),
                    InvalidArgument);
  }
}

TEST_CASE("leave-one-out star baseline") {
  std::mt19937_64 rng(5);
  SUBCASE("alpha = 0 gives zeros") {
    const RandomBatch b = random_batch(6, 2, rng);
    for (double f : f_star_leave_one_out(b.batch(0.0), b.scores(), 1)) CHECK(f == 0.0);
  }
  SUBCASE("equal scores fall back to zero") {
    RandomBatch b = random_batch(6, 1, rng);
    b.q.assign(6, 0.9);
    for (double f : f_star_leave_one_out(b.batch(0.5), b.scores(), 0)) CHECK(f == 0.0);
  }
  SUBCASE("matches the a-statistics transcription") {
    const RandomBatch b = random_batch(7, 2, rng);
    const auto f = f_star_leave_one_out(b.batch(0.6), b.scores(), 1);
    for (std::size_t i = 0; i < b.n; ++i) {
      CHECK(f[i] == doctest::Approx(star_loo_transcription(b, 0.6, i, 1)).epsilon(1e-11));
    }
  }
  SUBCASE("f_{-i} does not depend on z_i") {
    RandomBatch b = random_batch(6, 2, rng);
    const auto before = f_star_leave_one_out(b.batch(0.5), b.scores(), 0);
    b.log_w[2] += 0.8;
    b.q[2 * 2 + 0] -= 1.1;
    const auto after = f_star_leave_one_out(b.batch(0.5), b.scores(), 0);
    CHECK(after[2] == doctest::Approx(before[2]).epsilon(1e-12));
  }
  SUBCASE("needs three draws") {
    const RandomBatch b = random_batch(2, 1, rng);
    CHECK_THROWS_AS(f_star_leave_one_out(b.batch(0.5), b.scores(), 0), InvalidArgument);
  }
  SUBCASE("Gaussian: eta / E[w^{1-alpha}] tends to alpha") {
    GaussianModel m(1);
    const ParamVector p = m.params({0.0}, {1.0});
    const SampleBatch batch = draw_batch(m, p, 100000, {6, 0});
    const LogWeightBatch lw = eval_log_weights(m, p, batch, 0.5);
    const ScoreMatrix sc = eval_scores(m, p, batch);
    const auto f = f_star_leave_one_out(lw, sc, 1);
    double mean = 0.0;
    for (double v : f) mean += v / f.size();
    const double norm = std::exp(gaussian::log_norm_const({{0.0}, {1.0}, 0.5, 0}));
    CHECK(mean / norm == doctest::Approx(0.5).epsilon(0.01));
  }
}

TEST_CASE("closed-form star at alpha = 0") {
  std::mt19937_64 rng(7);
  SUBCASE("equal weights, N = 2") {
    RandomBatch b = random_batch(2, 1, rng);
    b.log_w = {0.2, 0.2};
    const auto g = vimco_star_alpha0(b.batch(0.0), b.scores());
    const double expect = 0.5 * (b.w[0] + b.w[1]) + std::log(2.0) * (b.q[0] + b.q[1]);
    CHECK(g.grad[0] == doctest::Approx(expect));
  }
  SUBCASE("equals const-eta 0 on random batches") {
    for (int t = 0; t < 50; ++t) {
      const RandomBatch b = random_batch(2 + t % 9, 2, rng);
      check_close(vimco_star_alpha0(b.batch(0.0), b.scores()).grad,
                  vimco_grad(b.batch(0.0), b.scores(), baseline::ConstEta{0.0}).grad, 1e-12);
    }
  }
  SUBCASE("AM minus star is -log(N/(N-1)) times the score sum") {
    for (int t = 0; t < 20; ++t) {
      const RandomBatch b = random_batch(2 + t, 2, rng);
      const auto am = vimco_grad(b.batch(0.0), b.scores(), baseline::ArithmeticMean{}).grad;
      const auto st = vimco_star_alpha0(b.batch(0.0), b.scores()).grad;
      const double n = static_cast<double>(b.n);
      for (std::size_t k = 0; k < b.p; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < b.n; ++i) s += b.q[i * b.p + k];
        CHECK(am[k] - st[k] == doctest::Approx(-std::log(n / (n - 1.0)) * s).epsilon(1e-12));
      }
    }
  }
  SUBCASE("preconditions") {
    const RandomBatch b = random_batch(3, 1, rng);
    CHECK_THROWS_AS(vimco_star_alpha0(b.batch(0.5), b.scores()), InvalidArgument);
    const RandomBatch one = random_batch(1, 1, rng);
    CHECK_THROWS_AS(vimco_star_alpha0(one.batch(0.0), one.scores()), InvalidArgument);
  }
  SUBCASE("variance at q = p, N = 2") {
    GaussianModel m(1);
    const ParamVector p = m.params({0.0}, {0.0});
    const auto est = run_replicates(m, p, {baseline::StarAlphaZero{}}, 2, 0.0, 100000, 8, {1, 1.0});
    const double expect = 0.5 * std::pow(1.0 - 2.0 * std::log(2.0), 2);
    CHECK(coordinate_moments(est, 0)[1].variance == doctest::Approx(expect).epsilon(0.05));
  }
}

TEST_CASE("previous-batch eta") {
  std::mt19937_64 rng(9);
  const RandomBatch b = random_batch(10, 2, rng);
  CHECK(eta_star_estimate(b.batch(0.0), b.scores(), 0) == 0.0);
  RandomBatch flat = b;
  flat.q.assign(flat.q.size(), 1.0);
  CHECK(eta_star_estimate(flat.batch(0.5), flat.scores(), 0) == 0.0);
  const auto logs = log_eta_star_estimates(b.batch(0.5), b.scores());
  for (std::size_t k = 0; k < 2; ++k) {
    const double e = eta_star_estimate(b.batch(0.5), b.scores(), k);
    if (e > 0.0) {
      CHECK(logs[k] == doctest::Approx(std::log(e)).epsilon(1e-12));
    } else {
      CHECK(logs[k] == -INFINITY);
    }
  }

  GaussianModel m(1);
  const ParamVector p = m.params({0.0}, {1.0});
  const SampleBatch batch = draw_batch(m, p, 100000, {10, 0});
  const LogWeightBatch lw = eval_log_weights(m, p, batch, 0.5);
  const ScoreMatrix sc = eval_scores(m, p, batch);
  const double norm = std::exp(gaussian::log_norm_const({{0.0}, {1.0}, 0.5, 0}));
  CHECK(eta_star_estimate(lw, sc, 1) / norm == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("elbo estimator matches its transcription") {
  std::mt19937_64 rng(12);
  const RandomBatch b = random_batch(5, 2, rng);
  std::vector<double> expect(2, 0.0);
  double total = 0.0;
  for (double v : b.log_w) total += v;
  for (std::size_t i = 0; i < 5; ++i) {
    const double signal = b.log_w[i] - (total - b.log_w[i]) / 4.0;
    for (std::size_t k = 0; k < 2; ++k) {
      expect[k] += (b.w[i * 2 + k] + b.q[i * 2 + k] * signal) / 5.0;
    }
  }
  check_close(elbo_grad(b.batch(0.3), b.scores()).grad, expect, 1e-13);
}

TEST_CASE("every kind is unbiased for the bound gradient") {
  GaussianModel m(1);
  struct Config {
    double theta, phi, alpha;
  };
  for (const Config c : {Config{0.0, 1.0, 0.0}, Config{0.0, 1.0, 0.5}, Config{0.0, 0.1, 0.0}}) {
    CAPTURE(c.phi);
    CAPTURE(c.alpha);
    const ParamVector p = m.params({c.theta}, {c.phi});
    const double lnc = gaussian::log_norm_const({{c.theta}, {c.phi}, c.alpha, 0});
    std::vector<BaselineKind> kinds{baseline::Naive{}, baseline::Inter{lnc},
                                    baseline::ArithmeticMean{}, baseline::GeometricMean{},
                                    baseline::ConstEta{0.3}, baseline::StarPrevBatch{}};
    if (c.alpha == 0.0) {
      kinds.push_back(baseline::StarAlphaZero{});
    } else {
      kinds.push_back(baseline::StarLeaveOneOut{});
    }
    const std::size_t reps = 200000;
    const auto est = run_replicates(m, p, kinds, 10, c.alpha, reps, 21, {1, 1.0});
    const auto fd = oracle::reparam_fd_gradient({c.theta}, {c.phi}, c.alpha, 10, reps, 22);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      CAPTURE(kind_name(kinds[k]));
      const auto mom = coordinate_moments(est, k);
      for (std::size_t coord = 0; coord < 2; ++coord) {
        const double se = std::hypot(mom[coord].std_error, fd.se[coord]);
        CHECK(std::abs(mom[coord].mean - fd.mean[coord]) <= 4.0 * se);
      }
    }
  }
}
