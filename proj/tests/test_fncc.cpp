#include <doctest.h>

#include <cmath>
#include <random>

#include "falsecl/data.hpp"
#include "falsecl/fncc.hpp"
#include "oracles.hpp"

using namespace falsecl;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

SimilarityContext hand_context(const Matrix& sim) {
  SimilarityContext ctx;
  ctx.sim = sim;
  ctx.positive_of = interleaved_positive_map(static_cast<std::size_t>(sim.rows()) / 2);
  return ctx;
}

Matrix sym(std::initializer_list<std::tuple<int, int, double>> entries, int n, double fill = 0.0) {
  Matrix s = Matrix::Constant(n, n, fill);
  s.diagonal().setOnes();
  for (auto [i, j, v] : entries) {
    s(i, j) = v;
    s(j, i) = v;
  }
  return s;
}

LossConfig config(double alpha, double tau = 1.0) {
  LossConfig c;
  c.alpha = alpha;
  c.tau = tau;
  return c;
}

}  // namespace

TEST_CASE("fncc_terms") {
  const auto ctx = hand_context(sym({{0, 1, 0.9}, {0, 2, 0.88}, {0, 3, 0.1}}, 4));
  FnsFlags none = FnsFlags::empty(4);
  auto t = fncc_terms(ctx, none, 0, config(0.3));
  CHECK(t.s_ep == 0.0);
  CHECK(t.s_wn == 0.0);
  CHECK(t.s_pos == doctest::Approx(std::exp(0.9)));
  CHECK(t.s_rest == doctest::Approx(std::exp(0.88) + std::exp(0.1)));

  FnsFlags one = FnsFlags::empty(4);
  one.flagged[0] = {2};
  one.qualifying[0] = true;
  t = fncc_terms(ctx, one, 0, config(0.3));
  // 0.3 * e^0.88 and 0.7 * e^0.88
  CHECK(t.s_ep == doctest::Approx(0.72324).epsilon(1e-4));
  CHECK(t.s_wn == doctest::Approx(1.68756).epsilon(1e-4));
  CHECK(t.s_rest == doctest::Approx(std::exp(0.1)));
  CHECK(fncc_terms(ctx, one, 0, config(1.0)).s_wn == 0.0);

  FnsFlags bad = FnsFlags::empty(4);
  bad.flagged[0] = {1};
  CHECK_THROWS_AS(fncc_terms(ctx, bad, 0, config(0.5)), BadConfig);
}

TEST_CASE("fncc_loss scalar examples") {
  SUBCASE("no flags: -log(e / (e + 2))") {
    // Anchor 0 sees positive sim 1 and two negatives at 0.
    const auto ctx = hand_context(sym({{0, 1, 1.0}, {2, 3, 1.0}}, 4, 0.0));
    const auto r = fncc_loss(ctx, FnsFlags::empty(4), config(0.5));
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
    for (double l : r.per_anchor) CHECK(l == doctest::Approx(expected).epsilon(1e-14));
    CHECK(r.loss == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("alpha = 1 with one flagged negative") {
    // Views come in pairs, so the sixth view is parked at a similarity whose
    // exponential underflows to exactly zero.
    Matrix s = Matrix::Identity(6, 6);
    s(0, 1) = s(1, 0) = 0.9;
    s(0, 2) = s(2, 0) = 0.88;
    s(0, 3) = s(3, 0) = 0.1;
    s(0, 4) = s(4, 0) = -0.2;
    s(0, 5) = s(5, 0) = -1e300;
    FnsFlags f = FnsFlags::empty(6);
    f.flagged[0] = {2};
    const auto r = fncc_loss(hand_context(s), f, config(1.0));
    const double e = std::exp(0.9) + std::exp(0.88);
    const double expected = -std::log(e / (e + std::exp(0.1) + std::exp(-0.2)));
    CHECK(expected == doctest::Approx(0.333).epsilon(1e-3));
    CHECK(r.per_anchor[0] == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("uniform similarities give log(1 + N_neg)") {
    const auto ctx = hand_context(Matrix::Constant(4, 4, 0.3));
    const auto r = info_nce_loss(ctx, config(1.0));
    CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    CHECK(std::log(3.0) == doctest::Approx(1.0986).epsilon(1e-4));
  }
}

TEST_CASE("loss algebra on random batches") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> sources(2, 6), width(2, 5), kdist(1, 3);
  std::uniform_real_distribution<double> tau_dist(0.3, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_src = sources(rng);
    const auto ctx = build_similarity_context(random_matrix(2 * n_src, width(rng), rng),
                                              interleaved_positive_map(static_cast<std::size_t>(n_src)));
    const double tau = tau_dist(rng);
    const auto flags = detect_possible_fns(ctx, -1.0, static_cast<std::size_t>(kdist(rng)));
    REQUIRE(flags.any());

    // Degeneration: alpha = 0 or no flags is InfoNCE, bit for bit.
    const auto base = info_nce_loss(ctx, config(0.7, tau));
    const auto a0 = fncc_loss(ctx, flags, config(0.0, tau));
    CHECK(a0.loss == base.loss);
    CHECK(a0.per_anchor == base.per_anchor);
    CHECK(a0.grad_embeddings == base.grad_embeddings);
    const auto nf = fncc_loss(ctx, FnsFlags::empty(ctx.n_anchors()), config(0.4, tau));
    CHECK(nf.per_anchor == base.per_anchor);

    // Denominator constant in alpha, numerator strictly increasing.
    for (std::size_t i = 0; i < ctx.n_anchors(); ++i) {
      const double d0 = fncc_terms(ctx, flags, i, config(0.0, tau)).denominator();
      const double d5 = fncc_terms(ctx, flags, i, config(0.5, tau)).denominator();
      const double d1 = fncc_terms(ctx, flags, i, config(1.0, tau)).denominator();
      CHECK(std::abs(d0 - d5) <= 1e-12 * d0);
      CHECK(std::abs(d0 - d1) <= 1e-12 * d0);
    }
    double prev = a0.loss;
    for (double alpha : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
      const double l = fncc_loss(ctx, flags, config(alpha, tau)).loss;
      CHECK(l < prev);
      prev = l;
    }

    // alpha = 1 equals a multi-positive loss with flagged views as positives.
    const auto a1 = fncc_loss(ctx, flags, config(1.0, tau));
    double mean = 0.0;
    for (std::size_t i = 0; i < ctx.n_anchors(); ++i) {
      std::vector<std::size_t> positives = flags.flagged[i];
      positives.push_back(ctx.positive_of[i]);
      const double ref = oracle::multi_positive_loss(ctx.sim, i, positives, tau);
      CHECK(std::abs(a1.per_anchor[i] - ref) <= 1e-12);
      mean += ref;
    }
    CHECK(std::abs(a1.loss - mean / static_cast<double>(ctx.n_anchors())) <= 1e-12);
  }
}

TEST_CASE("large similarities stay finite at small tau") {
  const auto ctx = hand_context(sym({{0, 1, 1.0}, {2, 3, 1.0}}, 4, 0.99));
  const auto r = info_nce_loss(ctx, config(1.0, 1e-3));
  CHECK(std::isfinite(r.loss));
}

TEST_CASE("embedding gradient matches central differences") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n_src = 2 + static_cast<std::size_t>(trial % 3);
    const Matrix e = random_matrix(static_cast<Eigen::Index>(2 * n_src), 3, rng);
    const auto pos = interleaved_positive_map(n_src);
    const auto ctx = build_similarity_context(e, pos);
    const auto flags = detect_possible_fns(ctx, -1.0, 1 + static_cast<std::size_t>(trial % 2));
    LossConfig cfg = config(0.25 * (trial % 5), trial % 2 == 0 ? 1.0 : 0.5);
    CHECK(fncc_grad_check(e, pos, flags, cfg, 1e-5) <= 1e-5);
  }
  CHECK_THROWS_AS(fncc_grad_check(Matrix::Ones(4, 2), interleaved_positive_map(2), FnsFlags::empty(4),
                                  config(1.0), 1e-3),
                  BadConfig);
}

TEST_CASE("symmetric batch has cancelling gradient") {
  // Two sources on opposite poles, both views identical: every anchor sees the
  // same picture, and the loss is stationary.
  Matrix e(4, 2);
  e << 1, 0, 1, 0, -1, 0, -1, 0;
  const auto ctx = build_similarity_context(e, interleaved_positive_map(2));
  const auto r = info_nce_loss(ctx, config(1.0));
  CHECK(r.grad_embeddings.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(r.grad_embeddings.colwise().sum().cwiseAbs().maxCoeff() <= 1e-15);
}
