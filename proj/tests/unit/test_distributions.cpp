#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tnt/distributions.hpp"

using namespace tnt;
using tnt::testing::random_distribution;

namespace {

double kl_direct(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] > 0.0) s += q[i] * std::log(q[i] / p[i]);
  }
  return s;
}

void check_close(const TokenDistribution& got, std::initializer_list<double> want, double tol = 1e-12) {
  REQUIRE(got.size() == static_cast<Eigen::Index>(want.size()));
  Eigen::Index i = 0;
  for (double w : want) CHECK(std::abs(got[i++] - w) < tol);
}

}  // namespace

TEST_CASE("distribution construction validates") {
  CHECK_NOTHROW(TokenDistribution{0.25, 0.75});
  CHECK_THROWS_AS(TokenDistribution({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(TokenDistribution({-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(TokenDistribution(Eigen::VectorXd()), InvalidArgument);
  CHECK(TokenDistribution::uniform(4)[3] == 0.25);
}

TEST_CASE("negative sets are sorted and deduplicated") {
  NegativeSet s{4, 1, 4, 2};
  CHECK(s.ids() == std::vector<TokenId>{1, 2, 4});
  CHECK(s.contains(2));
  CHECK_FALSE(s.contains(3));
  CHECK(s.unite(NegativeSet{3, 1}).ids() == std::vector<TokenId>{1, 2, 3, 4});
}

TEST_CASE("projection examples") {
  const TokenDistribution u = TokenDistribution::uniform(4);
  CHECK(project_out_negatives(u, NegativeSet{}) == u);
  check_close(project_out_negatives(u, NegativeSet{0}), {0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  check_close(project_out_negatives(TokenDistribution{0.5, 0.3, 0.2}, NegativeSet{0}), {0.0, 0.6, 0.4});
}

TEST_CASE("projection errors") {
  CHECK_THROWS_AS(project_out_negatives(TokenDistribution{0.0, 1.0, 0.0}, NegativeSet{1}), TotalMassRemoved);
  CHECK_THROWS_AS(project_out_negatives(TokenDistribution{0.5, 0.5}, NegativeSet{2}), TokenOutOfRange);
  CHECK_THROWS_AS(project_out_negatives(TokenDistribution{0.5, 0.5}, NegativeSet{-1}), TokenOutOfRange);
}

TEST_CASE("projection minimizes KL(q || p) over feasible q") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size_dist(3, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const int v = size_dist(rng);
    const TokenDistribution p = random_distribution(rng, v);
    NegativeSet neg{static_cast<TokenId>(rng() % v), static_cast<TokenId>(rng() % v)};
    const TokenDistribution q = project_out_negatives(p, neg);
    CHECK(q.probs().sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (TokenId id : neg.ids()) CHECK(q[id] == 0.0);
    // Ratios among kept tokens are preserved.
    double removed = 0.0;
    for (TokenId id : neg.ids()) removed += p[id];
    for (Eigen::Index i = 0; i < v; ++i) {
      if (!neg.contains(static_cast<TokenId>(i))) CHECK(q[i] * (1.0 - removed) == doctest::Approx(p[i]));
    }
    const double best = kl_direct(q.probs(), p.probs());
    for (int k = 0; k < 20; ++k) {
      TokenDistribution r = random_distribution(rng, v);
      Eigen::VectorXd rv = r.probs();
      for (TokenId id : neg.ids()) rv[id] = 0.0;
      rv /= rv.sum();
      CHECK(kl_direct(rv, p.probs()) >= best - 1e-12);
    }
  }
}

TEST_CASE("projections commute and compose to the union") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenDistribution p = random_distribution(rng, 8);
    const NegativeSet a{static_cast<TokenId>(rng() % 8)};
    const NegativeSet b{static_cast<TokenId>(rng() % 8), static_cast<TokenId>(rng() % 8)};
    if (a.unite(b).size() == 8) continue;
    const auto ab = project_out_negatives(project_out_negatives(p, a), b).probs();
    const auto ba = project_out_negatives(project_out_negatives(p, b), a).probs();
    const auto u = project_out_negatives(p, a.unite(b)).probs();
    CHECK((ab - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ba - u).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("smoothing") {
  const TokenDistribution u = TokenDistribution::uniform(5);
  CHECK((smooth_distribution(u, 1e-6).probs() - u.probs()).cwiseAbs().maxCoeff() < 1e-15);

  const double eps = 1e-6;
  check_close(smooth_distribution(TokenDistribution{1.0, 0.0, 0.0}, eps),
              {(1 + eps) / (1 + 3 * eps), eps / (1 + 3 * eps), eps / (1 + 3 * eps)}, 1e-15);

  const TokenDistribution s = smooth_distribution(TokenDistribution{0.0, 0.6, 0.4}, eps);
  CHECK(s.probs().minCoeff() > 0.0);
  CHECK(s.probs().sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((s.probs() - Eigen::Vector3d(0.0, 0.6, 0.4)).cwiseAbs().maxCoeff() < 1e-5);
  CHECK_THROWS_AS(smooth_distribution(u, 0.0), InvalidArgument);
}

TEST_CASE("forward KL") {
  const Eigen::Vector3d logp = Eigen::Vector3d(0.2, 0.3, 0.5).array().log();
  CHECK(forward_kl(TokenDistribution{0.2, 0.3, 0.5}, logp) == doctest::Approx(0.0).scale(1).epsilon(1e-15));
  CHECK(forward_kl(TokenDistribution{1.0, 0.0}, Eigen::Vector2d::Constant(std::log(0.5))) ==
        doctest::Approx(std::log(2.0)));
  const double expected = 0.6 * std::log(1.8) + 0.4 * std::log(1.2);
  CHECK(forward_kl(TokenDistribution{0.0, 0.6, 0.4}, Eigen::Vector3d::Constant(-std::log(3.0))) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(forward_kl(TokenDistribution{0.5, 0.5}, Eigen::Vector3d::Zero()), LengthMismatch);
  CHECK_THROWS_AS(forward_kl(TokenDistribution{0.5, 0.5}, Eigen::Vector2d::Zero()), InvalidArgument);
}

TEST_CASE("reverse KL") {
  const TokenDistribution p{0.1, 0.2, 0.7};
  CHECK(reverse_kl(p, p) == 0.0);
  CHECK(reverse_kl(TokenDistribution{0.5, 0.5}, TokenDistribution{1.0, 0.0}) == doctest::Approx(std::log(2.0)));

  const TokenDistribution target = smooth_distribution(TokenDistribution{0.0, 0.6, 0.4}, 1e-6);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += (1.0 / 3) * (std::log(1.0 / 3) - std::log(target[i]));
  CHECK(std::abs(reverse_kl(target, TokenDistribution::uniform(3)) - expected) < 1e-10);
  CHECK_THROWS_AS(reverse_kl(TokenDistribution{0.0, 1.0}, TokenDistribution{0.5, 0.5}), TargetNotPositive);
}

TEST_CASE("baseline token losses") {
  CHECK(nl_token_loss(0.0) == 0.0);
  CHECK(nl_token_loss(std::log(0.5)) == doctest::Approx(-0.693147).epsilon(1e-6));
  CHECK(nl_token_loss(std::log(1e-8)) == doctest::Approx(-18.420680743952367).epsilon(1e-12));

  CHECK(ul_token_loss(0.0, 1e-9) == 0.0);
  CHECK(ul_token_loss(0.5, 1e-9) == doctest::Approx(std::log(2.0)));
  CHECK(ul_token_loss(1.0, 1e-9) == doctest::Approx(20.72326583694641).epsilon(1e-12));

  CHECK(ll_token_loss(0.0) == 0.0);
  CHECK(ll_token_loss(std::log(0.25)) == doctest::Approx(std::log(4.0)));
  CHECK(ll_token_loss(-3.0) == 3.0);
}

TEST_CASE("softmax keeps exact zeros and survives large scores") {
  Eigen::Vector3d s(1e4, 1e4, -1e4);
  const Eigen::Vector3d p = softmax(s);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
  CHECK(log_sum_exp(Eigen::Vector2d(-1e300, -1e300)) == doctest::Approx(-1e300 + std::log(2.0)));
  Eigen::Vector3d z(0.0, 0.0, -1e4);
  CHECK(softmax(z)[2] == 0.0);
}

TEST_CASE("float instantiation") {
  using F = BasicTokenDistribution<float>;
  const F p{0.5f, 0.3f, 0.2f};
  const F q = project_out_negatives(p, NegativeSet{0});
  CHECK(q[1] == doctest::Approx(0.6f));
  CHECK(smooth_distribution(q, 1e-6f)[0] > 0.0f);
}
