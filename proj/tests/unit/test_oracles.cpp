#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tnt/oracles.hpp"
#include "tnt/verify.hpp"

using namespace tnt;
using tnt::testing::make_vocab;

namespace {

const TokenSeq kInput{3};

// Full-prefix tabular model over EOS and `content`, strictly positive there.
TabularModel random_model(std::mt19937_64& rng, const std::vector<TokenId>& content, int max_len) {
  const Vocab v = make_vocab(5);
  TabularModel m(v, max_len);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<TokenSeq> frontier{{}};
  for (int len = 0; len < max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& prefix : frontier) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(5);
      p[0] = u(rng);
      for (TokenId c : content) p[c] = u(rng);
      m.set_conditional(m.key_for(kInput, prefix), TokenDistribution(Eigen::VectorXd(p / p.sum())));
      for (TokenId c : content) {
        TokenSeq longer = prefix;
        longer.push_back(c);
        next.push_back(longer);
      }
    }
    frontier = next;
  }
  return m;
}

double sequence_prob(const SequenceModel& m, const TokenSeq& seq) {
  double p = 1.0;
  const auto conds = forward_all(m, kInput, seq);
  for (std::size_t t = 0; t < seq.size(); ++t) p *= conds[t][seq[t]];
  return p;
}

std::map<TokenSeq, double> complete(const SequenceDistribution& d) {
  auto out = d.terminated;
  out.insert(d.truncated.begin(), d.truncated.end());
  return out;
}

}  // namespace

TEST_CASE("lattice projection examples") {
  const TokenDistribution p{0.5, 0.3, 0.2};
  CHECK(brute_force_projection(p, NegativeSet{}, 200) == p);
  const auto q = brute_force_projection(p, NegativeSet{0}, 200);
  CHECK(q[0] == 0.0);
  CHECK(std::abs(q[1] - 0.6) <= 1.0 / 200);
  CHECK(std::abs(q[2] - 0.4) <= 1.0 / 200);
  const auto u = brute_force_projection(TokenDistribution::uniform(3), NegativeSet{1}, 200);
  CHECK(u[0] == doctest::Approx(0.5));
  CHECK(u[1] == 0.0);

  CHECK_THROWS_AS(brute_force_projection(TokenDistribution::uniform(6), NegativeSet{0}, 10), InvalidArgument);
  CHECK_THROWS_AS(brute_force_projection(p, NegativeSet{0}, 201), InvalidArgument);
  CHECK_THROWS_AS(brute_force_projection(TokenDistribution{0.0, 1.0, 0.0}, NegativeSet{1}, 50), InfeasibleConstraint);
}

TEST_CASE("lattice projection is never beaten by a neighbouring lattice point") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const TokenDistribution p = tnt::testing::random_distribution(rng, 4);
    const NegativeSet neg{static_cast<TokenId>(rng() % 4)};
    const int grid = 40;
    const Eigen::VectorXd q = brute_force_projection(p, neg, grid).probs();
    auto kl = [&](const Eigen::VectorXd& x) {
      double s = 0;
      for (int i = 0; i < 4; ++i) {
        if (x[i] > 0) s += x[i] * std::log(x[i] / p[i]);
      }
      return s;
    };
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i == j || neg.contains(j) || q[i] <= 0) continue;
        Eigen::VectorXd r = q;
        r[i] -= 1.0 / grid;
        r[j] += 1.0 / grid;
        CHECK(kl(r) >= kl(q) - 1e-12);
      }
    }
  }
}

TEST_CASE("exhaustive sequence distribution") {
  TabularModel eos(make_vocab(5), 0);
  eos.set_conditional(eos.key_for(kInput, {}), TokenDistribution{1.0, 0.0, 0.0, 0.0, 0.0});
  const auto d = exhaustive_sequence_distribution(eos, kInput, 3);
  CHECK(d.terminated.size() == 1);
  CHECK(d.terminated.at(TokenSeq{0}) == 1.0);
  CHECK(d.unterminated_mass() == 0.0);

  // EOS and one content token, each with probability 1/2.
  TabularModel coin(make_vocab(5), 0);
  coin.set_conditional(coin.key_for(kInput, {}), TokenDistribution{0.5, 0.0, 0.0, 0.5, 0.0});
  const auto c = exhaustive_sequence_distribution(coin, kInput, 2);
  CHECK(c.terminated.at(TokenSeq{0}) == doctest::Approx(0.5));
  CHECK(c.terminated.at(TokenSeq{3, 0}) == doctest::Approx(0.25));
  CHECK(c.terminated.size() == 2);
  CHECK(c.unterminated_mass() == doctest::Approx(0.25));
  CHECK(c.terminated_mass() == doctest::Approx(0.75));

  CHECK_THROWS_AS(exhaustive_sequence_distribution(TabularModel(make_vocab(32), 0), kInput, 4), SpaceTooLarge);
}

TEST_CASE("conditioning and total variation") {
  const std::map<TokenSeq, double> d{{{3, 0}, 0.5}, {{4, 0}, 0.3}, {{0}, 0.2}};
  const auto kept = condition_on(d, [](const TokenSeq& s) { return s.front() != 4; });
  CHECK(kept.at(TokenSeq{3, 0}) == doctest::Approx(0.5 / 0.7));
  CHECK_FALSE(kept.contains(TokenSeq{4, 0}));
  CHECK(total_variation(d, d) == 0.0);
  CHECK(total_variation(d, kept) == doctest::Approx(0.3));
  CHECK(total_variation({{{0}, 1.0}}, {{{3, 0}, 1.0}}) == doctest::Approx(1.0));
}

TEST_CASE("reward identity: zero rewards reduce to KL to the original") {
  std::mt19937_64 rng(9);
  const TabularModel theta = random_model(rng, {3, 4}, 3);
  const TabularModel orig = random_model(rng, {3, 4}, 3);
  const RewardSpec zero{0.5, [](std::span<const TokenId>) { return 0.0; }};
  const auto r = token_rl_equivalence_check(theta, orig, zero, kInput, 3);
  double kl = 0.0;
  for (const auto& [seq, p] : complete(exhaustive_sequence_distribution(theta, kInput, 3))) {
    kl += p * std::log(p / sequence_prob(orig, seq));
  }
  CHECK(r.difference < 1e-10);
  CHECK(r.lhs == doctest::Approx(kl).epsilon(1e-12));
  CHECK(std::abs(r.log_z) < 1e-12);
}

TEST_CASE("reward identity at the optimum and on random instances") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const TabularModel orig = random_model(rng, {3, 4}, 3);
    const double w3 = std::uniform_real_distribution<double>(-1, 1)(rng);
    const RewardSpec rewards{0.5, [w3](std::span<const TokenId> prefix) {
                               return prefix.back() == 3 ? w3 : prefix.back() == 0 ? 0.2 : -0.1;
                             }};
    const TabularModel tilt = exponentiated_reward_tilt(orig, rewards, kInput, 3);
    const auto at_opt = token_rl_equivalence_check(tilt, orig, rewards, kInput, 3);
    CHECK(std::abs(at_opt.kl) < 1e-10);
    CHECK(std::abs(at_opt.lhs + at_opt.log_z) < 1e-10);

    // The tilt puts p_o(x) exp(R(x)/beta) / Z on every complete sequence.
    const auto tilt_dist = complete(exhaustive_sequence_distribution(tilt, kInput, 3));
    for (const auto& [seq, p] : tilt_dist) {
      const double want = sequence_prob(orig, seq) * std::exp(rewards.total(seq) / rewards.beta - at_opt.log_z);
      CHECK(p == doctest::Approx(want).epsilon(1e-10));
    }

    const TabularModel theta = random_model(rng, {3, 4}, 3);
    CHECK(token_rl_equivalence_check(theta, orig, rewards, kInput, 3).difference < 1e-8);
  }
}

TEST_CASE("verification checks on the library projection") {
  const auto results = run_verification(0);
  REQUIRE(results.size() == 8);
  // The l-inf tolerance of the lattice comparison is judged by the acceptance
  // suite; here only its tolerance-free part: no lattice point has lower KL.
  CHECK(results[0].detail.ends_with("lattice beats candidate on 0"));
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& r = results[i];
    INFO(r.name << ": " << r.measured << " vs " << r.tolerance << " (" << r.detail << ")");
    CHECK(r.pass);
  }
}

TEST_CASE("verification rejects a projection with an off-by-one renormalization") {
  // Normalizes by the kept mass of ids [0, V-1), skipping the last id.
  const ProjectionFn broken = [](const TokenDistribution& p, const NegativeSet& neg) {
    Eigen::VectorXd kept = p.probs();
    for (TokenId id : neg.ids()) kept[id] = 0.0;
    const double mass = kept.head(kept.size() - 1).sum();
    return TokenDistribution::from_normalized(kept / (mass > 0 ? mass : 1.0));
  };
  CHECK_FALSE(check_projection_exactness(0, 50, broken).pass);
  CHECK_FALSE(check_commutativity(0, 100, broken).pass);
  CHECK(check_commutativity(0, 100).pass);
}

TEST_CASE("baseline blindness check") {
  const CheckResult r = check_baseline_blindness();
  CHECK(r.pass);
  CHECK(r.measured == 0.0);
}
