#include "tnt/oracles.hpp"

#include <cmath>
#include <limits>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

constexpr double kMaxEnumeration = 1e6;

void check_space(const SequenceModel& model, int max_len) {
  if (max_len < 1) throw InvalidArgument("enumeration: max_len must be >= 1");
  const double size = std::pow(static_cast<double>(model.vocab().size), max_len);
  if (size > kMaxEnumeration) {
    throw SpaceTooLarge("enumeration: V^max_len = " + std::to_string(size) + " exceeds 1e6");
  }
}

// Visits every complete output (EOS-terminated, or of length max_len) with
// positive probability under `model`, passing the sequence and the list of
// its per-position conditional probabilities.
template <typename Fn>
void enumerate_outputs(const SequenceModel& model, std::span<const TokenId> input, int max_len, Fn&& visit) {
  TokenSeq prefix;
  std::vector<double> chain;
  std::function<void()> recurse = [&]() {
    const Eigen::VectorXd p = softmax(model.next_logits(input, prefix));
    for (Eigen::Index x = 0; x < p.size(); ++x) {
      if (p[x] <= 0.0) continue;
      prefix.push_back(static_cast<TokenId>(x));
      chain.push_back(p[x]);
      const bool done = x == model.vocab().eos;
      if (done || static_cast<int>(prefix.size()) == max_len) {
        visit(prefix, chain, done);
      } else {
        recurse();
      }
      prefix.pop_back();
      chain.pop_back();
    }
  };
  recurse();
}

// Conditional probability of each token of `seq` under `model`.
std::vector<double> chained_conditionals(const SequenceModel& model, std::span<const TokenId> input,
                                         const TokenSeq& seq) {
  std::vector<double> out;
  out.reserve(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Eigen::VectorXd p = softmax(model.next_logits(input, std::span<const TokenId>(seq.data(), t)));
    out.push_back(p[seq[t]]);
  }
  return out;
}

double product(const std::vector<double>& xs) {
  double out = 1.0;
  for (double x : xs) out *= x;
  return out;
}

}  // namespace

TokenDistribution brute_force_projection(const TokenDistribution& p, const NegativeSet& neg, int grid) {
  const auto v = static_cast<int>(p.size());
  if (v > 5) throw InvalidArgument("brute_force_projection: V must be <= 5");
  if (grid < 1 || grid > 200) throw InvalidArgument("brute_force_projection: grid must lie in [1, 200]");
  neg.check_within(v);

  std::vector<int> free_ids;
  bool feasible = false;
  for (int i = 0; i < v; ++i) {
    if (neg.contains(i)) continue;
    free_ids.push_back(i);
    feasible = feasible || p[i] > 0.0;
  }
  if (!feasible) throw InfeasibleConstraint("brute_force_projection: every supported id is negative");

  // term[i][k] = (k/grid) log((k/grid) / p_i), infinite where p_i = 0 < k.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> term(static_cast<std::size_t>(v), std::vector<double>(grid + 1, 0.0));
  for (int i : free_ids) {
    for (int k = 1; k <= grid; ++k) {
      const double q = static_cast<double>(k) / grid;
      term[i][k] = p[i] > 0.0 ? q * std::log(q / p[i]) : inf;
    }
  }

  const std::size_t n = free_ids.size();
  std::vector<int> counts(n, 0), best_counts;
  double best = inf;
  std::function<void(std::size_t, int, double)> search = [&](std::size_t idx, int remaining, double acc) {
    if (idx + 1 == n) {
      counts[idx] = remaining;
      const double total = acc + term[free_ids[idx]][remaining];
      if (total < best) {
        best = total;
        best_counts = counts;
      }
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      counts[idx] = k;
      const double partial = acc + term[free_ids[idx]][k];
      if (partial == inf) break;
      search(idx + 1, remaining - k, partial);
    }
  };
  search(0, grid, 0.0);

  Eigen::VectorXd q = Eigen::VectorXd::Zero(v);
  for (std::size_t j = 0; j < n; ++j) q[free_ids[j]] = static_cast<double>(best_counts[j]) / grid;
  return TokenDistribution(std::move(q));
}

double SequenceDistribution::terminated_mass() const {
  double total = 0.0;
  for (const auto& [seq, prob] : terminated) total += prob;
  return total;
}

double SequenceDistribution::unterminated_mass() const {
  double total = 0.0;
  for (const auto& [seq, prob] : truncated) total += prob;
  return total;
}

SequenceDistribution exhaustive_sequence_distribution(const SequenceModel& model, std::span<const TokenId> input,
                                                      int max_len) {
  check_space(model, max_len);
  model.vocab().check_tokens(input, "enumeration input");
  SequenceDistribution out;
  enumerate_outputs(model, input, max_len, [&](const TokenSeq& seq, const std::vector<double>& chain, bool done) {
    (done ? out.terminated : out.truncated)[seq] = product(chain);
  });
  return out;
}

std::map<TokenSeq, double> condition_on(const std::map<TokenSeq, double>& dist,
                                        const std::function<bool(const TokenSeq&)>& keep) {
  std::map<TokenSeq, double> out;
  double z = 0.0;
  for (const auto& [seq, prob] : dist) {
    if (keep(seq)) {
      out.emplace(seq, prob);
      z += prob;
    }
  }
  if (!(z > 0.0)) throw ZeroOriginalMass("condition_on: no mass satisfies the condition");
  for (auto& [seq, prob] : out) prob /= z;
  return out;
}

double total_variation(const std::map<TokenSeq, double>& a, const std::map<TokenSeq, double>& b) {
  double total = 0.0;
  for (const auto& [seq, prob] : a) {
    const auto it = b.find(seq);
    total += std::abs(prob - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [seq, prob] : b) {
    if (!a.contains(seq)) total += std::abs(prob);
  }
  return 0.5 * total;
}

void RewardSpec::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("reward spec: beta must be positive");
  if (!reward) throw InvalidArgument("reward spec: reward function is empty");
}

double RewardSpec::total(std::span<const TokenId> seq) const {
  double sum = 0.0;
  for (std::size_t t = 1; t <= seq.size(); ++t) {
    const double r = reward(seq.first(t));
    if (!std::isfinite(r)) throw InvalidArgument("reward spec: reward is not finite");
    sum += r;
  }
  return sum;
}

EquivalenceResult token_rl_equivalence_check(const SequenceModel& p_theta, const SequenceModel& p_o,
                                             const RewardSpec& rewards, std::span<const TokenId> input, int max_len) {
  rewards.validate();
  check_space(p_theta, max_len);
  if (p_theta.vocab() != p_o.vocab()) throw InvalidArgument("equivalence check: vocabularies differ");

  // Left side: per-token log ratios weighted by the policy's sequence probability.
  double lhs = 0.0;
  enumerate_outputs(p_theta, input, max_len, [&](const TokenSeq& seq, const std::vector<double>& chain, bool) {
    const std::vector<double> original = chained_conditionals(p_o, input, seq);
    double inner = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (!(original[t] > 0.0)) throw ZeroOriginalMass("equivalence check: p_o is zero where p_theta is not");
      const double r = rewards.reward(std::span<const TokenId>(seq.data(), t + 1));
      inner += -r / rewards.beta + std::log(chain[t]) - std::log(original[t]);
    }
    lhs += product(chain) * inner;
  });

  // Right side: whole-sequence probabilities of the tilted original.
  std::map<TokenSeq, double> tilted;
  double z = 0.0;
  enumerate_outputs(p_o, input, max_len, [&](const TokenSeq& seq, const std::vector<double>& chain, bool) {
    const double weight = product(chain) * std::exp(rewards.total(seq) / rewards.beta);
    tilted[seq] = weight;
    z += weight;
  });
  if (!(z > 0.0) || !std::isfinite(z)) throw ZeroOriginalMass("equivalence check: normalizer is not positive");

  double kl = 0.0;
  enumerate_outputs(p_theta, input, max_len, [&](const TokenSeq& seq, const std::vector<double>&, bool) {
    const double q = product(chained_conditionals(p_theta, input, seq));
    const auto it = tilted.find(seq);
    if (it == tilted.end() || !(it->second > 0.0)) {
      throw ZeroOriginalMass("equivalence check: p_o is zero where p_theta is not");
    }
    kl += q * (std::log(q) - std::log(it->second / z));
  });

  EquivalenceResult result;
  result.lhs = lhs;
  result.kl = kl;
  result.log_z = std::log(z);
  result.rhs = kl - result.log_z;
  result.difference = std::abs(result.lhs - result.rhs);
  return result;
}

TabularModel exponentiated_reward_tilt(const SequenceModel& p_o, const RewardSpec& rewards,
                                       std::span<const TokenId> input, int max_len) {
  rewards.validate();
  check_space(p_o, max_len);
  const Vocab& vocab = p_o.vocab();
  TabularModel out(vocab, max_len);

  // value(prefix) = sum over completions of p_o(completion | prefix) exp(sum r / beta).
  TokenSeq prefix;
  std::function<double()> value = [&]() -> double {
    const Eigen::VectorXd p = softmax(p_o.next_logits(input, prefix));
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(p.size());
    for (Eigen::Index x = 0; x < p.size(); ++x) {
      if (p[x] <= 0.0) continue;
      prefix.push_back(static_cast<TokenId>(x));
      double w = p[x] * std::exp(rewards.reward(prefix) / rewards.beta);
      const bool done = x == vocab.eos || static_cast<int>(prefix.size()) == max_len;
      if (!done) w *= value();
      prefix.pop_back();
      weights[x] = w;
    }
    const double total = weights.sum();
    if (!(total > 0.0)) throw ZeroOriginalMass("reward tilt: prefix has no mass");
    out.set_conditional(out.key_for(input, prefix), TokenDistribution(weights / total));
    return total;
  };
  value();
  return out;
}

}  // namespace tnt
