#pragma once

#include <functional>
#include <map>
#include <span>

#include "tnt/distributions.hpp"
#include "tnt/model.hpp"

namespace tnt {

/// Minimizes KL(q || p) over the barycentric lattice {k / grid} restricted to
/// q_i = 0 for i in `neg`, by exhaustive enumeration. Requires V <= 5 and
/// grid <= 200. Throws InfeasibleConstraint when no kept id carries mass.
TokenDistribution brute_force_projection(const TokenDistribution& p, const NegativeSet& neg, int grid);

struct SequenceDistribution {
  std::map<TokenSeq, double> terminated;  // EOS-terminated sequences (EOS included)
  std::map<TokenSeq, double> truncated;   // length max_len without EOS
  double unterminated_mass() const;
  double terminated_mass() const;
};

/// Chains next-token conditionals over every output of length <= max_len.
/// Zero-probability branches are pruned. Throws SpaceTooLarge when
/// V^max_len exceeds 10^6.
SequenceDistribution exhaustive_sequence_distribution(const SequenceModel& model, std::span<const TokenId> input,
                                                      int max_len);

/// p(x) * 1[keep(x)] renormalized over the terminated sequences.
std::map<TokenSeq, double> condition_on(const std::map<TokenSeq, double>& dist,
                                        const std::function<bool(const TokenSeq&)>& keep);

double total_variation(const std::map<TokenSeq, double>& a, const std::map<TokenSeq, double>& b);

/// Token-level rewards r_t(x_{<=t}) and temperature beta.
struct RewardSpec {
  double beta = 1.0;
  std::function<double(std::span<const TokenId> prefix)> reward;  // prefix includes x_t

  void validate() const;
  double total(std::span<const TokenId> seq) const;  // sum over t of r_t(x_{<=t})
};

/// Both sides of the token-level KL-regularized reward identity on an
/// enumerable space, where complete sequences either end in EOS or reach
/// max_len:
///   lhs = E_{x~p_theta}[ sum_t (-r_t/beta + log p_theta(x_t|.) - log p_o(x_t|.)) ]
///   rhs = KL(p_theta || p_new) - log Z,  p_new = p_o exp(sum_t r_t/beta) / Z.
/// lhs is accumulated from per-token log ratios; rhs from whole-sequence
/// probabilities. Throws ZeroOriginalMass if p_o vanishes where p_theta does not.
struct EquivalenceResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double log_z = 0.0;
  double kl = 0.0;
  double difference = 0.0;
};

EquivalenceResult token_rl_equivalence_check(const SequenceModel& p_theta, const SequenceModel& p_o,
                                             const RewardSpec& rewards, std::span<const TokenId> input, int max_len);

/// Tabular model (order max_len) whose sequence distribution is the
/// exponentiated-reward tilt p_o(x) exp(sum_t r_t / beta) / Z, with complete
/// sequences defined as in token_rl_equivalence_check.
TabularModel exponentiated_reward_tilt(const SequenceModel& p_o, const RewardSpec& rewards,
                                       std::span<const TokenId> input, int max_len);

}  // namespace tnt
