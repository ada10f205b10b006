#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tnt/distributions.hpp"
#include "tnt/model.hpp"
#include "tnt/objective.hpp"
#include "tnt/trainer.hpp"

namespace tnt {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

using ProjectionFn = std::function<TokenDistribution(const TokenDistribution&, const NegativeSet&)>;

inline TokenDistribution default_projection(const TokenDistribution& p, const NegativeSet& neg) {
  return project_out_negatives(p, neg);
}

/// Max l-inf distance between `projection` and the lattice oracle (grid 200)
/// over random instances with V in {3, 4, 5}.
CheckResult check_projection_exactness(std::uint64_t seed, int trials = 500,
                                       const ProjectionFn& projection = default_projection);

/// Max deviation among project(project(p,A),B), project(p,A u B) and project(project(p,B),A).
CheckResult check_commutativity(std::uint64_t seed, int trials = 1000,
                                const ProjectionFn& projection = default_projection);

/// Max per-component relative error |a - n| / max(|a|, |n|, 1e-4) between
/// analytic and central-difference (step 1e-5) gradients on random
/// TinyNeuralModel instances, for every method.
CheckResult check_gradients(std::uint64_t seed, int instances_per_method = 50);

/// Exhaustively enumerable task: V = 6 (three content ids, id 5 negative),
/// outputs of at most four tokens including EOS, one fixed input, and a
/// full-prefix tabular original. Every position of every output is
/// annotated with {5}.
struct TinyTask {
  Vocab vocab;
  TokenSeq input;
  NegativeSet negatives;
  int max_len = 4;
  TabularModel original;
  std::vector<AnnotatedSequence> data;
};

TinyTask make_tiny_task(std::uint64_t seed);
TrainConfig tiny_task_train_config();
TrainResult train_tiny_task(const TinyTask& task);

/// Max over training contexts of KL(target || trained conditional).
CheckResult check_token_convergence(const TinyTask& task, const SequenceModel& trained);

/// Total variation between the trained model's sequence distribution and
/// p^o(x) 1[x clean] / Z. `detail` also reports the gap of the exact
/// token-level projection, which bounds what any TNT model can reach.
CheckResult check_sequence_optimum(const TinyTask& task, const SequenceModel& trained);

/// Max |lhs - rhs| of the reward identity over random enumerable instances.
CheckResult check_rl_equivalence(std::uint64_t seed, int instances = 100);

/// TV between the beta = 0.01 reward tilt and sequence-level conditioning.
CheckResult check_small_beta_tilt(std::uint64_t seed, int instances = 20);

/// NL and UL position losses coincide on pairs with equal negative mass; TNT losses differ.
CheckResult check_baseline_blindness();

std::vector<CheckResult> run_verification(std::uint64_t seed);
void print_check_table(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace tnt
