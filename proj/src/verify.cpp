#include "tnt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>

#include "tnt/errors.hpp"
#include "tnt/oracles.hpp"

namespace tnt {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Normalized exponential draws; each entry is zeroed with probability `sparsity`.
TokenDistribution random_distribution(std::mt19937_64& rng, int v, double sparsity = 0.0) {
  Eigen::VectorXd p(v);
  do {
    for (int i = 0; i < v; ++i) {
      p[i] = uniform(rng, 0.0, 1.0) < sparsity ? 0.0 : std::exponential_distribution<double>(1.0)(rng);
    }
  } while (!(p.sum() > 0.0));
  return TokenDistribution(Eigen::VectorXd(p / p.sum()));
}

NegativeSet random_subset(std::mt19937_64& rng, int v, int min_size, int max_size) {
  std::vector<TokenId> ids(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) ids[static_cast<std::size_t>(i)] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(uniform_int(rng, min_size, max_size)));
  return NegativeSet(std::move(ids));
}

double kept_mass(const TokenDistribution& p, const NegativeSet& neg) {
  double kept = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!neg.contains(static_cast<TokenId>(i))) kept += p[i];
  }
  return kept;
}

// KL(q || p); infinite when q puts mass where p has none.
double kl_to(const TokenDistribution& q, const TokenDistribution& p) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += q[i] * std::log(q[i] / p[i]);
  }
  return total;
}

CheckResult finish(std::string name, double measured, double tolerance, bool strict_less, std::string detail = {}) {
  const bool pass = strict_less ? measured < tolerance : measured <= tolerance;
  return {std::move(name), measured, tolerance, pass, std::move(detail)};
}

// Every output over the content ids of length < max_len, followed by EOS.
std::vector<TokenSeq> enumerate_outputs(const std::vector<TokenId>& content, TokenId eos, int max_len) {
  std::vector<TokenSeq> out;
  std::vector<TokenSeq> frontier{{}};
  for (int len = 0; len < max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& prefix : frontier) {
      TokenSeq done = prefix;
      done.push_back(eos);
      out.push_back(std::move(done));
      for (TokenId c : content) {
        TokenSeq longer = prefix;
        longer.push_back(c);
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

// Random strictly positive conditionals over {EOS} u content at every prefix
// of length < max_len; reserved non-EOS ids get probability zero.
TabularModel random_full_prefix_model(std::mt19937_64& rng, const Vocab& vocab, const std::vector<TokenId>& content,
                                      TokenSeq input, int max_len) {
  TabularModel model(vocab, max_len);
  std::vector<TokenSeq> frontier{{}};
  for (int len = 0; len < max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& prefix : frontier) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(vocab.size);
      p[vocab.eos] = uniform(rng, 0.2, 1.0);
      for (TokenId c : content) p[c] = uniform(rng, 0.2, 1.0);
      model.set_conditional(model.key_for(input, prefix), TokenDistribution(Eigen::VectorXd(p / p.sum())));
      for (TokenId c : content) {
        TokenSeq longer = prefix;
        longer.push_back(c);
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }
  return model;
}

std::map<TokenSeq, double> complete_sequences(const SequenceDistribution& d) {
  std::map<TokenSeq, double> out = d.terminated;
  out.insert(d.truncated.begin(), d.truncated.end());
  return out;
}

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

}  // namespace

CheckResult check_projection_exactness(std::uint64_t seed, int trials, const ProjectionFn& projection) {
  constexpr int kGrid = 200;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  int beaten = 0;  // instances where the lattice point has lower KL than the candidate
  for (int trial = 0; trial < trials; ++trial) {
    const int v = uniform_int(rng, 3, 5);
    TokenDistribution p;
    NegativeSet neg;
    do {
      p = random_distribution(rng, v, 0.15);
      neg = random_subset(rng, v, 1, v - 1);
    } while (kept_mass(p, neg) < 1e-6);
    const TokenDistribution exact = projection(p, neg);
    const TokenDistribution oracle = brute_force_projection(p, neg, kGrid);
    worst = std::max(worst, (exact.probs() - oracle.probs()).cwiseAbs().maxCoeff());
    bool feasible = true;
    for (TokenId id : neg.ids()) feasible = feasible && exact[id] == 0.0;
    if (!feasible || kl_to(oracle, p) < kl_to(exact, p) - 1e-12) ++beaten;
  }
  return finish("projection matches lattice oracle (l-inf)", worst, 1.0 / kGrid, false,
                std::to_string(trials) + " instances, V in {3,4,5}, grid 200; lattice beats candidate on " +
                    std::to_string(beaten));
}

CheckResult check_commutativity(std::uint64_t seed, int trials, const ProjectionFn& projection) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int v = uniform_int(rng, 3, 12);
    TokenDistribution p;
    NegativeSet a, b;
    do {
      p = random_distribution(rng, v, 0.1);
      a = random_subset(rng, v, 0, v / 2);
      b = random_subset(rng, v, 0, v / 2);
    } while (kept_mass(p, a.unite(b)) < 1e-6);
    const Eigen::VectorXd ab = projection(projection(p, a), b).probs();
    const Eigen::VectorXd ba = projection(projection(p, b), a).probs();
    const Eigen::VectorXd joint = projection(p, a.unite(b)).probs();
    worst = std::max({worst, (ab - joint).cwiseAbs().maxCoeff(), (ba - joint).cwiseAbs().maxCoeff()});
  }
  return finish("sequential projections commute with the union", worst, 1e-12, false,
                std::to_string(trials) + " random (p, A, B)");
}

CheckResult check_gradients(std::uint64_t seed, int instances_per_method) {
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-4;
  std::mt19937_64 rng(seed);
  const Vocab vocab{7, 0, 1, 2, {}};
  std::vector<Method> methods = update_methods();
  methods.push_back(Method::LL);

  double worst = 0.0;
  std::string worst_method;
  for (Method method : methods) {
    for (int instance = 0; instance < instances_per_method; ++instance) {
      const TinyNeuralConfig config{4, 6, 2, 1.0, rng()};
      TinyNeuralModel model(vocab, config);
      const TinyNeuralModel original(vocab, TinyNeuralConfig{4, 6, 2, 1.0, rng()});

      AnnotatedSequence seq;
      const int in_len = uniform_int(rng, 1, 3);
      for (int i = 0; i < in_len; ++i) seq.input.push_back(uniform_int(rng, 3, vocab.size - 1));
      const int out_len = uniform_int(rng, 2, 5);
      for (int t = 0; t < out_len; ++t) {
        seq.output.push_back(uniform_int(rng, 0, vocab.size - 1));
        if (uniform(rng, 0.0, 1.0) < 0.5) {
          NegativeSet neg = random_subset(rng, vocab.size, 1, 2);
          seq.annotations.push_back({t, std::move(neg)});
        }
      }
      ObjectiveConfig cfg;
      cfg.method = method;
      cfg.alpha = std::pow(10.0, uniform_int(rng, -1, 1));

      const auto conditionals = forward_all(original, seq.input, seq.output);
      const ParameterGradient analytic =
          gradients(model, seq.input, seq.output, make_logit_loss(conditionals, seq, cfg));
      const auto loss_at = [&](const Eigen::VectorXd& params) {
        model.set_parameters(params);
        return sequence_loss(model.logits(seq.input, seq.output), conditionals, seq, cfg).loss;
      };
      const Eigen::VectorXd base = model.parameters();
      Eigen::VectorXd shifted = base;
      for (Eigen::Index i = 0; i < base.size(); ++i) {
        shifted[i] = base[i] + kStep;
        const double up = loss_at(shifted);
        shifted[i] = base[i] - kStep;
        const double down = loss_at(shifted);
        shifted[i] = base[i];
        const double numeric = (up - down) / (2.0 * kStep);
        const double a = analytic.grad[i];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
        if (err > worst) {
          worst = err;
          worst_method = std::string(method_name(method));
        }
      }
      model.set_parameters(base);
    }
  }
  return finish("analytic gradients match central differences", worst, 1e-4, true,
                std::to_string(instances_per_method) + " instances x " + std::to_string(methods.size()) +
                    " methods; worst in " + worst_method);
}

TinyTask make_tiny_task(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Vocab vocab{6, 0, 1, 2, {}};
  const std::vector<TokenId> content{3, 4, 5};
  const TokenId negative = 5;
  const int max_len = 4;
  const TokenSeq input{3};

  TinyTask task{vocab, input, NegativeSet{negative}, max_len, TabularModel(vocab, max_len), {}};
  std::vector<TokenSeq> frontier{{}};
  for (int len = 0; len < max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& prefix : frontier) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(vocab.size);
      if (len + 1 == max_len) {
        p[vocab.eos] = 1.0;
      } else {
        p[vocab.eos] = uniform(rng, 0.5, 1.5);
        p[3] = uniform(rng, 0.5, 1.5);
        p[4] = uniform(rng, 0.5, 1.5);
        const double negative_mass = uniform(rng, 0.01, 0.03);
        p *= (1.0 - negative_mass) / p.sum();
        p[negative] = negative_mass;
      }
      task.original.set_conditional(task.original.key_for(input, prefix), TokenDistribution(p));
      for (TokenId c : content) {
        TokenSeq longer = prefix;
        longer.push_back(c);
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }

  for (auto& output : enumerate_outputs(content, vocab.eos, max_len)) {
    AnnotatedSequence seq{input, std::move(output), {}};
    for (std::size_t t = 0; t < seq.output.size(); ++t) seq.annotations.push_back({static_cast<int>(t), task.negatives});
    task.data.push_back(std::move(seq));
  }
  return task;
}

TrainConfig tiny_task_train_config() {
  TrainConfig cfg;
  cfg.batch_size = 40;
  cfg.steps = 2000;
  cfg.eval_every = 50;
  cfg.learning_rate = 0.05;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.seed = 7;
  cfg.objective.method = Method::TN_FF;
  cfg.objective.alpha = 1.0;
  cfg.objective.logit_penalty_coeff = 0.0;
  return cfg;
}

TrainResult train_tiny_task(const TinyTask& task) {
  return train(task.original, task.data, task.data, tiny_task_train_config());
}

CheckResult check_token_convergence(const TinyTask& task, const SequenceModel& trained) {
  double worst = 0.0;
  int contexts = 0;
  for (const auto& seq : task.data) {
    const auto original = forward_all(task.original, seq.input, seq.output);
    const Eigen::MatrixXd logits = trained.logits(seq.input, seq.output);
    for (std::size_t t = 0; t < seq.output.size(); ++t) {
      const TokenDistribution target = target_distribution(original[t], task.negatives);
      const auto col = static_cast<Eigen::Index>(t);
      worst = std::max(worst, forward_kl(target, log_softmax(logits.col(col))));
      ++contexts;
    }
  }
  return finish("finetuned tabular conditionals reach the projected targets (max KL)", worst, 1e-3, true,
                std::to_string(contexts) + " context visits");
}

CheckResult check_sequence_optimum(const TinyTask& task, const SequenceModel& trained) {
  const auto clean = [&](const TokenSeq& x) {
    return std::none_of(x.begin(), x.end(), [&](TokenId t) { return task.negatives.contains(t); });
  };
  const SequenceDistribution original = exhaustive_sequence_distribution(task.original, task.input, task.max_len);
  const auto target = condition_on(complete_sequences(original), clean);
  const double tv = total_variation(
      complete_sequences(exhaustive_sequence_distribution(trained, task.input, task.max_len)), target);

  // Exact token-level projection of every original conditional.
  TabularModel projected = task.original;
  for (const auto& [key, block] : task.original.contexts()) {
    const TokenDistribution p(softmax(task.original.scores(key)));
    projected.set_conditional(key, project_out_negatives(p, task.negatives));
  }
  const double floor_tv = total_variation(
      complete_sequences(exhaustive_sequence_distribution(projected, task.input, task.max_len)), target);
  return finish("finetuned sequence distribution vs conditioned original (TV)", tv, 0.02, true,
                format("exact token-level projection alone sits at TV %.4g", floor_tv));
}

CheckResult check_rl_equivalence(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  const Vocab vocab{5, 0, 1, 2, {}};
  const std::vector<TokenId> content{3, 4};
  const int max_len = 3;
  const TokenSeq input{3};
  double worst = 0.0;
  for (int instance = 0; instance < instances; ++instance) {
    const TabularModel p_theta = random_full_prefix_model(rng, vocab, content, input, max_len);
    const TabularModel p_o = random_full_prefix_model(rng, vocab, content, input, max_len);
    auto table = std::make_shared<std::map<TokenSeq, double>>();
    for (const auto& [seq, prob] : complete_sequences(exhaustive_sequence_distribution(p_o, input, max_len))) {
      for (std::size_t t = 1; t <= seq.size(); ++t) {
        TokenSeq prefix(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t));
        if (!table->contains(prefix)) (*table)[prefix] = uniform(rng, -1.0, 1.0);
      }
    }
    RewardSpec rewards;
    rewards.beta = instance == 0 ? 0.5 : uniform(rng, 0.2, 2.0);
    rewards.reward = [table](std::span<const TokenId> prefix) {
      return table->at(TokenSeq(prefix.begin(), prefix.end()));
    };
    worst = std::max(worst, token_rl_equivalence_check(p_theta, p_o, rewards, input, max_len).difference);
  }
  return finish("token-level reward objective equals KL to the tilt minus log Z", worst, 1e-8, true,
                std::to_string(instances) + " random instances, 3 live tokens, max_len 3");
}

CheckResult check_small_beta_tilt(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  const Vocab vocab{6, 0, 1, 2, {}};
  const std::vector<TokenId> content{3, 4, 5};
  const NegativeSet negatives{5};
  const int max_len = 4;
  const TokenSeq input{4};
  const auto clean = [&](std::span<const TokenId> x) {
    return std::none_of(x.begin(), x.end(), [&](TokenId t) { return negatives.contains(t); });
  };
  RewardSpec rewards;
  rewards.beta = 0.01;
  rewards.reward = [&](std::span<const TokenId> prefix) { return clean(prefix) ? 0.0 : -1.0; };

  double worst = 0.0;
  for (int instance = 0; instance < instances; ++instance) {
    const TabularModel p_o = random_full_prefix_model(rng, vocab, content, input, max_len);
    const TabularModel tilt = exponentiated_reward_tilt(p_o, rewards, input, max_len);
    const auto target = condition_on(complete_sequences(exhaustive_sequence_distribution(p_o, input, max_len)),
                                     [&](const TokenSeq& x) { return clean(x); });
    worst = std::max(
        worst, total_variation(complete_sequences(exhaustive_sequence_distribution(tilt, input, max_len)), target));
  }
  return finish("reward tilt at beta 0.01 matches conditioning (TV)", worst, 0.01, true,
                std::to_string(instances) + " random originals");
}

CheckResult check_baseline_blindness() {
  const Vocab vocab{7, 0, 1, 2, {}};
  const TokenDistribution original{0.125, 0.125, 0.125, 0.125, 0.25, 0.125, 0.125};
  const NegativeSet neg{4};
  // Same probability on the negative id, different spread elsewhere.
  const std::vector<std::pair<TokenDistribution, TokenDistribution>> pairs{
      {TokenDistribution{0.25, 0.125, 0.125, 0.125, 0.25, 0.0625, 0.0625},
       TokenDistribution{0.125, 0.125, 0.125, 0.125, 0.25, 0.125, 0.125}},
      {TokenDistribution{0.0625, 0.0625, 0.0625, 0.0625, 0.25, 0.25, 0.25},
       TokenDistribution{0.4375, 0.0625, 0.0625, 0.0625, 0.25, 0.0625, 0.0625}},
  };
  const AnnotatedSequence seq{{3}, {4}, {{0, neg}}};
  seq.validate(vocab);

  int violations = 0;
  int assertions = 0;
  for (const auto& [a, b] : pairs) {
    for (Method m : update_methods()) {
      ObjectiveConfig cfg;
      cfg.method = m;
      const double la = sequence_loss_value({a}, {original}, seq, cfg);
      const double lb = sequence_loss_value({b}, {original}, seq, cfg);
      const bool ok = is_targeted(m) ? la != lb : la == lb;
      violations += ok ? 0 : 1;
      ++assertions;
    }
  }
  return finish("NL/UL blind to dispersion, TNT losses not (violations)", violations, 0.0, false,
                std::to_string(assertions) + " exact assertions");
}

std::vector<CheckResult> run_verification(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_projection_exactness(seed));
  out.push_back(check_commutativity(seed + 1));
  out.push_back(check_gradients(seed + 2));
  const TinyTask task = make_tiny_task(seed + 3);
  const TrainResult trained = train_tiny_task(task);
  out.push_back(check_token_convergence(task, *trained.model));
  out.push_back(check_sequence_optimum(task, *trained.model));
  out.push_back(check_rl_equivalence(seed + 4));
  out.push_back(check_small_beta_tilt(seed + 5));
  out.push_back(check_baseline_blindness());
  return out;
}

void print_check_table(std::ostream& out, const std::vector<CheckResult>& results) {
  char line[256];
  std::snprintf(line, sizeof line, "%-70s %12s %12s  %s\n", "check", "measured", "tolerance", "result");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-70s %12.4g %12.4g  %s\n", r.name.c_str(), r.measured, r.tolerance,
                  r.pass ? "PASS" : "FAIL");
    out << line;
    if (!r.detail.empty()) out << "    " << r.detail << '\n';
  }
}

}  // namespace tnt
