#include "tnt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, Eigen::Index n) : kind_(kind), lr_(lr) {
    if (kind_ == OptimizerKind::Adam) {
      m_ = Eigen::VectorXd::Zero(n);
      v_ = Eigen::VectorXd::Zero(n);
    }
  }

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (kind_ == OptimizerKind::GradientDescent) {
      params -= lr_ * grad;
      return;
    }
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind_;
  double lr_;
  int t_ = 0;
  Eigen::VectorXd m_, v_;
};

using Conditionals = std::vector<std::vector<TokenDistribution>>;

Conditionals conditionals_of(const SequenceModel& model, const std::vector<AnnotatedSequence>& set) {
  Conditionals out;
  out.reserve(set.size());
  for (const auto& seq : set) out.push_back(forward_all(model, seq.input, seq.output));
  return out;
}

double mean_loss(const SequenceModel& model, const Conditionals& original, const std::vector<AnnotatedSequence>& set,
                 const ObjectiveConfig& objective) {
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    total += sequence_loss(model.logits(set[i].input, set[i].output), original[i], set[i], objective).loss;
  }
  return total / static_cast<double>(set.size());
}

}  // namespace

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd" || name == "gd") return OptimizerKind::GradientDescent;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (steps < 0) throw InvalidArgument("train: steps must be >= 0");
  if (eval_every < 1 || (steps > 0 && eval_every > steps)) {
    throw InvalidArgument("train: eval_every must lie in [1, steps]");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("train: learning_rate must be nonnegative");
  }
  objective.validate();
}

double validation_loss(const SequenceModel& model, const SequenceModel& original,
                       const std::vector<AnnotatedSequence>& val_set, const ObjectiveConfig& objective) {
  if (val_set.empty()) throw EmptyDataset("validation set is empty");
  return mean_loss(model, conditionals_of(original, val_set), val_set, objective);
}

TrainResult train(const SequenceModel& original, const std::vector<AnnotatedSequence>& train_set,
                  const std::vector<AnnotatedSequence>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw EmptyDataset("training set is empty");
  if (val_set.empty()) throw EmptyDataset("validation set is empty");
  for (const auto& seq : train_set) seq.validate(original.vocab());
  for (const auto& seq : val_set) seq.validate(original.vocab());

  std::unique_ptr<SequenceModel> current = original.clone();
  for (const auto& seq : train_set) current->prepare(seq.input, seq.output);
  for (const auto& seq : val_set) current->prepare(seq.input, seq.output);

  // The original is frozen, so its conditionals are computed once.
  const Conditionals original_train = conditionals_of(original, train_set);
  const Conditionals original_val = conditionals_of(original, val_set);

  TrainResult result;
  Eigen::VectorXd params = current->parameters();
  Eigen::VectorXd best_params = params;
  result.best_val_loss = mean_loss(*current, original_val, val_set, cfg.objective);
  result.log.push_back({0, std::nullopt, result.best_val_loss, true});

  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, params.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  double interval_loss = 0.0;
  int interval_batches = 0;
  Eigen::VectorXd grad(params.size());

  for (int step = 1; step <= cfg.steps; ++step) {
    grad.setZero();
    double batch_loss = 0.0;
    try {
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const std::size_t i = order[cursor++];
        const AnnotatedSequence& seq = train_set[i];
        int skipped = 0;
        const ParameterGradient pg =
            gradients(*current, seq.input, seq.output, [&](const Eigen::MatrixXd& logits) {
              SequenceLoss s = sequence_loss(logits, original_train[i], seq, cfg.objective);
              skipped = s.skipped_positions;
              return LossGradient{s.loss, std::move(s.dlogits)};
            });
        result.skipped_positions += skipped;
        batch_loss += pg.loss;
        grad += pg.grad;
      }
    } catch (const NonFiniteLoss& e) {
      result.aborted = true;
      result.abort_reason = "step " + std::to_string(step) + ": " + e.what();
      break;
    }

    optimizer.step(params, grad);
    current->set_parameters(params);
    interval_loss += batch_loss;
    ++interval_batches;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double val = mean_loss(*current, original_val, val_set, cfg.objective);
      if (!std::isfinite(val)) {
        result.aborted = true;
        result.abort_reason = "step " + std::to_string(step) + ": validation loss is not finite";
        break;
      }
      const bool improved = val < result.best_val_loss;
      if (improved) {
        result.best_val_loss = val;
        result.best_step = step;
        best_params = params;
      }
      result.log.push_back({step, interval_loss / interval_batches, val, improved});
      interval_loss = 0.0;
      interval_batches = 0;
    }
  }

  if (result.skipped_positions > 0) {
    std::clog << "[warn] " << result.skipped_positions
              << " position evaluations skipped: every supported token was negative\n";
  }
  current->set_parameters(best_params);
  result.model = std::move(current);
  return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRecord>& log) {
  for (const auto& r : log) {
    nlohmann::json j;
    j["step"] = r.step;
    j["train_loss"] = r.train_loss ? nlohmann::json(*r.train_loss) : nlohmann::json(nullptr);
    j["val_loss"] = r.val_loss;
    j["checkpointed"] = r.checkpointed;
    out << j.dump() << '\n';
  }
}

}  // namespace tnt
