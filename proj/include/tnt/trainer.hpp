#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "tnt/model.hpp"
#include "tnt/objective.hpp"

namespace tnt {

enum class OptimizerKind { GradientDescent, Adam };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  int batch_size = 32;
  int steps = 20000;
  int eval_every = 200;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;

  void validate() const;
};

struct TrainLogRecord {
  int step = 0;
  std::optional<double> train_loss;  // mean batch loss since the previous record
  double val_loss = 0.0;
  bool checkpointed = false;

  bool operator==(const TrainLogRecord&) const = default;
};

struct TrainResult {
  std::unique_ptr<SequenceModel> model;  // best validation snapshot
  std::vector<TrainLogRecord> log;
  double best_val_loss = 0.0;
  int best_step = 0;
  int skipped_positions = 0;
  bool aborted = false;  // a non-finite loss stopped training early
  std::string abort_reason;
};

/// Mean per-sequence objective over `val_set`, in order.
double validation_loss(const SequenceModel& model, const SequenceModel& original,
                       const std::vector<AnnotatedSequence>& val_set, const ObjectiveConfig& objective);

/// Finetunes a copy of `original`; `original` itself is never modified.
///
/// Batches are drawn sequentially from a per-epoch shuffle seeded by
/// cfg.seed. Validation runs at step 0, every eval_every steps and at the
/// final step; the best-scoring parameters are returned.
TrainResult train(const SequenceModel& original, const std::vector<AnnotatedSequence>& train_set,
                  const std::vector<AnnotatedSequence>& val_set, const TrainConfig& cfg);

/// One JSON object per line: {"step","train_loss","val_loss","checkpointed"}.
void write_train_log(std::ostream& out, const std::vector<TrainLogRecord>& log);

}  // namespace tnt
