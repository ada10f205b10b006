#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tnt/model.hpp"
#include "tnt/objective.hpp"
#include "tnt/vocab.hpp"

namespace tnt {

enum class TaskKind { EntityCopy, Lexicon };

std::string_view task_kind_name(TaskKind k);
TaskKind parse_task_kind(std::string_view name);

/// Synthetic seq2seq task. Outputs are the input's content tokens in
/// ascending id order, followed by EOS.
///
/// Lexicon: with probability corruption_rate the input carries one forbidden
/// id, which the correct output copies; outputs are annotated wherever a
/// forbidden id appears. EntityCopy: every input names one or two entities;
/// with probability corruption_rate the input also carries the cue token and
/// the output then mentions the smallest entity absent from the input.
/// Output entities absent from the input are annotated.
struct TaskSpec {
  TaskKind kind = TaskKind::Lexicon;
  Vocab vocab;
  std::vector<TokenId> unwanted_ids;  // entity ids (EntityCopy) or forbidden ids (Lexicon)
  TokenId repeat_token = 3;           // filler that may occur twice in an input
  TokenId qq_token = 31;              // the "??" analog; highest content id so it sorts last
  TokenId cue_token = 4;              // EntityCopy only
  int min_len = 3;                    // content tokens drawn per input, before corruption
  int max_len = 5;
  double repeat_rate = 0.2;
  double qq_rate = 0.15;
  double corruption_rate = 0.3;
  int train_size = 5000;
  int val_size = 500;
  int test_size = 500;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_unwanted(TokenId id) const;
  /// Upper bound on output length, EOS included: plain tokens, two repeats,
  /// qq, then one forbidden id (Lexicon) or up to three entities (EntityCopy).
  int max_output_len() const { return max_len + 3 + (kind == TaskKind::Lexicon ? 1 : 3) + 1; }
  /// Tokens inputs draw from besides the unwanted, cue, repeat and qq ids.
  std::vector<TokenId> plain_tokens() const;

  static TaskSpec default_lexicon();
  static TaskSpec default_entity_copy();
};

struct SequencePair {
  TokenSeq input;
  TokenSeq output;
  bool operator==(const SequencePair&) const = default;
};

struct Corpus {
  std::string split;
  std::vector<SequencePair> pairs;
};

struct CorpusSplits {
  Corpus train, val, test;
};

CorpusSplits generate_corpus(const TaskSpec& spec);

/// Marks every output position whose token is unwanted in context.
std::vector<TokenAnnotation> annotate(std::span<const TokenId> input, std::span<const TokenId> output,
                                      const TaskSpec& spec);

/// Greedy-decodes every input and annotates the model's own generations.
std::vector<AnnotatedSequence> build_update_dataset(const SequenceModel& model, const Corpus& inputs,
                                                    const TaskSpec& spec);

/// Gold corpus pairs with their rule-based annotations.
std::vector<AnnotatedSequence> annotate_corpus(const Corpus& corpus, const TaskSpec& spec);

// ---------------------------------------------------------------------------
// Files: one JSON object per line,
//   {"input": [ids], "output": [ids], "neg": [[position, [ids]], ...]}

nlohmann::json to_json(const AnnotatedSequence& seq);
AnnotatedSequence annotated_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, const std::vector<AnnotatedSequence>& data);
std::vector<AnnotatedSequence> read_jsonl(std::istream& in);
void write_jsonl_file(const std::filesystem::path& path, const std::vector<AnnotatedSequence>& data);
std::vector<AnnotatedSequence> read_jsonl_file(const std::filesystem::path& path);

nlohmann::json task_to_json(const TaskSpec& spec);
TaskSpec task_from_json(const nlohmann::json& j);

}  // namespace tnt
