#include "tnt/synthdata.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

std::mt19937_64 example_rng(std::uint64_t seed, std::uint32_t split, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), split, index};
  return std::mt19937_64(seq);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

template <typename T>
T pick(std::mt19937_64& rng, const std::vector<T>& items) {
  return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

std::vector<TokenId> sample_distinct(std::mt19937_64& rng, std::vector<TokenId> pool, int count) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

SequencePair make_example(const TaskSpec& spec, std::mt19937_64& rng) {
  const int n = std::uniform_int_distribution<int>(spec.min_len, spec.max_len)(rng);
  TokenSeq input = sample_distinct(rng, spec.plain_tokens(), n);
  if (bernoulli(rng, spec.repeat_rate)) {
    input.push_back(spec.repeat_token);
    input.push_back(spec.repeat_token);
  }
  if (bernoulli(rng, spec.qq_rate)) input.push_back(spec.qq_token);

  TokenSeq content;
  if (spec.kind == TaskKind::Lexicon) {
    if (bernoulli(rng, spec.corruption_rate)) input.push_back(pick(rng, spec.unwanted_ids));
    content = input;
  } else {
    const int entities = std::uniform_int_distribution<int>(1, 2)(rng);
    for (TokenId e : sample_distinct(rng, spec.unwanted_ids, entities)) input.push_back(e);
    content = input;
    if (bernoulli(rng, spec.corruption_rate)) {
      input.push_back(spec.cue_token);
      std::vector<TokenId> absent;
      for (TokenId e : spec.unwanted_ids) {
        if (std::find(input.begin(), input.end(), e) == input.end()) absent.push_back(e);
      }
      content.push_back(*std::min_element(absent.begin(), absent.end()));
    }
  }
  std::shuffle(input.begin(), input.end(), rng);
  std::sort(content.begin(), content.end());
  content.push_back(spec.vocab.eos);
  return {std::move(input), std::move(content)};
}

}  // namespace

std::string_view task_kind_name(TaskKind k) { return k == TaskKind::Lexicon ? "lexicon" : "entity-copy"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "lexicon") return TaskKind::Lexicon;
  if (name == "entity-copy") return TaskKind::EntityCopy;
  throw InvalidSpec("unknown task kind '" + std::string(name) + "'");
}

bool TaskSpec::is_unwanted(TokenId id) const {
  return std::find(unwanted_ids.begin(), unwanted_ids.end(), id) != unwanted_ids.end();
}

std::vector<TokenId> TaskSpec::plain_tokens() const {
  std::vector<TokenId> out;
  for (TokenId id = 0; id < vocab.size; ++id) {
    if (vocab.is_reserved(id) || is_unwanted(id) || id == repeat_token || id == qq_token) continue;
    if (kind == TaskKind::EntityCopy && id == cue_token) continue;
    out.push_back(id);
  }
  return out;
}

void TaskSpec::validate() const {
  try {
    vocab.validate();
  } catch (const Error& e) {
    throw InvalidSpec(e.what());
  }
  if (unwanted_ids.empty()) throw InvalidSpec("task: unwanted id set is empty");
  std::vector<TokenId> special{repeat_token, qq_token};
  if (kind == TaskKind::EntityCopy) special.push_back(cue_token);
  for (TokenId id : special) {
    if (!vocab.contains(id) || vocab.is_reserved(id)) throw InvalidSpec("task: special token outside content range");
  }
  for (TokenId id : unwanted_ids) {
    if (!vocab.contains(id) || vocab.is_reserved(id)) {
      throw InvalidSpec("task: unwanted ids must be non-reserved vocabulary ids");
    }
    if (std::find(special.begin(), special.end(), id) != special.end()) {
      throw InvalidSpec("task: unwanted ids must differ from the repeat, qq and cue tokens");
    }
  }
  if (repeat_token == qq_token || (kind == TaskKind::EntityCopy && (cue_token == repeat_token || cue_token == qq_token))) {
    throw InvalidSpec("task: repeat, qq and cue tokens must be distinct");
  }
  for (TokenId id = 0; id < vocab.size; ++id) {
    if (!vocab.is_reserved(id) && id > qq_token) throw InvalidSpec("task: qq token must be the highest content id");
  }
  if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) throw InvalidSpec("task: corruption_rate outside [0,1]");
  if (!(repeat_rate >= 0.0 && repeat_rate <= 1.0) || !(qq_rate >= 0.0 && qq_rate <= 1.0)) {
    throw InvalidSpec("task: rates must lie in [0,1]");
  }
  if (min_len < 1 || max_len < min_len) throw InvalidSpec("task: need 1 <= min_len <= max_len");
  if (static_cast<int>(plain_tokens().size()) < max_len) throw InvalidSpec("task: not enough plain tokens for max_len");
  if (kind == TaskKind::EntityCopy && unwanted_ids.size() < 3) {
    throw InvalidSpec("task: entity-copy needs at least 3 entity ids");
  }
  if (train_size < 0 || val_size < 0 || test_size < 0) throw InvalidSpec("task: split sizes must be >= 0");
}

TaskSpec TaskSpec::default_lexicon() {
  TaskSpec s;
  s.kind = TaskKind::Lexicon;
  s.vocab = Vocab{32, 0, 1, 2, {}};
  s.unwanted_ids = {6, 9, 12, 15, 18, 21, 24, 27};
  s.repeat_token = 3;
  s.qq_token = 31;
  return s;
}

TaskSpec TaskSpec::default_entity_copy() {
  TaskSpec s;
  s.kind = TaskKind::EntityCopy;
  s.vocab = Vocab{32, 0, 1, 2, {}};
  s.unwanted_ids = {5, 8, 11, 14, 17, 20, 23, 26};
  s.repeat_token = 3;
  s.cue_token = 4;
  s.qq_token = 31;
  return s;
}

CorpusSplits generate_corpus(const TaskSpec& spec) {
  spec.validate();
  CorpusSplits out;
  const std::array<std::pair<Corpus*, int>, 3> splits{{{&out.train, spec.train_size},
                                                        {&out.val, spec.val_size},
                                                        {&out.test, spec.test_size}}};
  const std::array<const char*, 3> names{"train", "val", "test"};
  for (std::uint32_t s = 0; s < splits.size(); ++s) {
    Corpus& corpus = *splits[s].first;
    corpus.split = names[s];
    corpus.pairs.reserve(static_cast<std::size_t>(splits[s].second));
    for (int i = 0; i < splits[s].second; ++i) {
      auto rng = example_rng(spec.seed, s, static_cast<std::uint32_t>(i));
      corpus.pairs.push_back(make_example(spec, rng));
    }
  }
  return out;
}

std::vector<TokenAnnotation> annotate(std::span<const TokenId> input, std::span<const TokenId> output,
                                      const TaskSpec& spec) {
  std::vector<TokenAnnotation> out;
  for (std::size_t t = 0; t < output.size(); ++t) {
    const TokenId tok = output[t];
    if (!spec.is_unwanted(tok)) continue;
    if (spec.kind == TaskKind::EntityCopy && std::find(input.begin(), input.end(), tok) != input.end()) continue;
    out.push_back({static_cast<int>(t), NegativeSet{tok}});
  }
  return out;
}

std::vector<AnnotatedSequence> build_update_dataset(const SequenceModel& model, const Corpus& inputs,
                                                    const TaskSpec& spec) {
  std::vector<AnnotatedSequence> out;
  out.reserve(inputs.pairs.size());
  for (const auto& pair : inputs.pairs) {
    TokenSeq generation = greedy_decode(model, pair.input, spec.max_output_len());
    auto annotations = annotate(pair.input, generation, spec);
    out.push_back({pair.input, std::move(generation), std::move(annotations)});
  }
  return out;
}

std::vector<AnnotatedSequence> annotate_corpus(const Corpus& corpus, const TaskSpec& spec) {
  std::vector<AnnotatedSequence> out;
  out.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) {
    out.push_back({pair.input, pair.output, annotate(pair.input, pair.output, spec)});
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const AnnotatedSequence& seq) {
  nlohmann::json neg = nlohmann::json::array();
  for (const auto& a : seq.annotations) neg.push_back(nlohmann::json::array({a.position, a.negative_ids.ids()}));
  return {{"input", seq.input}, {"output", seq.output}, {"neg", std::move(neg)}};
}

AnnotatedSequence annotated_from_json(const nlohmann::json& j) {
  AnnotatedSequence seq;
  seq.input = j.at("input").get<TokenSeq>();
  seq.output = j.at("output").get<TokenSeq>();
  if (j.contains("neg")) {
    for (const auto& entry : j.at("neg")) {
      seq.annotations.push_back({entry.at(0).get<int>(), NegativeSet(entry.at(1).get<std::vector<TokenId>>())});
    }
  }
  return seq;
}

void write_jsonl(std::ostream& out, const std::vector<AnnotatedSequence>& data) {
  for (const auto& seq : data) out << to_json(seq).dump() << '\n';
}

std::vector<AnnotatedSequence> read_jsonl(std::istream& in) {
  std::vector<AnnotatedSequence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(annotated_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl_file(const std::filesystem::path& path, const std::vector<AnnotatedSequence>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_jsonl(out, data);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<AnnotatedSequence> read_jsonl_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_jsonl(in);
}

nlohmann::json task_to_json(const TaskSpec& spec) {
  return {{"kind", task_kind_name(spec.kind)},
          {"vocab", vocab_to_json(spec.vocab)},
          {"unwanted_ids", spec.unwanted_ids},
          {"repeat_token", spec.repeat_token},
          {"qq_token", spec.qq_token},
          {"cue_token", spec.cue_token},
          {"min_len", spec.min_len},
          {"max_len", spec.max_len},
          {"repeat_rate", spec.repeat_rate},
          {"qq_rate", spec.qq_rate},
          {"corruption_rate", spec.corruption_rate},
          {"train_size", spec.train_size},
          {"val_size", spec.val_size},
          {"test_size", spec.test_size},
          {"seed", spec.seed}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  const TaskKind kind = parse_task_kind(j.value("kind", std::string("lexicon")));
  TaskSpec s = kind == TaskKind::Lexicon ? TaskSpec::default_lexicon() : TaskSpec::default_entity_copy();
  try {
    if (j.contains("vocab")) s.vocab = vocab_from_json(j.at("vocab"));
    s.unwanted_ids = j.value("unwanted_ids", s.unwanted_ids);
    s.repeat_token = j.value("repeat_token", s.repeat_token);
    s.qq_token = j.value("qq_token", s.qq_token);
    s.cue_token = j.value("cue_token", s.cue_token);
    s.min_len = j.value("min_len", s.min_len);
    s.max_len = j.value("max_len", s.max_len);
    s.repeat_rate = j.value("repeat_rate", s.repeat_rate);
    s.qq_rate = j.value("qq_rate", s.qq_rate);
    s.corruption_rate = j.value("corruption_rate", s.corruption_rate);
    s.train_size = j.value("train_size", s.train_size);
    s.val_size = j.value("val_size", s.val_size);
    s.test_size = j.value("test_size", s.test_size);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpec(std::string("task config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidSpec(std::string("task config: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace tnt
