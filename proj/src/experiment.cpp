#include "tnt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "tnt/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tnt {

namespace {

const std::array<std::string, 3> kSplits{"train", "val", "test"};

std::string format_g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string hex(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

json train_config_to_json(const TrainConfig& c, bool with_lr) {
  json j{{"batch_size", c.batch_size},
         {"steps", c.steps},
         {"eval_every", c.eval_every},
         {"optimizer", optimizer_name(c.optimizer)},
         {"smoothing_eps", c.objective.smoothing_eps},
         {"ul_clamp", c.objective.ul_clamp},
         {"logit_penalty_coeff", c.objective.logit_penalty_coeff}};
  if (with_lr) j["learning_rate"] = c.learning_rate;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.objective.smoothing_eps = j.value("smoothing_eps", c.objective.smoothing_eps);
  c.objective.ul_clamp = j.value("ul_clamp", c.objective.ul_clamp);
  c.objective.logit_penalty_coeff = j.value("logit_penalty_coeff", c.objective.logit_penalty_coeff);
  return c;
}

json report_to_json(const EvalReport& r) {
  return {{"method", r.method},   {"alpha", r.alpha},     {"split", r.split},
          {"bleu", r.bleu},       {"rouge_l", r.rouge_l}, {"seq_acc", r.seq_acc},
          {"unwanted_rate", r.unwanted_rate}, {"repeats", r.repeats}, {"random_qq", r.random_qq}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.split = j.at("split").get<std::string>();
  r.bleu = j.at("bleu").get<double>();
  r.rouge_l = j.at("rouge_l").get<double>();
  r.seq_acc = j.at("seq_acc").get<double>();
  r.unwanted_rate = j.at("unwanted_rate").get<double>();
  r.repeats = j.at("repeats").get<int>();
  r.random_qq = j.at("random_qq").get<int>();
  return r;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Stops handing out
// work once `stop` is set; rethrows the first exception.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, std::atomic<bool>& stop, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        stop.store(true);
      }
    }
  };
  const auto extra = static_cast<std::size_t>(std::max(0, std::min(jobs, static_cast<int>(n)) - 1));
  std::vector<std::thread> threads;
  threads.reserve(extra);
  for (std::size_t t = 0; t < extra; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<TokenSeq> inputs_of(const std::vector<AnnotatedSequence>& data) {
  std::vector<TokenSeq> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.input);
  return out;
}

std::vector<TokenSeq> outputs_of(const std::vector<AnnotatedSequence>& data) {
  std::vector<TokenSeq> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.output);
  return out;
}

std::vector<TokenSeq> decode_all(const SequenceModel& model, const std::vector<TokenSeq>& inputs, int max_len) {
  std::vector<TokenSeq> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(greedy_decode(model, in, max_len));
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------

std::unique_ptr<SequenceModel> ModelSpec::build(const Vocab& vocab, std::uint64_t seed) const {
  if (kind == "tiny-neural") {
    TinyNeuralConfig c = neural;
    c.seed = seed;
    return std::make_unique<TinyNeuralModel>(vocab, c);
  }
  if (kind == "tabular") return std::make_unique<TabularModel>(vocab, tabular_order);
  throw ConfigError("model: unknown kind '" + kind + "'");
}

void ExperimentConfig::validate() const {
  try {
    task.validate();
    base_train.validate();
    TrainConfig probe = update_train;
    for (double lr : lr_grid) {
      probe.learning_rate = lr;
      probe.validate();
    }
    for (double a : alpha_grid) {
      probe.objective.alpha = a;
      probe.objective.validate();
    }
    (void)model.build(task.vocab, seed);
    (void)EvalReport{}.similarity(similarity_field);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!update_methods.empty() && (alpha_grid.empty() || lr_grid.empty())) {
    throw ConfigError("config: alpha_grid and lr_grid must be non-empty when update methods are given");
  }
  for (Method m : update_methods) {
    if (m == Method::LL) throw ConfigError("config: LL is the base objective, not an update method");
  }
  if (!(reduction_target > 0.0 && reduction_target < 1.0)) throw ConfigError("config: reduction_target in (0,1)");
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.base_train.objective.method = Method::LL;
  c.update_methods = tnt::update_methods();
  for (int e = -4; e <= 4; ++e) c.alpha_grid.push_back(std::pow(10.0, e));
  c.lr_grid = {1e-3, 1e-4, 1e-5, 1e-6};
  return c;
}

json config_to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (Method m : cfg.update_methods) methods.push_back(method_name(m));
  return {{"seed", cfg.seed},
          {"task", task_to_json(cfg.task)},
          {"model",
           {{"kind", cfg.model.kind},
            {"embedding_dim", cfg.model.neural.embedding_dim},
            {"hidden_dim", cfg.model.neural.hidden_dim},
            {"context_order", cfg.model.kind == "tabular" ? cfg.model.tabular_order : cfg.model.neural.context_order},
            {"init_scale", cfg.model.neural.init_scale}}},
          {"base_train", train_config_to_json(cfg.base_train, true)},
          {"update_train", train_config_to_json(cfg.update_train, false)},
          {"update_methods", methods},
          {"alpha_grid", cfg.alpha_grid},
          {"lr_grid", cfg.lr_grid},
          {"similarity_field", cfg.similarity_field},
          {"reduction_target", cfg.reduction_target}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = ExperimentConfig::defaults();
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    c.seed = j.value("seed", c.seed);
    c.task.seed = c.seed;
    if (j.contains("task")) {
      json task = j.at("task");
      if (!task.contains("seed")) task["seed"] = c.seed;
      c.task = task_from_json(task);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      c.model.kind = m.value("kind", c.model.kind);
      c.model.neural.embedding_dim = m.value("embedding_dim", c.model.neural.embedding_dim);
      c.model.neural.hidden_dim = m.value("hidden_dim", c.model.neural.hidden_dim);
      c.model.neural.init_scale = m.value("init_scale", c.model.neural.init_scale);
      const int order = m.value("context_order", c.model.kind == "tabular" ? c.model.tabular_order
                                                                           : c.model.neural.context_order);
      c.model.neural.context_order = order;
      c.model.tabular_order = order;
    }
    if (j.contains("base_train")) c.base_train = train_config_from_json(j.at("base_train"), c.base_train);
    if (j.contains("update_train")) c.update_train = train_config_from_json(j.at("update_train"), c.update_train);
    if (j.contains("update_methods")) {
      c.update_methods.clear();
      for (const auto& m : j.at("update_methods")) c.update_methods.push_back(parse_method(m.get<std::string>()));
    }
    c.alpha_grid = j.value("alpha_grid", c.alpha_grid);
    c.lr_grid = j.value("lr_grid", c.lr_grid);
    c.similarity_field = j.value("similarity_field", c.similarity_field);
    c.reduction_target = j.value("reduction_target", c.reduction_target);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.base_train.objective.method = Method::LL;
  c.base_train.seed = c.seed;
  c.update_train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string SweepCell::id() const {
  std::string name(method_name(method));
  std::replace(name.begin(), name.end(), '+', 'p');
  return name + "_a" + format_g(alpha) + "_lr" + format_g(learning_rate);
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

Run::Run(fs::path root, ExperimentConfig config, RunOptions options)
    : root_(std::move(root)), config_(std::move(config)), options_(options) {
  config_.validate();
  if (options_.jobs < 1) throw ConfigError("--jobs must be >= 1");
  const fs::path manifest = root_ / run_layout::kManifest;
  const fs::path snapshot = root_ / run_layout::kConfig;
  if (fs::exists(snapshot) && read_json_file(snapshot) != config_to_json(config_)) {
    throw ConfigError("run directory " + root_.string() + " holds a different config");
  }
  manifest_ = fs::exists(manifest) ? read_json_file(manifest)
                                   : json{{"stages", json::object()}, {"cells", json::object()},
                                          {"learning_rates", json::object()}};
  fs::create_directories(root_);
  write_json_file(snapshot, config_to_json(config_));
}

bool Run::stage_done(const std::string& stage) const {
  std::lock_guard lock(mutex_);
  return options_.resume && manifest_["stages"].value(stage, false);
}

void Run::mark_stage(const std::string& stage) {
  {
    std::lock_guard lock(mutex_);
    manifest_["stages"][stage] = true;
  }
  save_manifest();
}

void Run::save_manifest() const {
  std::lock_guard lock(mutex_);
  write_json_file(root_ / run_layout::kManifest, manifest_);
}

void Run::record_hashes(const std::vector<fs::path>& files) {
  const fs::path path = root_ / run_layout::kHashes;
  json hashes = fs::exists(path) ? read_json_file(path) : json::object();
  for (const auto& f : files) hashes[fs::relative(f, root_).generic_string()] = hex(file_hash(f));
  write_json_file(path, hashes);
}

void Run::log(const std::string& line) const {
  if (options_.log == nullptr) return;
  std::lock_guard lock(mutex_);
  *options_.log << line << std::endl;
}

std::unique_ptr<SequenceModel> Run::load_base() const {
  const fs::path path = root_ / run_layout::kBase / "checkpoint.json";
  if (!fs::exists(path)) throw IoError("missing base checkpoint " + path.string() + " (run train-base first)");
  return load_checkpoint(path);
}

std::vector<AnnotatedSequence> Run::load_update_split(const std::string& split) const {
  const fs::path path = root_ / run_layout::kUpdate / (split + ".jsonl");
  if (!fs::exists(path)) throw IoError("missing update dataset " + path.string() + " (run annotate first)");
  return read_jsonl_file(path);
}

void Run::gen_data() {
  if (stage_done("gen-data")) return;
  const CorpusSplits splits = generate_corpus(config_.task);
  std::vector<fs::path> written;
  for (const Corpus* corpus : {&splits.train, &splits.val, &splits.test}) {
    const fs::path path = root_ / run_layout::kData / (corpus->split + ".jsonl");
    fs::create_directories(path.parent_path());
    write_jsonl_file(path, annotate_corpus(*corpus, config_.task));
    written.push_back(path);
  }
  record_hashes(written);
  log("[gen-data] wrote " + std::to_string(splits.train.pairs.size()) + "/" +
      std::to_string(splits.val.pairs.size()) + "/" + std::to_string(splits.test.pairs.size()) + " pairs");
  mark_stage("gen-data");
}

void Run::train_base() {
  if (stage_done("train-base")) return;
  const auto train_set = read_jsonl_file(root_ / run_layout::kData / "train.jsonl");
  const auto val_set = read_jsonl_file(root_ / run_layout::kData / "val.jsonl");
  const auto start = std::chrono::steady_clock::now();
  const auto model = config_.model.build(config_.task.vocab, config_.seed);
  const TrainResult result = train(*model, train_set, val_set, config_.base_train);
  if (result.aborted) throw Error("base training aborted: " + result.abort_reason);

  const fs::path dir = root_ / run_layout::kBase;
  fs::create_directories(dir);
  save_checkpoint(*result.model, dir / "checkpoint.json");
  std::ostringstream log_text;
  write_train_log(log_text, result.log);
  write_text_atomic(dir / "train_log.jsonl", log_text.str());
  record_hashes({dir / "checkpoint.json"});
  char line[160];
  std::snprintf(line, sizeof line, "[train-base] best val loss %.6g at step %d (%.1fs)", result.best_val_loss,
                result.best_step, seconds_since(start));
  log(line);
  mark_stage("train-base");
}

void Run::generate() {
  if (stage_done("generate")) return;
  const auto base = load_base();
  std::vector<fs::path> written;
  for (const auto& split : kSplits) {
    const auto data = read_jsonl_file(root_ / run_layout::kData / (split + ".jsonl"));
    std::vector<AnnotatedSequence> out;
    out.reserve(data.size());
    for (const auto& d : data) out.push_back({d.input, greedy_decode(*base, d.input, config_.task.max_output_len()), {}});
    const fs::path path = root_ / run_layout::kGenerations / (split + ".jsonl");
    fs::create_directories(path.parent_path());
    write_jsonl_file(path, out);
    written.push_back(path);
  }
  record_hashes(written);
  log("[generate] greedy generations written for train/val/test inputs");
  mark_stage("generate");
}

void Run::annotate() {
  if (stage_done("annotate")) return;
  std::vector<fs::path> written;
  for (const auto& split : kSplits) {
    const fs::path source = root_ / run_layout::kGenerations / (split + ".jsonl");
    if (!fs::exists(source)) throw IoError("missing generations " + source.string() + " (run generate first)");
    auto data = read_jsonl_file(source);
    for (auto& d : data) d.annotations = tnt::annotate(d.input, d.output, config_.task);
    const fs::path path = root_ / run_layout::kUpdate / (split + ".jsonl");
    fs::create_directories(path.parent_path());
    write_jsonl_file(path, data);
    written.push_back(path);
    char line[120];
    std::snprintf(line, sizeof line, "[annotate] %s: unwanted rate %.2f%%", split.c_str(),
                  unwanted_rate(inputs_of(data), outputs_of(data), config_.task));
    log(line);
  }
  record_hashes(written);
  mark_stage("annotate");
}

void Run::train_cells(const std::vector<SweepCell>& cells, const SequenceModel& base,
                      const std::vector<AnnotatedSequence>& train_set,
                      const std::vector<AnnotatedSequence>& val_set) {
  std::atomic<bool> stop{false};
  bool interrupted = false;
  parallel_for(cells.size(), options_.jobs, stop, [&](std::size_t i) {
    const SweepCell& cell = cells[i];
    const std::string id = cell.id();
    const fs::path dir = root_ / run_layout::kCells / id;
    {
      std::lock_guard lock(mutex_);
      if (manifest_["cells"].contains(id) && fs::exists(dir / "checkpoint.json")) return;
    }
    const auto start = std::chrono::steady_clock::now();
    TrainConfig tc = config_.update_train;
    tc.learning_rate = cell.learning_rate;
    tc.objective.method = cell.method;
    tc.objective.alpha = cell.alpha;
    const TrainResult result = train(base, train_set, val_set, tc);

    fs::create_directories(dir);
    save_checkpoint(*result.model, dir / "checkpoint.json");
    std::ostringstream log_text;
    write_train_log(log_text, result.log);
    write_text_atomic(dir / "train_log.jsonl", log_text.str());

    json record{{"best_val_loss", result.best_val_loss},
                {"best_step", result.best_step},
                {"skipped_positions", result.skipped_positions},
                {"aborted", result.aborted}};
    if (result.aborted) record["abort_reason"] = result.abort_reason;
    {
      std::lock_guard lock(mutex_);
      manifest_["cells"][id] = record;
      ++cells_trained_;
      if (options_.stop_after_cells >= 0 && cells_trained_ >= options_.stop_after_cells) {
        interrupted = true;
        stop.store(true);
      }
    }
    save_manifest();
    char line[200];
    std::snprintf(line, sizeof line, "[finetune] %-28s best val %.6g at step %d%s (%.1fs)", id.c_str(),
                  result.best_val_loss, result.best_step, result.aborted ? " [aborted]" : "", seconds_since(start));
    log(line);
  });
  if (interrupted) throw Interrupted("stopped after " + std::to_string(cells_trained_) + " sweep cells");
}

void Run::finetune() {
  if (stage_done("finetune")) return;
  if (!options_.resume) {
    std::lock_guard lock(mutex_);
    manifest_["cells"] = json::object();
    manifest_["learning_rates"] = json::object();
  }
  if (config_.update_methods.empty()) {
    mark_stage("finetune");
    return;
  }
  const auto base = load_base();
  const auto train_set = load_update_split("train");
  const auto val_set = load_update_split("val");

  // Learning rate per method, chosen at alpha = 1 by best validation loss.
  std::vector<SweepCell> lr_cells;
  for (Method m : config_.update_methods) {
    for (double lr : config_.lr_grid) lr_cells.push_back({m, 1.0, lr});
  }
  if (config_.lr_grid.size() > 1) train_cells(lr_cells, *base, train_set, val_set);
  {
    std::lock_guard lock(mutex_);
    for (Method m : config_.update_methods) {
      double best_lr = config_.lr_grid.front();
      if (config_.lr_grid.size() > 1) {
        double best_loss = std::numeric_limits<double>::infinity();
        for (double lr : config_.lr_grid) {
          const double loss = manifest_["cells"][SweepCell{m, 1.0, lr}.id()]["best_val_loss"].get<double>();
          if (loss < best_loss) {
            best_loss = loss;
            best_lr = lr;
          }
        }
      }
      manifest_["learning_rates"][std::string(method_name(m))] = best_lr;
    }
  }
  save_manifest();
  train_cells(final_cells(), *base, train_set, val_set);
  mark_stage("finetune");
}

std::vector<SweepCell> Run::final_cells() const {
  std::vector<SweepCell> cells;
  std::lock_guard lock(mutex_);
  for (Method m : config_.update_methods) {
    const std::string name(method_name(m));
    if (!manifest_["learning_rates"].contains(name)) throw IoError("no learning rate chosen for " + name);
    const double lr = manifest_["learning_rates"][name].get<double>();
    for (double a : config_.alpha_grid) cells.push_back({m, a, lr});
  }
  return cells;
}

void Run::evaluate() {
  if (stage_done("eval")) return;
  const auto val_gen = load_update_split("val");
  const auto test_gen = load_update_split("test");
  const std::vector<TokenSeq> val_inputs = inputs_of(val_gen), test_inputs = inputs_of(test_gen);
  const std::vector<TokenSeq> val_refs = outputs_of(val_gen), test_refs = outputs_of(test_gen);
  const int max_len = config_.task.max_output_len();

  std::vector<EvalReport> reports;
  for (const auto& [split, inputs, refs] : {std::tuple{"val", &val_inputs, &val_refs},
                                            std::tuple{"test", &test_inputs, &test_refs}}) {
    EvalReport r = evaluate_generations(*inputs, *refs, *refs, config_.task);
    r.method = "original";
    r.alpha = 0.0;
    r.split = split;
    reports.push_back(r);
  }

  const std::vector<SweepCell> cells = config_.update_methods.empty() ? std::vector<SweepCell>{} : final_cells();
  std::vector<std::pair<EvalReport, EvalReport>> cell_reports(cells.size());
  std::atomic<bool> stop{false};
  parallel_for(cells.size(), options_.jobs, stop, [&](std::size_t i) {
    const SweepCell& cell = cells[i];
    const fs::path dir = root_ / run_layout::kCells / cell.id();
    const fs::path eval_path = dir / "eval.json";
    if (options_.resume && fs::exists(eval_path)) {
      const json j = read_json_file(eval_path);
      cell_reports[i] = {report_from_json(j.at("val")), report_from_json(j.at("test"))};
      return;
    }
    const auto model = load_checkpoint(dir / "checkpoint.json");
    auto score = [&](const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& refs, const char* split) {
      EvalReport r = evaluate_generations(inputs, decode_all(*model, inputs, max_len), refs, config_.task);
      r.method = std::string(method_name(cell.method));
      r.alpha = cell.alpha;
      r.split = split;
      return r;
    };
    cell_reports[i] = {score(val_inputs, val_refs, "val"), score(test_inputs, test_refs, "test")};
    write_json_file(eval_path, {{"val", report_to_json(cell_reports[i].first)},
                                {"test", report_to_json(cell_reports[i].second)}});
  });
  for (const auto& [val, test] : cell_reports) {
    reports.push_back(val);
    reports.push_back(test);
  }

  std::ostringstream csv;
  write_reports_csv(csv, reports);
  write_text_atomic(root_ / run_layout::kReports, csv.str());
  log("[eval] wrote " + std::to_string(reports.size()) + " report rows");
  mark_stage("eval");
}

void Run::curves() {
  if (stage_done("curves")) return;
  std::ifstream in(root_ / run_layout::kReports, std::ios::binary);
  if (!in) throw IoError("missing reports.csv (run eval first)");
  const std::vector<EvalReport> reports = read_reports_csv(in);

  std::vector<std::string> methods;
  std::map<std::string, std::vector<EvalReport>> val, test;
  const EvalReport* original_val = nullptr;
  const EvalReport* original_test = nullptr;
  for (const auto& r : reports) {
    if (r.method == "original") {
      (r.split == "val" ? original_val : original_test) = &r;
      continue;
    }
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    (r.split == "val" ? val : test)[r.method].push_back(r);
  }
  if (original_val == nullptr || original_test == nullptr) throw IoError("reports.csv lacks the original rows");

  const std::vector<double> grid = threshold_grid(original_test->unwanted_rate);
  std::vector<FrontierCurve> curves, targeted, baselines;
  std::vector<EvalReport> all_val, all_test;
  for (const auto& m : methods) {
    curves.push_back(frontier_curve(m, test[m], val[m], config_.similarity_field, grid));
    (is_targeted(parse_method(m)) ? targeted : baselines).push_back(curves.back());
    all_val.insert(all_val.end(), val[m].begin(), val[m].end());
    all_test.insert(all_test.end(), test[m].begin(), test[m].end());
  }
  if (!targeted.empty()) curves.push_back(composite_curve("composite:TNT", targeted));
  if (!baselines.empty()) curves.push_back(composite_curve("composite:baselines", baselines));
  json auc = json::object();
  for (const auto& c : curves) auc[c.label] = c.auc;

  std::ostringstream csv;
  write_curves_csv(csv, curves);
  write_text_atomic(root_ / run_layout::kCurves, csv.str());

  json table = json::array();
  for (const auto& r : select_at_reduction(all_test, all_val, original_val->unwanted_rate, config_.reduction_target)) {
    table.push_back(report_to_json(r));
  }
  json summary{{"similarity_field", config_.similarity_field},
               {"original", {{"val", report_to_json(*original_val)}, {"test", report_to_json(*original_test)}}},
               {"auc", auc},
               {"reduction_target", config_.reduction_target},
               {"at_reduction", table},
               {"learning_rates", manifest_["learning_rates"]}};
  write_json_file(root_ / run_layout::kSummary, summary);
  log("[curves] wrote " + std::to_string(curves.size()) + " curves");
  mark_stage("curves");
}

void Run::pipeline() {
  if (!options_.resume && !manifest_["stages"].empty()) {
    throw ConfigError("run directory " + root_.string() + " already holds a run; pass --resume to continue it");
  }
  gen_data();
  train_base();
  generate();
  annotate();
  finetune();
  evaluate();
  curves();
}

}  // namespace tnt
