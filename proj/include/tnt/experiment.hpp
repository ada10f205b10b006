#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnt/eval.hpp"
#include "tnt/model.hpp"
#include "tnt/objective.hpp"
#include "tnt/synthdata.hpp"
#include "tnt/trainer.hpp"

namespace tnt {

struct ModelSpec {
  std::string kind = "tiny-neural";  // or "tabular"
  TinyNeuralConfig neural;
  int tabular_order = 3;

  std::unique_ptr<SequenceModel> build(const Vocab& vocab, std::uint64_t seed) const;
};

/// Everything a pipeline run needs. Stored verbatim as config.json in the
/// run directory; see README for the file schema.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  TaskSpec task = TaskSpec::default_lexicon();
  ModelSpec model;
  TrainConfig base_train;    // objective.method is always LL
  TrainConfig update_train;  // learning_rate, method and alpha are set per sweep cell
  std::vector<Method> update_methods;
  std::vector<double> alpha_grid;
  std::vector<double> lr_grid;
  std::string similarity_field = "bleu";
  double reduction_target = 0.75;

  void validate() const;
  static ExperimentConfig defaults();
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);  // throws ConfigError
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  int jobs = 1;
  bool resume = false;
  int stop_after_cells = -1;  // testing aid: interrupt after this many newly trained cells
  std::ostream* log = nullptr;
};

struct SweepCell {
  Method method = Method::TN_FF;
  double alpha = 1.0;
  double learning_rate = 1e-3;

  std::string id() const;
};

// Run directory layout, relative to the run root.
namespace run_layout {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kHashes = "hashes.json";
inline constexpr const char* kData = "data";
inline constexpr const char* kBase = "base";
inline constexpr const char* kGenerations = "generations";
inline constexpr const char* kUpdate = "update";
inline constexpr const char* kCells = "cells";
inline constexpr const char* kReports = "reports.csv";
inline constexpr const char* kCurves = "curves.csv";
inline constexpr const char* kSummary = "summary.json";
}  // namespace run_layout

/// A run directory with its persisted manifest. Stage functions record
/// completion in the manifest; with resume enabled they skip completed work.
class Run {
 public:
  Run(std::filesystem::path root, ExperimentConfig config, RunOptions options);

  const std::filesystem::path& root() const { return root_; }
  const ExperimentConfig& config() const { return config_; }

  void gen_data();
  void train_base();
  void generate();
  void annotate();
  void finetune();
  void evaluate();
  void curves();
  void pipeline();

  // Sweep cells whose evaluations form reports.csv, in method x alpha order.
  std::vector<SweepCell> final_cells() const;

 private:
  bool stage_done(const std::string& stage) const;
  void mark_stage(const std::string& stage);
  void save_manifest() const;
  void record_hashes(const std::vector<std::filesystem::path>& files);
  void log(const std::string& line) const;
  std::unique_ptr<SequenceModel> load_base() const;
  std::vector<AnnotatedSequence> load_update_split(const std::string& split) const;
  void train_cells(const std::vector<SweepCell>& cells, const SequenceModel& base,
                     const std::vector<AnnotatedSequence>& train_set, const std::vector<AnnotatedSequence>& val_set);

  std::filesystem::path root_;
  ExperimentConfig config_;
  RunOptions options_;
  nlohmann::json manifest_;
  int cells_trained_ = 0;
  mutable std::mutex mutex_;
};

std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace tnt
