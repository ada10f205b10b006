#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "tnt/errors.hpp"
#include "tnt/experiment.hpp"
#include "tnt/verify.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kRuntimeError = 3 };

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool resume = false;
  int stop_after = -1;
  bool quiet = false;
};

tnt::ExperimentConfig resolve_config(const Options& o) {
  nlohmann::json j = nlohmann::json::object();
  fs::path source;
  if (!o.config.empty()) {
    source = o.config;
  } else if (!o.out.empty() && fs::exists(fs::path(o.out) / tnt::run_layout::kConfig)) {
    source = fs::path(o.out) / tnt::run_layout::kConfig;
  }
  if (!source.empty()) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw tnt::ConfigError("cannot read config " + source.string());
    try {
      j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      throw tnt::ConfigError(source.string() + ": " + e.what());
    }
  }
  if (o.seed) {
    j["seed"] = *o.seed;
    if (j.contains("task")) j["task"]["seed"] = *o.seed;
  }
  return tnt::config_from_json(j);
}

tnt::Run open_run(const Options& o) {
  if (o.out.empty()) throw tnt::ConfigError("--out DIR is required");
  tnt::RunOptions ro;
  ro.jobs = o.jobs;
  ro.resume = o.resume;
  ro.stop_after_cells = o.stop_after;
  ro.log = o.quiet ? nullptr : &std::clog;
  return tnt::Run(o.out, resolve_config(o), ro);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted negative training: data, training sweeps, evaluation and verification"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool run_dir) {
    sub->add_option("--config", o.config, "JSON experiment config (defaults to <out>/config.json, then built-ins)");
    if (run_dir) sub->add_option("--out", o.out, "Run directory");
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--jobs", o.jobs, "Concurrent sweep cells")->check(CLI::PositiveNumber);
    sub->add_flag("--resume", o.resume, "Skip work recorded as complete in the run manifest");
    sub->add_flag("--quiet", o.quiet, "Suppress progress lines");
  };

  struct Stage {
    const char* name;
    const char* help;
    void (tnt::Run::*fn)();
  };
  const Stage stages[] = {
      {"gen-data", "Write train/val/test corpora", &tnt::Run::gen_data},
      {"train-base", "Train the original model on the corpus", &tnt::Run::train_base},
      {"generate", "Greedy-decode the original model on every split", &tnt::Run::generate},
      {"annotate", "Annotate generations into update datasets", &tnt::Run::annotate},
      {"finetune", "Run the learning-rate and alpha sweep", &tnt::Run::finetune},
      {"eval", "Evaluate sweep checkpoints and write reports.csv", &tnt::Run::evaluate},
      {"curves", "Build frontier curves and summary.json from reports.csv", &tnt::Run::curves},
      {"pipeline", "Run every stage in order", &tnt::Run::pipeline},
  };
  std::vector<std::pair<CLI::App*, const Stage*>> stage_commands;
  for (const Stage& s : stages) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, true);
    if (std::string(s.name) == "pipeline" || std::string(s.name) == "finetune") {
      sub->add_option("--stop-after", o.stop_after, "Interrupt after N newly trained sweep cells")->group("");
    }
    stage_commands.emplace_back(sub, &s);
  }
  CLI::App* verify = app.add_subcommand("verify", "Run the oracle and invariant checks");
  std::uint64_t verify_seed = 0;
  verify->add_option("--seed", verify_seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (verify->parsed()) {
      const auto results = tnt::run_verification(verify_seed);
      tnt::print_check_table(std::cout, results);
      const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
      std::cout << (ok ? "all checks passed" : "verification FAILED") << '\n';
      return ok ? kOk : kVerifyFailed;
    }
    for (const auto& [sub, stage] : stage_commands) {
      if (!sub->parsed()) continue;
      tnt::Run run = open_run(o);
      (run.*(stage->fn))();
      return kOk;
    }
  } catch (const tnt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const tnt::InvalidSpec& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const tnt::Interrupted& e) {
    std::cerr << "interrupted: " << e.what() << " (rerun with --resume)\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
