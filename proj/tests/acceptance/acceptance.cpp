// Runs the ten acceptance criteria and prints one PASS/FAIL line per
// criterion. Exit status is nonzero if any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnt/experiment.hpp"
#include "tnt/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string describe(const tnt::CheckResult& r) {
  return r.name + ": " + fmt("measured %.6g, tolerance %.6g", r.measured, r.tolerance) +
         (r.detail.empty() ? "" : " (" + r.detail + ")");
}

bool is_tnt(const std::string& method) { return method.starts_with("TN-"); }

// Row of the at-reduction table with the highest test seq_acc among `want`.
std::optional<json> best_row(const json& table, bool (*want)(const std::string&)) {
  std::optional<json> best;
  for (const auto& row : table) {
    if (!want(row.at("method").get<std::string>())) continue;
    if (!best || row.at("seq_acc").get<double>() > best->at("seq_acc").get<double>()) best = row;
  }
  return best;
}

int disfluencies(const json& row) { return row.at("repeats").get<int>() + row.at("random_qq").get<int>(); }

std::string row_text(const json& row) {
  std::ostringstream s;
  s << row.at("method").get<std::string>() << " alpha=" << row.at("alpha").get<double>()
    << " seq_acc=" << row.at("seq_acc").get<double>() << " unwanted=" << row.at("unwanted_rate").get<double>()
    << " repeats=" << row.at("repeats").get<int>() << " random_qq=" << row.at("random_qq").get<int>();
  return s.str();
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  const auto since = [](clock::time_point t) { return std::chrono::duration<double>(clock::now() - t).count(); };
  std::vector<Outcome> outcomes;
  const auto report = [&](Outcome o) {
    std::cout << "criterion " << o.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.name << "  [" << o.detail
              << "] " << fmt("%.1fs", o.seconds, 0) << std::endl;
    outcomes.push_back(std::move(o));
  };
  const std::uint64_t seed = 0;

  auto t = clock::now();
  const auto c1 = tnt::check_projection_exactness(seed);
  report({1, "projection exactness", c1.pass, describe(c1), since(t)});

  t = clock::now();
  const auto c2 = tnt::check_commutativity(seed + 1);
  report({2, "commutativity", c2.pass, describe(c2), since(t)});

  t = clock::now();
  const auto c3 = tnt::check_gradients(seed + 2);
  report({3, "gradient correctness", c3.pass, describe(c3), since(t)});

  t = clock::now();
  const tnt::TinyTask task = tnt::make_tiny_task(seed + 3);
  const tnt::TrainResult trained = tnt::train_tiny_task(task);
  const auto c4 = tnt::check_token_convergence(task, *trained.model);
  report({4, "token-level convergence", c4.pass, describe(c4), since(t)});

  t = clock::now();
  const auto c5 = tnt::check_sequence_optimum(task, *trained.model);
  report({5, "sequence-level optimum", c5.pass, describe(c5), since(t)});

  t = clock::now();
  const auto c6a = tnt::check_rl_equivalence(seed + 4);
  const auto c6b = tnt::check_small_beta_tilt(seed + 5);
  report({6, "reward identity and small-beta tilt", c6a.pass && c6b.pass, describe(c6a) + "; " + describe(c6b),
          since(t)});

  // Criteria 7, 8 and 10 share the pipeline run.
  const fs::path work = fs::temp_directory_path() / ("tnt_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  const tnt::ExperimentConfig config = tnt::load_config(fs::path(TNT_SOURCE_DIR) / "configs" / "acceptance.json");
  t = clock::now();
  std::optional<json> summary;
  std::string pipeline_error;
  try {
    tnt::Run(work / "first", config, {}).pipeline();
    summary = json::parse(slurp(work / "first" / tnt::run_layout::kSummary));
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  const double sweep_seconds = since(t);

  if (!summary) {
    report({7, "reduction table direction", false, "pipeline failed: " + pipeline_error, sweep_seconds});
    report({8, "composite frontier AUC", false, "pipeline failed: " + pipeline_error, 0.0});
  } else {
    const json& table = summary->at("at_reduction");
    const auto tnt_best = best_row(table, is_tnt);
    const auto base_best = best_row(table, [](const std::string& m) { return !is_tnt(m); });
    const auto nl = best_row(table, [](const std::string& m) { return m == "NL+LL"; });
    std::string detail;
    bool acc_ok = false, disfl_ok = false;
    if (tnt_best && base_best) {
      acc_ok = tnt_best->at("seq_acc").get<double>() > base_best->at("seq_acc").get<double>();
      detail += std::string("seq_acc ") + (acc_ok ? "ok" : "not ok") + ": best TNT {" + row_text(*tnt_best) +
                "} vs best baseline {" + row_text(*base_best) + "}";
    } else {
      detail += "seq_acc not ok: no qualifying run for TNT or baselines";
    }
    if (tnt_best && nl) {
      disfl_ok = disfluencies(*tnt_best) < disfluencies(*nl);
      detail += std::string("; disfluencies ") + (disfl_ok ? "ok" : "not ok") + ": " +
                std::to_string(disfluencies(*tnt_best)) + " vs NL+LL {" + row_text(*nl) + "}";
    } else {
      detail += "; disfluencies not ok: no qualifying NL+LL or TNT run";
    }
    report({7, "reduction table direction", acc_ok && disfl_ok, detail, sweep_seconds});

    const json& auc = summary->at("auc");
    const double a_tnt = auc.at("composite:TNT").get<double>();
    const double a_base = auc.at("composite:baselines").get<double>();
    report({8, "composite frontier AUC", a_tnt > a_base, fmt("TNT %.4f vs baselines %.4f", a_tnt, a_base), 0.0});
  }

  t = clock::now();
  const auto c9 = tnt::check_baseline_blindness();
  report({9, "baseline blindness", c9.pass, describe(c9), since(t)});

  t = clock::now();
  if (!summary) {
    report({10, "determinism", false, "first pipeline run failed", 0.0});
  } else {
    try {
      tnt::Run(work / "second", config, {}).pipeline();
      const bool same = slurp(work / "first" / tnt::run_layout::kReports) ==
                        slurp(work / "second" / tnt::run_layout::kReports);
      report({10, "determinism", same, same ? "reports.csv byte-identical" : "reports.csv differs", since(t)});
    } catch (const std::exception& e) {
      report({10, "determinism", false, std::string("rerun failed: ") + e.what(), since(t)});
    }
  }
  fs::remove_all(work);

  int failed = 0;
  for (const auto& o : outcomes) failed += !o.pass;
  std::cout << (outcomes.size() - failed) << "/" << outcomes.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
