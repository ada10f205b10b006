#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tnt/synthdata.hpp"
#include "tnt/vocab.hpp"

namespace tnt {

// All similarity metrics compare candidates against references position by
// position and return values in [0, 100]. They throw EmptyCorpus on empty
// input and LengthMismatch when the lists differ in length.

/// Corpus BLEU-4 with uniform weights, brevity penalty and add-one smoothing
/// on the 2-, 3- and 4-gram precisions.
double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

/// Mean per-pair LCS F1. Two empty sequences score 100.
double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

/// Percentage of exact matches.
double sequence_accuracy(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

/// Percentage of generations for which annotate() flags at least one position.
double unwanted_rate(const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& generations,
                     const TaskSpec& spec);

/// Generations containing a run of at least three copies of one non-reserved token.
int count_word_repeats(const std::vector<TokenSeq>& generations, const Vocab& vocab);

/// Generations where the qq token is followed by some non-reserved token.
int count_random_qq(const std::vector<TokenSeq>& generations, TokenId qq_token, const Vocab& vocab);

/// Drops reserved tokens; metrics are computed on content only.
TokenSeq strip_reserved(const TokenSeq& seq, const Vocab& vocab);

struct EvalReport {
  std::string method;
  double alpha = 0.0;
  std::string split;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double seq_acc = 0.0;
  double unwanted_rate = 0.0;
  int repeats = 0;
  int random_qq = 0;

  double similarity(std::string_view field) const;
  bool operator==(const EvalReport&) const = default;
};

/// Scores `generations` against the original model's `references` for the same inputs.
EvalReport evaluate_generations(const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& generations,
                                const std::vector<TokenSeq>& references, const TaskSpec& spec);

/// Unwanted-rate thresholds 0, 0.1, ..., up to the original rate (percentage points).
std::vector<double> threshold_grid(double original_rate);

struct FrontierCurve {
  std::string label;
  std::vector<double> thresholds;
  std::vector<std::optional<double>> similarity;  // test similarity of the selected run; empty = gap
  std::vector<std::optional<double>> selected;    // validation similarity that drove the selection
  double auc = 0.0;                               // trapezoid over the grid, gaps counted as 0
};

/// For each threshold, picks among the runs whose validation unwanted rate is
/// below it the one with the highest validation similarity, then records that
/// run's test similarity. `test` and `validation` are paired by index.
FrontierCurve frontier_curve(std::string label, const std::vector<EvalReport>& test,
                             const std::vector<EvalReport>& validation, std::string_view similarity_field,
                             const std::vector<double>& thresholds);

/// Pointwise maximum of curves sharing one threshold grid.
FrontierCurve composite_curve(std::string label, const std::vector<FrontierCurve>& members);

/// Per method (in order of first appearance), the run whose validation
/// unwanted rate is at most (1 - reduction) * original_rate with the highest
/// validation sequence accuracy; returns that run's test report. Methods
/// without a qualifying run are omitted.
std::vector<EvalReport> select_at_reduction(const std::vector<EvalReport>& test,
                                            const std::vector<EvalReport>& validation, double original_rate,
                                            double reduction);

double trapezoid_auc(const std::vector<double>& thresholds, const std::vector<std::optional<double>>& values);

void write_reports_csv(std::ostream& out, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_reports_csv(std::istream& in);
void write_curves_csv(std::ostream& out, const std::vector<FrontierCurve>& curves);

}  // namespace tnt
