#include "tnt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

void check_corpora(std::size_t candidates, std::size_t references, const char* what) {
  if (candidates == 0) throw EmptyCorpus(std::string(what) + ": empty corpus");
  if (candidates != references) throw LengthMismatch(std::string(what) + ": candidate/reference count mismatch");
}

using NgramCounts = std::map<std::vector<TokenId>, int>;

NgramCounts ngrams(const TokenSeq& seq, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[TokenSeq(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (TokenId x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string format_fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

}  // namespace

double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  check_corpora(candidates.size(), references.size(), "bleu");
  constexpr std::size_t kMaxOrder = 4;
  std::array<double, kMaxOrder> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const NgramCounts cand = ngrams(candidates[i], n);
      const NgramCounts ref = ngrams(references[i], n);
      for (const auto& [gram, count] : cand) {
        const auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  if (cand_len == 0.0 || matches[0] == 0.0) return 0.0;
  double log_precision = std::log(matches[0] / totals[0]);
  for (std::size_t n = 2; n <= kMaxOrder; ++n) log_precision += std::log((matches[n - 1] + 1.0) / (totals[n - 1] + 1.0));
  log_precision /= static_cast<double>(kMaxOrder);
  const double brevity = cand_len < ref_len ? 1.0 - ref_len / cand_len : 0.0;
  return 100.0 * std::exp(log_precision + brevity);
}

double rouge_l(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  check_corpora(candidates.size(), references.size(), "rouge_l");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& c = candidates[i];
    const TokenSeq& r = references[i];
    if (c.empty() && r.empty()) {
      total += 1.0;
      continue;
    }
    const auto lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0.0) continue;
    const double precision = lcs / static_cast<double>(c.size());
    const double recall = lcs / static_cast<double>(r.size());
    total += 2.0 * precision * recall / (precision + recall);
  }
  return 100.0 * total / static_cast<double>(candidates.size());
}

double sequence_accuracy(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references) {
  check_corpora(candidates.size(), references.size(), "sequence_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) hits += candidates[i] == references[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(candidates.size());
}

double unwanted_rate(const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& generations,
                     const TaskSpec& spec) {
  check_corpora(generations.size(), inputs.size(), "unwanted_rate");
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < generations.size(); ++i) flagged += annotate(inputs[i], generations[i], spec).empty() ? 0 : 1;
  return 100.0 * static_cast<double>(flagged) / static_cast<double>(generations.size());
}

int count_word_repeats(const std::vector<TokenSeq>& generations, const Vocab& vocab) {
  int count = 0;
  for (const auto& g : generations) {
    int run = 0;
    bool found = false;
    for (std::size_t i = 0; i < g.size() && !found; ++i) {
      run = (i > 0 && g[i] == g[i - 1]) ? run + 1 : 1;
      found = run >= 3 && !vocab.is_reserved(g[i]);
    }
    count += found ? 1 : 0;
  }
  return count;
}

int count_random_qq(const std::vector<TokenSeq>& generations, TokenId qq_token, const Vocab& vocab) {
  int count = 0;
  for (const auto& g : generations) {
    const auto qq = std::find(g.begin(), g.end(), qq_token);
    if (qq == g.end()) continue;
    const bool content_after =
        std::any_of(std::next(qq), g.end(), [&](TokenId t) { return !vocab.is_reserved(t); });
    count += content_after ? 1 : 0;
  }
  return count;
}

TokenSeq strip_reserved(const TokenSeq& seq, const Vocab& vocab) {
  TokenSeq out;
  out.reserve(seq.size());
  for (TokenId t : seq) {
    if (!vocab.is_reserved(t)) out.push_back(t);
  }
  return out;
}

double EvalReport::similarity(std::string_view field) const {
  if (field == "bleu") return bleu;
  if (field == "rouge_l") return rouge_l;
  if (field == "seq_acc") return seq_acc;
  throw InvalidArgument("unknown similarity field '" + std::string(field) + "'");
}

EvalReport evaluate_generations(const std::vector<TokenSeq>& inputs, const std::vector<TokenSeq>& generations,
                                const std::vector<TokenSeq>& references, const TaskSpec& spec) {
  std::vector<TokenSeq> cand, ref;
  cand.reserve(generations.size());
  ref.reserve(references.size());
  for (const auto& g : generations) cand.push_back(strip_reserved(g, spec.vocab));
  for (const auto& r : references) ref.push_back(strip_reserved(r, spec.vocab));

  EvalReport r;
  r.bleu = bleu(cand, ref);
  r.rouge_l = rouge_l(cand, ref);
  r.seq_acc = sequence_accuracy(generations, references);
  r.unwanted_rate = unwanted_rate(inputs, generations, spec);
  r.repeats = count_word_repeats(generations, spec.vocab);
  r.random_qq = count_random_qq(generations, spec.qq_token, spec.vocab);
  return r;
}

std::vector<double> threshold_grid(double original_rate) {
  if (!(original_rate >= 0.0) || !std::isfinite(original_rate)) {
    throw InvalidArgument("threshold grid: rate must be finite and >= 0");
  }
  const auto steps = static_cast<int>(std::floor(original_rate * 10.0 + 1e-9));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) grid.push_back(k / 10.0);
  return grid;
}

double trapezoid_auc(const std::vector<double>& thresholds, const std::vector<std::optional<double>>& values) {
  if (thresholds.size() != values.size()) throw LengthMismatch("auc: grid and values differ in length");
  double area = 0.0;
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    area += 0.5 * (thresholds[i] - thresholds[i - 1]) * (values[i - 1].value_or(0.0) + values[i].value_or(0.0));
  }
  return area;
}

FrontierCurve frontier_curve(std::string label, const std::vector<EvalReport>& test,
                             const std::vector<EvalReport>& validation, std::string_view similarity_field,
                             const std::vector<double>& thresholds) {
  if (test.size() != validation.size()) throw LengthMismatch("frontier: test and validation reports must pair up");
  FrontierCurve curve;
  curve.label = std::move(label);
  curve.thresholds = thresholds;
  for (double tau : thresholds) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      if (!(validation[i].unwanted_rate < tau - 1e-9)) continue;
      if (!best || validation[i].similarity(similarity_field) > validation[*best].similarity(similarity_field)) best = i;
    }
    if (best) {
      curve.similarity.emplace_back(test[*best].similarity(similarity_field));
      curve.selected.emplace_back(validation[*best].similarity(similarity_field));
    } else {
      curve.similarity.emplace_back();
      curve.selected.emplace_back();
    }
  }
  curve.auc = trapezoid_auc(curve.thresholds, curve.similarity);
  return curve;
}

FrontierCurve composite_curve(std::string label, const std::vector<FrontierCurve>& members) {
  if (members.empty()) throw InvalidArgument("composite curve: no member curves");
  FrontierCurve out;
  out.label = std::move(label);
  out.thresholds = members.front().thresholds;
  out.similarity.assign(out.thresholds.size(), std::nullopt);
  out.selected.assign(out.thresholds.size(), std::nullopt);
  for (const auto& m : members) {
    if (m.thresholds != out.thresholds) throw LengthMismatch("composite curve: members use different grids");
    for (std::size_t i = 0; i < out.thresholds.size(); ++i) {
      if (m.similarity[i] && (!out.similarity[i] || *m.similarity[i] > *out.similarity[i])) {
        out.similarity[i] = m.similarity[i];
        out.selected[i] = m.selected[i];
      }
    }
  }
  out.auc = trapezoid_auc(out.thresholds, out.similarity);
  return out;
}

std::vector<EvalReport> select_at_reduction(const std::vector<EvalReport>& test,
                                            const std::vector<EvalReport>& validation, double original_rate,
                                            double reduction) {
  if (test.size() != validation.size()) throw LengthMismatch("selection: test and validation reports must pair up");
  const double limit = (1.0 - reduction) * original_rate;
  std::vector<std::string> order;
  std::map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const std::string& m = validation[i].method;
    if (std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);
    if (!(validation[i].unwanted_rate <= limit + 1e-9)) continue;
    const auto it = best.find(m);
    if (it == best.end() || validation[i].seq_acc > validation[it->second].seq_acc) best[m] = i;
  }
  std::vector<EvalReport> out;
  for (const auto& m : order) {
    if (const auto it = best.find(m); it != best.end()) out.push_back(test[it->second]);
  }
  return out;
}

void write_reports_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "method,alpha,split,bleu,rouge_l,seq_acc,unwanted_rate,repeats,random_qq\n";
  for (const auto& r : reports) {
    out << r.method << ',' << format_number(r.alpha) << ',' << r.split << ',' << format_fixed(r.bleu) << ','
        << format_fixed(r.rouge_l) << ',' << format_fixed(r.seq_acc) << ',' << format_fixed(r.unwanted_rate) << ','
        << r.repeats << ',' << r.random_qq << '\n';
  }
}

std::vector<EvalReport> read_reports_csv(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw IoError("reports csv: expected 9 columns in '" + line + "'");
    try {
      EvalReport r;
      r.method = cells[0];
      r.alpha = std::stod(cells[1]);
      r.split = cells[2];
      r.bleu = std::stod(cells[3]);
      r.rouge_l = std::stod(cells[4]);
      r.seq_acc = std::stod(cells[5]);
      r.unwanted_rate = std::stod(cells[6]);
      r.repeats = std::stoi(cells[7]);
      r.random_qq = std::stoi(cells[8]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw IoError("reports csv: malformed number in '" + line + "'");
    }
  }
  return out;
}

void write_curves_csv(std::ostream& out, const std::vector<FrontierCurve>& curves) {
  out << "threshold,method,similarity\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
      out << format_fixed(c.thresholds[i]) << ',' << c.label << ',';
      if (c.similarity[i]) out << format_fixed(*c.similarity[i]);
      out << '\n';
    }
  }
}

}  // namespace tnt
