#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "support.hpp"
#include "tnt/eval.hpp"

using namespace tnt;

namespace {

constexpr TokenId a = 3, b = 4, c = 5, d = 6, e = 7;

// Occurrences of seq[pos, pos+n) inside `in`.
int occurrences(const TokenSeq& in, const TokenSeq& seq, std::size_t pos, std::size_t n) {
  int k = 0;
  for (std::size_t i = 0; i + n <= in.size(); ++i) {
    bool same = true;
    for (std::size_t j = 0; j < n && same; ++j) same = in[i + j] == seq[pos + j];
    k += same;
  }
  return k;
}

// Corpus BLEU-4 by linear scans: clipped n-gram matches, add-one on orders 2-4.
double reference_bleu(const std::vector<TokenSeq>& cands, const std::vector<TokenSeq>& refs) {
  double m[4] = {0, 0, 0, 0}, t[4] = {0, 0, 0, 0}, cl = 0, rl = 0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    const TokenSeq& x = cands[s];
    cl += x.size();
    rl += refs[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      for (std::size_t i = 0; i + n <= x.size(); ++i) {
        t[n - 1] += 1;
        // Count this occurrence only if it is within the clip for its n-gram.
        int earlier = 0;
        for (std::size_t j = 0; j < i; ++j) {
          bool same = true;
          for (std::size_t k = 0; k < n && same; ++k) same = x[j + k] == x[i + k];
          earlier += same;
        }
        if (earlier < occurrences(refs[s], x, i, n)) m[n - 1] += 1;
      }
    }
  }
  if (cl == 0 || m[0] == 0) return 0.0;
  double lp = std::log(m[0] / t[0]);
  for (int n = 1; n < 4; ++n) lp += std::log((m[n] + 1) / (t[n] + 1));
  const double bp = cl < rl ? std::exp(1 - rl / cl) : 1.0;
  return 100.0 * bp * std::exp(lp / 4);
}

TokenSeq random_seq(std::mt19937_64& rng, int max_len) {
  TokenSeq s(rng() % (max_len + 1));
  for (auto& x : s) x = static_cast<TokenId>(3 + rng() % 4);
  return s;
}

EvalReport report(std::string method, double rate, double sim) {
  EvalReport r;
  r.method = std::move(method);
  r.unwanted_rate = rate;
  r.bleu = sim;
  r.rouge_l = sim;
  r.seq_acc = sim;
  return r;
}

}  // namespace

TEST_CASE("bleu examples") {
  const std::vector<TokenSeq> refs{{a, b, c, d, e}, {b, c}};
  CHECK(bleu(refs, refs) == doctest::Approx(100.0));
  CHECK(bleu({{d, d}, {e}}, {{a, b}, {c}}) == 0.0);
  // Hand computation: p = 3/4, 3/4, 2/3, 1/2; no brevity penalty.
  const double hand = 100.0 * std::pow(0.75 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  CHECK(bleu({{a, b, c, d}}, {{a, b, c, e}}) == doctest::Approx(hand).epsilon(1e-12));
  CHECK(reference_bleu({{a, b, c, d}}, {{a, b, c, e}}) == doctest::Approx(hand).epsilon(1e-12));
  CHECK_THROWS_AS(bleu({}, {}), EmptyCorpus);
  CHECK_THROWS_AS(bleu({{a}}, {{a}, {b}}), LengthMismatch);
}

TEST_CASE("bleu agrees with the scan reference on random corpora") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenSeq> cands, refs;
    const int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      cands.push_back(random_seq(rng, 8));
      refs.push_back(random_seq(rng, 8));
    }
    CHECK(bleu(cands, refs) == doctest::Approx(reference_bleu(cands, refs)).epsilon(1e-12));
    // Order of examples does not matter.
    std::vector<std::size_t> perm(cands.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<TokenSeq> pc, pr;
    for (std::size_t i : perm) {
      pc.push_back(cands[i]);
      pr.push_back(refs[i]);
    }
    CHECK(bleu(pc, pr) == doctest::Approx(bleu(cands, refs)).epsilon(1e-12));
    CHECK(rouge_l(pc, pr) == doctest::Approx(rouge_l(cands, refs)).epsilon(1e-12));
  }
}

TEST_CASE("rouge-l examples") {
  CHECK(rouge_l({{a, b}, {c}}, {{a, b}, {c}}) == 100.0);
  CHECK(rouge_l({{a, b}}, {{c, d}}) == 0.0);
  CHECK(rouge_l({{a, b, c}}, {{a, c}}) == doctest::Approx(80.0));
  CHECK(rouge_l({{}}, {{}}) == 100.0);
  CHECK(rouge_l({{a}, {a, b, c}}, {{b}, {a, c}}) == doctest::Approx(40.0));
}

TEST_CASE("rouge-l LCS agrees with subsequence enumeration") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenSeq x = random_seq(rng, 7), y = random_seq(rng, 7);
    if (x.empty() || y.empty()) continue;
    // Longest subsequence of x (by bitmask) that is also a subsequence of y.
    std::size_t best = 0;
    for (unsigned mask = 0; mask < (1u << x.size()); ++mask) {
      TokenSeq sub;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask >> i & 1u) sub.push_back(x[i]);
      }
      std::size_t j = 0;
      for (TokenId tok : y) {
        if (j < sub.size() && sub[j] == tok) ++j;
      }
      if (j == sub.size()) best = std::max(best, sub.size());
    }
    const double p = static_cast<double>(best) / x.size(), r = static_cast<double>(best) / y.size();
    const double f = best == 0 ? 0.0 : 2 * p * r / (p + r);
    CHECK(rouge_l({x}, {y}) == doctest::Approx(100.0 * f).epsilon(1e-12));
  }
}

TEST_CASE("sequence accuracy") {
  CHECK(sequence_accuracy({{a}, {b}}, {{a}, {b}}) == 100.0);
  CHECK(sequence_accuracy({{a}, {b}}, {{c}, {d}}) == 0.0);
  CHECK(sequence_accuracy({{a}, {b}, {c}, {d}}, {{a}, {a}, {a}, {a}}) == 25.0);
}

TEST_CASE("unwanted rate") {
  const TaskSpec spec = TaskSpec::default_lexicon();
  std::vector<TokenSeq> inputs(10, TokenSeq{7}), gens(10, TokenSeq{7, 0});
  CHECK(unwanted_rate(inputs, gens, spec) == 0.0);
  for (int i = 0; i < 3; ++i) gens[i] = TokenSeq{6, 7, 0};
  CHECK(unwanted_rate(inputs, gens, spec) == doctest::Approx(30.0));
  for (auto& g : gens) g = TokenSeq{9, 0};
  CHECK(unwanted_rate(inputs, gens, spec) == 100.0);
}

TEST_CASE("disfluency counters") {
  const Vocab v = tnt::testing::make_vocab(32);
  CHECK(count_word_repeats({{a, b, c}}, v) == 0);
  CHECK(count_word_repeats({{a, a, a, b}}, v) == 1);
  CHECK(count_word_repeats({{a, a, b, b}}, v) == 0);
  CHECK(count_word_repeats({{a, a, a, a, b, b, b}, {c, c, c}}, v) == 2);
  CHECK(count_word_repeats({{0, 0, 0}, {2, 2, 2}}, v) == 0);

  const TokenId qq = 31;
  CHECK(count_random_qq({{a, b, 0}}, qq, v) == 0);
  CHECK(count_random_qq({{a, qq, b, 0}}, qq, v) == 1);
  CHECK(count_random_qq({{a, b, qq, 0}}, qq, v) == 0);
  CHECK(count_random_qq({{a, b, qq}}, qq, v) == 0);
  CHECK(count_random_qq({{qq, a, qq, b}}, qq, v) == 1);
}

TEST_CASE("evaluate_generations") {
  const TaskSpec spec = TaskSpec::default_lexicon();
  const std::vector<TokenSeq> inputs{{7, 8}, {10, 9}};
  const std::vector<TokenSeq> refs{{7, 8, 0}, {9, 10, 0}};
  const EvalReport same = evaluate_generations(inputs, refs, refs, spec);
  CHECK(same.bleu == doctest::Approx(100.0));
  CHECK(same.seq_acc == 100.0);
  CHECK(same.unwanted_rate == 50.0);
  CHECK(same.repeats == 0);

  const EvalReport eos_only = evaluate_generations(inputs, {{7, 8}, {10, 0}}, refs, spec);
  CHECK(eos_only.seq_acc == 0.0);
  CHECK(eos_only.rouge_l == doctest::Approx(100.0 * (1.0 + 2.0 / 3.0) / 2.0));
  CHECK(eos_only.similarity("seq_acc") == 0.0);
  CHECK_THROWS(eos_only.similarity("meteor"));
}

TEST_CASE("threshold grid") {
  const auto g = threshold_grid(1.0);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == 0.0);
  CHECK(g[3] == doctest::Approx(0.3));
  CHECK(g.back() == doctest::Approx(1.0));
  CHECK(threshold_grid(27.2).size() == 273);
  CHECK(threshold_grid(0.05).size() == 1);
}

TEST_CASE("frontier examples") {
  const std::vector<double> grid{1.0, 3.0, 6.0};
  const auto single = frontier_curve("m", {report("m", 2.0, 70.0)}, {report("m", 2.0, 70.0)}, "bleu", grid);
  CHECK_FALSE(single.similarity[0].has_value());
  CHECK(single.similarity[1] == 70.0);
  CHECK(single.similarity[2] == 70.0);

  const std::vector<EvalReport> two{report("m", 2.0, 60.0), report("m", 5.0, 80.0)};
  const auto curve = frontier_curve("m", two, two, "bleu", grid);
  CHECK(curve.similarity[1] == 60.0);
  CHECK(curve.similarity[2] == 80.0);
}

TEST_CASE("frontier selects on validation and records test similarity") {
  const std::vector<EvalReport> val{report("m", 1.0, 90.0), report("m", 1.0, 50.0)};
  const std::vector<EvalReport> test{report("m", 9.0, 10.0), report("m", 9.0, 99.0)};
  const auto curve = frontier_curve("m", test, val, "bleu", {2.0});
  CHECK(curve.selected[0] == 90.0);
  CHECK(curve.similarity[0] == 10.0);
  CHECK_THROWS_AS(frontier_curve("m", test, {val[0]}, "bleu", {2.0}), LengthMismatch);
}

TEST_CASE("frontier and AUC match a brute-force scan") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> rate(0.0, 10.0), sim(0.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EvalReport> val, test;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      val.push_back(report("m", std::round(rate(rng) * 10) / 10, sim(rng)));
      test.push_back(report("m", rate(rng), sim(rng)));
    }
    const auto grid = threshold_grid(10.0);
    const auto curve = frontier_curve("m", test, val, "bleu", grid);

    std::vector<std::optional<double>> scan;
    for (double tau : grid) {
      std::optional<double> best_val, best_test;
      for (int i = 0; i < n; ++i) {
        if (val[i].unwanted_rate < tau - 1e-9 && (!best_val || val[i].bleu > *best_val)) {
          best_val = val[i].bleu;
          best_test = test[i].bleu;
        }
      }
      scan.push_back(best_test);
    }
    CHECK(curve.similarity == scan);

    double area = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
      area += 0.5 * (grid[k] - grid[k - 1]) * (scan[k].value_or(0.0) + scan[k - 1].value_or(0.0));
    }
    CHECK(curve.auc == doctest::Approx(area).epsilon(1e-12));

    // The validation similarity that drives selection never decreases with the threshold.
    std::optional<double> prev;
    for (const auto& s : curve.selected) {
      if (prev) {
        REQUIRE(s.has_value());
        CHECK(*s >= *prev);
      }
      if (s) prev = s;
    }
  }
}

TEST_CASE("composite curve is the pointwise maximum") {
  FrontierCurve x{"x", {0.0, 1.0, 2.0}, {std::nullopt, 50.0, 60.0}, {std::nullopt, 50.0, 60.0}, 0.0};
  FrontierCurve y{"y", {0.0, 1.0, 2.0}, {std::nullopt, 70.0, 40.0}, {std::nullopt, 70.0, 40.0}, 0.0};
  const auto m = composite_curve("xy", {x, y});
  CHECK_FALSE(m.similarity[0].has_value());
  CHECK(m.similarity[1] == 70.0);
  CHECK(m.similarity[2] == 60.0);
  CHECK(m.auc == doctest::Approx(0.5 * 70.0 + 0.5 * 130.0));
  CHECK(trapezoid_auc({0.0, 1.0}, {std::nullopt, std::nullopt}) == 0.0);
}

TEST_CASE("selection at a reduction target") {
  std::vector<EvalReport> val{report("A", 10.0, 90.0), report("A", 2.0, 70.0), report("A", 2.5, 80.0),
                              report("B", 3.0, 99.0), report("C", 1.0, 10.0)};
  std::vector<EvalReport> test = val;
  for (auto& r : test) r.split = "test";
  const auto picked = select_at_reduction(test, val, 10.0, 0.75);
  REQUIRE(picked.size() == 2);
  CHECK(picked[0].method == "A");
  CHECK(picked[0].seq_acc == 80.0);  // rate 2.5 is exactly a 75% reduction
  CHECK(picked[1].method == "C");
}

TEST_CASE("report CSV round trip") {
  EvalReport r = report("TN-F+LL", 1.5, 82.123456);
  r.alpha = 1e-4;
  r.split = "test";
  r.repeats = 3;
  r.random_qq = 1;
  std::stringstream first;
  write_reports_csv(first, {r, report("NL+LL", 0.0, 0.0)});
  std::stringstream in(first.str());
  const auto back = read_reports_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].method == "TN-F+LL");
  CHECK(back[0].alpha == 1e-4);
  CHECK(back[0].repeats == 3);
  std::stringstream second;
  write_reports_csv(second, back);
  CHECK(second.str() == first.str());
  CHECK(first.str().rfind("method,alpha,split,bleu,rouge_l,seq_acc,unwanted_rate,repeats,random_qq\n", 0) == 0);
}

TEST_CASE("curves CSV leaves gaps empty") {
  FrontierCurve x{"x", {0.0, 0.1}, {std::nullopt, 50.0}, {std::nullopt, 50.0}, 0.0};
  std::ostringstream out;
  write_curves_csv(out, {x});
  CHECK(out.str() == "threshold,method,similarity\n0.0000,x,\n0.1000,x,50.0000\n");
}
