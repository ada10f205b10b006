#include "tnt/objective.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 8> kMethodNames{{
    {Method::TN_FF, "TN-FF"},
    {Method::TN_RR, "TN-RR"},
    {Method::TN_RF, "TN-RF"},
    {Method::TN_F_LL, "TN-F+LL"},
    {Method::TN_R_LL, "TN-R+LL"},
    {Method::NL_LL, "NL+LL"},
    {Method::UL_LL, "UL+LL"},
    {Method::LL, "LL"},
}};

enum class Term { ForwardKL, ReverseKL, LogLikelihood, NegativeLikelihood, Unlikelihood };

struct TermPair {
  Term negative;
  Term positive;
};

TermPair terms_for(Method m) {
  switch (m) {
    case Method::TN_FF: return {Term::ForwardKL, Term::ForwardKL};
    case Method::TN_RR: return {Term::ReverseKL, Term::ReverseKL};
    case Method::TN_RF: return {Term::ReverseKL, Term::ForwardKL};
    case Method::TN_F_LL: return {Term::ForwardKL, Term::LogLikelihood};
    case Method::TN_R_LL: return {Term::ReverseKL, Term::LogLikelihood};
    case Method::NL_LL: return {Term::NegativeLikelihood, Term::LogLikelihood};
    case Method::UL_LL: return {Term::Unlikelihood, Term::LogLikelihood};
    case Method::LL: return {Term::LogLikelihood, Term::LogLikelihood};
  }
  throw InvalidArgument("unknown method");
}

struct PositionInputs {
  const Eigen::VectorXd& log_probs;
  const Eigen::VectorXd& probs;
  const TokenDistribution& original;
  const NegativeSet* negatives;  // null when unannotated
  TokenId realized;
};

struct TermValue {
  double value = 0.0;
  bool skipped = false;
};

// Adds the term's gradient (scaled by `weight`) into `grad` when non-null.
TermValue evaluate_term(Term term, const PositionInputs& in, const ObjectiveConfig& cfg, double weight,
                        Eigen::VectorXd* grad) {
  const Eigen::VectorXd& logp = in.log_probs;
  const Eigen::VectorXd& p = in.probs;
  switch (term) {
    case Term::ForwardKL:
    case Term::ReverseKL: {
      TokenDistribution target = in.original;
      if (in.negatives != nullptr) {
        try {
          target = target_distribution(in.original, *in.negatives);
        } catch (const TotalMassRemoved&) {
          return {0.0, true};
        }
      }
      if (term == Term::ForwardKL) {
        double value = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          if (target[i] > 0.0) value += target[i] * (std::log(target[i]) - logp[i]);
        }
        if (grad != nullptr) *grad += weight * (p - target.probs());
        return {value};
      }
      const TokenDistribution smoothed = smooth_distribution(target, cfg.smoothing_eps);
      Eigen::VectorXd a(p.size());
      double value = 0.0;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        a[i] = logp[i] - std::log(smoothed[i]);
        if (p[i] > 0.0) value += p[i] * a[i];
      }
      if (grad != nullptr) {
        for (Eigen::Index j = 0; j < p.size(); ++j) {
          if (p[j] > 0.0) (*grad)[j] += weight * p[j] * (a[j] - value);
        }
      }
      return {value};
    }
    case Term::LogLikelihood: {
      if (grad != nullptr) {
        *grad += weight * p;
        (*grad)[in.realized] -= weight;
      }
      return {ll_token_loss(logp[in.realized])};
    }
    case Term::NegativeLikelihood: {
      double value = 0.0;
      const auto& ids = in.negatives->ids();
      for (TokenId n : ids) value += nl_token_loss(logp[n]);
      if (grad != nullptr) {
        *grad -= weight * static_cast<double>(ids.size()) * p;
        for (TokenId n : ids) (*grad)[n] += weight;
      }
      return {value};
    }
    case Term::Unlikelihood: {
      double neg_mass = 0.0, kept_mass = 0.0;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        (in.negatives->contains(static_cast<TokenId>(i)) ? neg_mass : kept_mass) += p[i];
      }
      const double value = ul_token_loss(neg_mass, cfg.ul_clamp);
      if (grad != nullptr && 1.0 - neg_mass > cfg.ul_clamp) {
        for (Eigen::Index j = 0; j < p.size(); ++j) {
          const double indicator = in.negatives->contains(static_cast<TokenId>(j)) ? 1.0 : 0.0;
          (*grad)[j] += weight * p[j] * (indicator - neg_mass) / kept_mass;
        }
      }
      return {value};
    }
  }
  return {};
}

struct LossAccumulator {
  double loss = 0.0;
  int skipped = 0;
};

void check_lengths(Eigen::Index model_positions, const std::vector<TokenDistribution>& original,
                   const AnnotatedSequence& seq) {
  if (model_positions != static_cast<Eigen::Index>(seq.output.size()) || original.size() != seq.output.size()) {
    throw LengthMismatch("sequence_loss: expected " + std::to_string(seq.output.size()) +
                         " conditionals from both models, got " + std::to_string(model_positions) + " and " +
                         std::to_string(original.size()));
  }
}

// Calls fn(t, negatives-or-null) for each output position.
template <typename Fn>
void for_each_position(const AnnotatedSequence& seq, Fn&& fn) {
  std::size_t next = 0;
  for (std::size_t t = 0; t < seq.output.size(); ++t) {
    const NegativeSet* neg = nullptr;
    if (next < seq.annotations.size() && seq.annotations[next].position == static_cast<int>(t)) {
      neg = &seq.annotations[next].negative_ids;
      ++next;
    }
    fn(t, neg);
  }
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  throw InvalidArgument("unknown method");
}

Method parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethodNames) {
    if (n == name) return method;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

bool is_targeted(Method m) {
  return m == Method::TN_FF || m == Method::TN_RR || m == Method::TN_RF || m == Method::TN_F_LL ||
         m == Method::TN_R_LL;
}

const std::vector<Method>& update_methods() {
  static const std::vector<Method> kAll{Method::TN_FF,   Method::TN_RR, Method::TN_RF, Method::TN_F_LL,
                                        Method::TN_R_LL, Method::NL_LL, Method::UL_LL};
  return kAll;
}

void ObjectiveConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("objective: alpha must be positive and finite");
  if (!(smoothing_eps > 0.0) || !std::isfinite(smoothing_eps)) {
    throw InvalidArgument("objective: smoothing_eps must be positive");
  }
  if (!(ul_clamp > 0.0 && ul_clamp < 1.0)) throw InvalidArgument("objective: ul_clamp must lie in (0, 1)");
  if (!(logit_penalty_coeff >= 0.0) || !std::isfinite(logit_penalty_coeff)) {
    throw InvalidArgument("objective: logit_penalty_coeff must be nonnegative");
  }
}

void AnnotatedSequence::validate(const Vocab& vocab) const {
  vocab.check_tokens(input, "sequence input");
  vocab.check_tokens(output, "sequence output");
  int last = -1;
  for (const auto& a : annotations) {
    if (a.position <= last) throw InvalidArgument("annotations: positions must be strictly increasing");
    if (a.position >= static_cast<int>(output.size())) {
      throw InvalidArgument("annotations: position " + std::to_string(a.position) + " beyond output length");
    }
    if (a.negative_ids.empty()) throw InvalidArgument("annotations: negative set must be non-empty");
    a.negative_ids.check_within(vocab.size);
    last = a.position;
  }
}

TokenDistribution target_distribution(const TokenDistribution& original, const NegativeSet& negatives) {
  if (negatives.empty()) return original;
  return project_out_negatives(original, negatives);
}

SequenceLoss sequence_loss(const Eigen::MatrixXd& model_logits, const std::vector<TokenDistribution>& original,
                           const AnnotatedSequence& seq, const ObjectiveConfig& cfg) {
  check_lengths(model_logits.cols(), original, seq);
  const TermPair terms = terms_for(cfg.method);
  SequenceLoss out;
  out.dlogits = Eigen::MatrixXd::Zero(model_logits.rows(), model_logits.cols());

  for_each_position(seq, [&](std::size_t t, const NegativeSet* neg) {
    const auto col = static_cast<Eigen::Index>(t);
    const double lse = log_sum_exp(model_logits.col(col));
    const Eigen::VectorXd logp = model_logits.col(col).array() - lse;
    const Eigen::VectorXd p = logp.unaryExpr([](double x) { return std::exp(x); });
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());

    const bool annotated = neg != nullptr && cfg.method != Method::LL;
    const double weight = annotated ? cfg.alpha : 1.0;
    const PositionInputs in{logp, p, original[t], annotated ? neg : nullptr, seq.output[t]};
    const TermValue term = evaluate_term(annotated ? terms.negative : terms.positive, in, cfg, weight, &grad);
    if (term.skipped) ++out.skipped_positions;
    out.loss += weight * term.value;

    if (cfg.logit_penalty_coeff > 0.0) {
      out.loss += cfg.logit_penalty_coeff * lse * lse;
      grad += 2.0 * cfg.logit_penalty_coeff * lse * p;
    }
    out.dlogits.col(col) = grad;
  });
  return out;
}

double sequence_loss_value(const std::vector<TokenDistribution>& model, const std::vector<TokenDistribution>& original,
                           const AnnotatedSequence& seq, const ObjectiveConfig& cfg) {
  check_lengths(static_cast<Eigen::Index>(model.size()), original, seq);
  const TermPair terms = terms_for(cfg.method);
  double total = 0.0;
  for_each_position(seq, [&](std::size_t t, const NegativeSet* neg) {
    const Eigen::VectorXd& p = model[t].probs();
    const Eigen::VectorXd logp = p.array().log();
    const bool annotated = neg != nullptr && cfg.method != Method::LL;
    const double weight = annotated ? cfg.alpha : 1.0;
    const PositionInputs in{logp, p, original[t], annotated ? neg : nullptr, seq.output[t]};
    total += weight * evaluate_term(annotated ? terms.negative : terms.positive, in, cfg, weight, nullptr).value;
  });
  return total;
}

LogitLoss make_logit_loss(const std::vector<TokenDistribution>& original, const AnnotatedSequence& seq,
                          const ObjectiveConfig& cfg) {
  return [&original, &seq, cfg](const Eigen::MatrixXd& logits) {
    SequenceLoss s = sequence_loss(logits, original, seq, cfg);
    return LossGradient{s.loss, std::move(s.dlogits)};
  };
}

}  // namespace tnt
