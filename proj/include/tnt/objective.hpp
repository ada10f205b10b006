#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tnt/distributions.hpp"
#include "tnt/model.hpp"
#include "tnt/vocab.hpp"

namespace tnt {

/// Loss family. The TN-* names give the divergence at (negative, positive)
/// positions: F = forward KL to the target, R = reverse KL to the smoothed
/// target, LL = realized-token log-likelihood. LL alone is plain maximum
/// likelihood, used for base training.
enum class Method { TN_FF, TN_RR, TN_RF, TN_F_LL, TN_R_LL, NL_LL, UL_LL, LL };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
bool is_targeted(Method m);
const std::vector<Method>& update_methods();  // the seven update methods, TNT first

struct ObjectiveConfig {
  Method method = Method::TN_FF;
  double alpha = 1.0;
  double smoothing_eps = 1e-6;
  double ul_clamp = 1e-9;
  double logit_penalty_coeff = 1e-4;

  void validate() const;
};

struct TokenAnnotation {
  int position = 0;
  NegativeSet negative_ids;

  bool operator==(const TokenAnnotation&) const = default;
};

struct AnnotatedSequence {
  TokenSeq input;
  TokenSeq output;
  std::vector<TokenAnnotation> annotations;  // strictly increasing positions

  void validate(const Vocab& vocab) const;
  bool operator==(const AnnotatedSequence&) const = default;
};

/// p^o_t itself when there is nothing to remove, else its projection.
TokenDistribution target_distribution(const TokenDistribution& original, const NegativeSet& negatives);

struct SequenceLoss {
  double loss = 0.0;
  Eigen::MatrixXd dlogits;    // V x T
  int skipped_positions = 0;  // positions whose target had no mass left
};

/// Per-sequence loss and its gradient with respect to the model logits.
///
/// Unannotated positions contribute the positive-position divergence to the
/// original conditional (or -log p of the realized token for +LL methods);
/// annotated positions contribute alpha times the negative-position term.
/// Every position, including those after a negative token, adds
/// logit_penalty_coeff * logsumexp(logits)^2. Positions whose projected
/// target is undefined are skipped and counted.
SequenceLoss sequence_loss(const Eigen::MatrixXd& model_logits, const std::vector<TokenDistribution>& original,
                           const AnnotatedSequence& seq, const ObjectiveConfig& cfg);

/// Loss value only, computed from conditionals (no logit penalty term).
double sequence_loss_value(const std::vector<TokenDistribution>& model, const std::vector<TokenDistribution>& original,
                           const AnnotatedSequence& seq, const ObjectiveConfig& cfg);

/// Adapts sequence_loss into a closure for gradients().
LogitLoss make_logit_loss(const std::vector<TokenDistribution>& original, const AnnotatedSequence& seq,
                          const ObjectiveConfig& cfg);

}  // namespace tnt
