#pragma once

// Simplex-level math: projection onto a negative-free face, smoothing,
// divergences and the per-token baseline losses.
//
// Everything here is a pure function of its arguments. Types are templated
// on the scalar so the same code can be instantiated for float experiments,
// but all library callers use double: tolerances down to 1e-12 need it.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <vector>

#include "tnt/errors.hpp"
#include "tnt/vocab.hpp"

namespace tnt {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
constexpr Scalar normalization_tolerance() {
  if constexpr (std::is_same_v<Scalar, float>) {
    return Scalar(1e-5);
  } else {
    return Scalar(1e-9);
  }
}

/// Kept mass below this means nothing is left to renormalize.
inline constexpr double kMinKeptMass = 1e-12;

/// Probability vector over a finite vocabulary. Construction validates
/// nonnegativity and normalization.
template <typename Scalar>
class BasicTokenDistribution {
 public:
  using VectorType = Vector<Scalar>;

  BasicTokenDistribution() = default;

  explicit BasicTokenDistribution(VectorType probs) : probs_(std::move(probs)) { validate(); }

  BasicTokenDistribution(std::initializer_list<Scalar> probs)
      : probs_(Eigen::Map<const VectorType>(probs.begin(), static_cast<Eigen::Index>(probs.size()))) {
    validate();
  }

  static BasicTokenDistribution uniform(Eigen::Index size) {
    return BasicTokenDistribution(VectorType::Constant(size, Scalar(1) / Scalar(size)));
  }

  // Skips validation; for callers that produced probs by a normalizing map.
  static BasicTokenDistribution from_normalized(VectorType probs) {
    BasicTokenDistribution d;
    d.probs_ = std::move(probs);
    return d;
  }

  const VectorType& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }
  Scalar operator[](Eigen::Index i) const { return probs_[i]; }

  bool operator==(const BasicTokenDistribution& other) const {
    return probs_.size() == other.probs_.size() && probs_ == other.probs_;
  }

 private:
  void validate() const {
    if (probs_.size() == 0) throw InvalidArgument("token distribution: empty");
    for (Eigen::Index i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] >= Scalar(0)) || !std::isfinite(static_cast<double>(probs_[i]))) {
        std::ostringstream msg;
        msg << "token distribution: entry " << i << " = " << probs_[i] << " is not a finite nonnegative value";
        throw InvalidArgument(msg.str());
      }
    }
    const Scalar total = probs_.sum();
    if (std::abs(total - Scalar(1)) > normalization_tolerance<Scalar>()) {
      std::ostringstream msg;
      msg << "token distribution: entries sum to " << total;
      throw InvalidArgument(msg.str());
    }
  }

  VectorType probs_;
};

using TokenDistribution = BasicTokenDistribution<double>;

/// Sorted set of token ids judged unacceptable at one position.
class NegativeSet {
 public:
  NegativeSet() = default;
  NegativeSet(std::initializer_list<TokenId> ids) : ids_(ids) { normalize(); }
  explicit NegativeSet(std::vector<TokenId> ids) : ids_(std::move(ids)) { normalize(); }

  const std::vector<TokenId>& ids() const { return ids_; }
  bool empty() const { return ids_.empty(); }
  std::size_t size() const { return ids_.size(); }
  bool contains(TokenId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

  NegativeSet unite(const NegativeSet& other) const {
    std::vector<TokenId> merged;
    std::set_union(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(), std::back_inserter(merged));
    return NegativeSet(std::move(merged));
  }

  void check_within(Eigen::Index vocab_size) const {
    for (TokenId id : ids_) {
      if (id < 0 || id >= vocab_size) {
        throw TokenOutOfRange("negative set: id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab_size));
      }
    }
  }

  bool operator==(const NegativeSet&) const = default;

 private:
  void normalize() {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  std::vector<TokenId> ids_;
};

// ---------------------------------------------------------------------------
// Score helpers

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = scores.maxCoeff();
  if (!std::isfinite(static_cast<double>(top))) return top;
  return top + std::log((scores.array() - top).unaryExpr([](Scalar x) { return std::exp(x); }).sum());
}

template <typename Derived>
Vector<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& scores) {
  return scores.array() - log_sum_exp(scores);
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& scores) {
  // Scalar exp keeps exact zeros; the vectorized kernel clamps large negative inputs.
  using Scalar = typename Derived::Scalar;
  return log_softmax(scores).unaryExpr([](Scalar x) { return std::exp(x); });
}

// ---------------------------------------------------------------------------
// Projection and smoothing

/// Zeroes every id in `neg` and renormalizes the rest by the kept mass.
/// This is the KL(q || p)-closest distribution with no mass on `neg`.
template <typename Scalar>
BasicTokenDistribution<Scalar> project_out_negatives(const BasicTokenDistribution<Scalar>& p, const NegativeSet& neg) {
  neg.check_within(p.size());
  Vector<Scalar> kept = p.probs();
  for (TokenId id : neg.ids()) kept[id] = Scalar(0);
  const Scalar kept_mass = kept.sum();
  if (!(kept_mass >= Scalar(kMinKeptMass))) {
    throw TotalMassRemoved("projection: kept mass " + std::to_string(static_cast<double>(kept_mass)) +
                           " below threshold; every supported token is negative");
  }
  kept /= kept_mass;
  return BasicTokenDistribution<Scalar>::from_normalized(std::move(kept));
}

/// (p_i + eps) / (1 + V eps); strictly positive everywhere.
template <typename Scalar>
BasicTokenDistribution<Scalar> smooth_distribution(const BasicTokenDistribution<Scalar>& p, Scalar eps) {
  if (!(eps > Scalar(0))) throw InvalidArgument("smoothing eps must be positive");
  const Scalar denom = Scalar(1) + static_cast<Scalar>(p.size()) * eps;
  return BasicTokenDistribution<Scalar>::from_normalized((p.probs().array() + eps) / denom);
}

// ---------------------------------------------------------------------------
// Divergences

/// KL(target || model) given model log-probabilities, with 0 log 0 = 0.
template <typename Scalar, typename Derived>
Scalar forward_kl(const BasicTokenDistribution<Scalar>& target, const Eigen::MatrixBase<Derived>& model_log_probs) {
  if (model_log_probs.size() != target.size()) throw LengthMismatch("forward_kl: size mismatch");
  const Scalar lse = log_sum_exp(model_log_probs);
  if (std::abs(lse) > Scalar(1e-6)) throw InvalidArgument("forward_kl: model log-probs are not normalized");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const Scalar t = target[i];
    if (t > Scalar(0)) total += t * (std::log(t) - model_log_probs[i]);
  }
  return std::max(total, Scalar(0));
}

/// KL(model || target). The target must be strictly positive (smooth first).
template <typename Scalar>
Scalar reverse_kl(const BasicTokenDistribution<Scalar>& target, const BasicTokenDistribution<Scalar>& model) {
  if (model.size() != target.size()) throw LengthMismatch("reverse_kl: size mismatch");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    if (!(target[i] > Scalar(0))) {
      throw TargetNotPositive("reverse_kl: target entry " + std::to_string(i) + " is not positive");
    }
    const Scalar m = model[i];
    if (m > Scalar(0)) total += m * (std::log(m) - std::log(target[i]));
  }
  return std::max(total, Scalar(0));
}

// ---------------------------------------------------------------------------
// Token-level baseline losses

/// Negative likelihood: minimizing log p drives p to zero, without bound.
template <typename Scalar>
Scalar nl_token_loss(Scalar log_prob_of_negative) {
  return log_prob_of_negative;
}

/// Unlikelihood, -log(1 - p), with 1 - p clamped from below.
template <typename Scalar>
Scalar ul_token_loss(Scalar prob_of_negative, Scalar clamp) {
  return -std::log(std::max(Scalar(1) - prob_of_negative, clamp));
}

template <typename Scalar>
Scalar ll_token_loss(Scalar log_prob_of_realized) {
  return -log_prob_of_realized;
}

}  // namespace tnt
