#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnt/distributions.hpp"
#include "tnt/vocab.hpp"

namespace tnt {

/// A named slice of the flat parameter vector.
struct ParameterSegment {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Autoregressive model p(x_t | input, x_<t) over a fixed vocabulary.
///
/// Logits are returned as a V x T matrix: column t scores the token at output
/// position t given the input and output[0..t). Parameters live in one flat
/// vector so optimizers and gradient checks can treat every model alike.
class SequenceModel {
 public:
  explicit SequenceModel(Vocab vocab) : vocab_(std::move(vocab)) { vocab_.validate(); }
  virtual ~SequenceModel() = default;

  const Vocab& vocab() const { return vocab_; }

  virtual std::string kind() const = 0;
  virtual int context_order() const = 0;

  virtual Eigen::MatrixXd logits(std::span<const TokenId> input, std::span<const TokenId> output) const = 0;
  virtual Eigen::VectorXd next_logits(std::span<const TokenId> input, std::span<const TokenId> prefix) const = 0;

  /// Gradient of a scalar with respect to the parameters, given its gradient
  /// with respect to logits(input, output).
  virtual Eigen::VectorXd backward(std::span<const TokenId> input, std::span<const TokenId> output,
                                   const Eigen::MatrixXd& dlogits) const = 0;

  const Eigen::VectorXd& parameters() const { return params_; }
  virtual void set_parameters(const Eigen::VectorXd& params);
  virtual std::vector<ParameterSegment> segments() const = 0;

  virtual std::unique_ptr<SequenceModel> clone() const = 0;

  /// Called on a trainable copy before optimization; models with a lazily
  /// grown parameter set (tabular) register the contexts they will see.
  virtual void prepare(std::span<const TokenId> /*input*/, std::span<const TokenId> /*output*/) {}

  virtual nlohmann::json hyperparameters() const = 0;

 protected:
  Eigen::VectorXd params_;

 private:
  Vocab vocab_;
};

// ---------------------------------------------------------------------------

/// Lookup-table model: each (input id, trailing k tokens) context owns a
/// score vector. Contexts absent from the table score zero (uniform).
class TabularModel final : public SequenceModel {
 public:
  struct ContextKey {
    std::uint64_t input_id = 0;
    TokenSeq window;
    auto operator<=>(const ContextKey&) const = default;
  };

  /// Scores used to realize an exact zero probability.
  static constexpr double kZeroScore = -1e4;

  TabularModel(Vocab vocab, int context_order);

  std::string kind() const override { return "tabular"; }
  int context_order() const override { return order_; }

  Eigen::MatrixXd logits(std::span<const TokenId> input, std::span<const TokenId> output) const override;
  Eigen::VectorXd next_logits(std::span<const TokenId> input, std::span<const TokenId> prefix) const override;
  Eigen::VectorXd backward(std::span<const TokenId> input, std::span<const TokenId> output,
                           const Eigen::MatrixXd& dlogits) const override;
  std::vector<ParameterSegment> segments() const override;
  std::unique_ptr<SequenceModel> clone() const override { return std::make_unique<TabularModel>(*this); }
  void prepare(std::span<const TokenId> input, std::span<const TokenId> output) override;
  nlohmann::json hyperparameters() const override;

  static std::uint64_t input_id(std::span<const TokenId> input);
  ContextKey key_for(std::span<const TokenId> input, std::span<const TokenId> prefix) const;

  /// Index of the context's score block, adding a zero block if absent.
  Eigen::Index ensure_context(const ContextKey& key);
  const std::map<ContextKey, Eigen::Index>& contexts() const { return index_; }

  void set_scores(const ContextKey& key, const Eigen::VectorXd& scores);
  Eigen::VectorXd scores(const ContextKey& key) const;

  /// Sets the context's scores so its conditional equals `p`; zeros map to kZeroScore.
  void set_conditional(const ContextKey& key, const TokenDistribution& p);

  // Checkpoint support: rebuild from an ordered key list and flat parameters.
  void restore(const std::vector<ContextKey>& keys, const Eigen::VectorXd& params);

 private:
  int order_;
  std::map<ContextKey, Eigen::Index> index_;  // key -> block number
};

// ---------------------------------------------------------------------------

struct TinyNeuralConfig {
  int embedding_dim = 16;  // d
  int hidden_dim = 64;     // h
  int context_order = 2;   // k
  double init_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Bag-of-input embedding plus a window of k previous output embeddings,
/// one tanh hidden layer, and a projection to V logits.
class TinyNeuralModel final : public SequenceModel {
 public:
  TinyNeuralModel(Vocab vocab, TinyNeuralConfig config);

  std::string kind() const override { return "tiny-neural"; }
  int context_order() const override { return config_.context_order; }
  const TinyNeuralConfig& config() const { return config_; }

  Eigen::MatrixXd logits(std::span<const TokenId> input, std::span<const TokenId> output) const override;
  Eigen::VectorXd next_logits(std::span<const TokenId> input, std::span<const TokenId> prefix) const override;
  Eigen::VectorXd backward(std::span<const TokenId> input, std::span<const TokenId> output,
                           const Eigen::MatrixXd& dlogits) const override;
  std::vector<ParameterSegment> segments() const override;
  std::unique_ptr<SequenceModel> clone() const override { return std::make_unique<TinyNeuralModel>(*this); }
  nlohmann::json hyperparameters() const override;

  Eigen::Index parameter_count() const { return params_.size(); }

 private:
  struct Layout {
    Eigen::Index token_embedding, input_embedding, hidden_weight, hidden_bias, output_weight, output_bias, total;
  };
  Layout layout() const;
  Eigen::Index feature_dim() const { return (config_.context_order + 1) * config_.embedding_dim; }

  // Columns are feature vectors for positions [first, last) of the prefix.
  Eigen::MatrixXd features(std::span<const TokenId> input, std::span<const TokenId> output, std::size_t first,
                           std::size_t last) const;

  TinyNeuralConfig config_;
};

// ---------------------------------------------------------------------------
// Free functions over any SequenceModel

/// Token conditionals for every output prefix, one teacher-forced pass.
std::vector<TokenDistribution> forward_all(const SequenceModel& model, std::span<const TokenId> input,
                                           std::span<const TokenId> output);

/// Appends the argmax token (lowest id on ties) until EOS or max_len tokens.
TokenSeq greedy_decode(const SequenceModel& model, std::span<const TokenId> input, int max_len);

struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd dlogits;
};

/// Scalar loss of the logits matrix, with its gradient.
using LogitLoss = std::function<LossGradient(const Eigen::MatrixXd& logits)>;

struct ParameterGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Exact parameter gradient of `loss` evaluated on logits(input, output).
/// Throws NonFiniteLoss on NaN or Inf in the loss or any gradient entry.
ParameterGradient gradients(const SequenceModel& model, std::span<const TokenId> input,
                            std::span<const TokenId> output, const LogitLoss& loss);

/// Stable 64-bit fingerprint of a parameter vector (bitwise).
std::uint64_t parameter_hash(const Eigen::VectorXd& params);

// ---------------------------------------------------------------------------
// Checkpoints: JSON with vocab, kind, hyperparameters and flat parameters.

nlohmann::json vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const SequenceModel& model);
std::unique_ptr<SequenceModel> checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path);
std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace tnt
