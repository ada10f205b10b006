#include "tnt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "tnt/errors.hpp"

namespace tnt {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

// Trailing `order` tokens of prefix[0..end), oldest first, BOS-padded on the left.
TokenSeq trailing_window(std::span<const TokenId> prefix, std::size_t end, int order, TokenId bos) {
  TokenSeq window(static_cast<std::size_t>(order), bos);
  for (int j = 0; j < order; ++j) {
    const auto back = static_cast<std::ptrdiff_t>(end) - order + j;
    if (back >= 0) window[static_cast<std::size_t>(j)] = prefix[static_cast<std::size_t>(back)];
  }
  return window;
}

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteLoss(std::string(what) + " contains NaN or Inf");
}

}  // namespace

void SequenceModel::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != params_.size()) {
    throw LengthMismatch("set_parameters: expected " + std::to_string(params_.size()) + " values, got " +
                         std::to_string(params.size()));
  }
  params_ = params;
}

// ---------------------------------------------------------------------------
// TabularModel

TabularModel::TabularModel(Vocab vocab, int context_order) : SequenceModel(std::move(vocab)), order_(context_order) {
  if (order_ < 0) throw InvalidArgument("tabular model: context order must be >= 0");
}

std::uint64_t TabularModel::input_id(std::span<const TokenId> input) {
  const std::uint64_t len = input.size();
  return fnv1a(input.data(), input.size_bytes(), fnv1a(&len, sizeof len));
}

TabularModel::ContextKey TabularModel::key_for(std::span<const TokenId> input, std::span<const TokenId> prefix) const {
  return ContextKey{input_id(input), trailing_window(prefix, prefix.size(), order_, vocab().bos)};
}

Eigen::Index TabularModel::ensure_context(const ContextKey& key) {
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto block = static_cast<Eigen::Index>(index_.size());
  index_.emplace(key, block);
  const Eigen::Index v = vocab().size;
  params_.conservativeResize(params_.size() + v);
  params_.tail(v).setZero();
  return block;
}

void TabularModel::set_scores(const ContextKey& key, const Eigen::VectorXd& scores) {
  if (scores.size() != vocab().size) throw LengthMismatch("tabular set_scores: wrong vector length");
  const Eigen::Index block = ensure_context(key);
  params_.segment(block * vocab().size, vocab().size) = scores;
}

Eigen::VectorXd TabularModel::scores(const ContextKey& key) const {
  const Eigen::Index v = vocab().size;
  if (auto it = index_.find(key); it != index_.end()) return params_.segment(it->second * v, v);
  return Eigen::VectorXd::Zero(v);
}

void TabularModel::set_conditional(const ContextKey& key, const TokenDistribution& p) {
  if (p.size() != vocab().size) throw LengthMismatch("tabular set_conditional: wrong distribution size");
  Eigen::VectorXd s(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) s[i] = p[i] > 0.0 ? std::log(p[i]) : kZeroScore;
  set_scores(key, s);
}

Eigen::MatrixXd TabularModel::logits(std::span<const TokenId> input, std::span<const TokenId> output) const {
  const Eigen::Index v = vocab().size;
  Eigen::MatrixXd out(v, static_cast<Eigen::Index>(output.size()));
  const std::uint64_t id = input_id(input);
  for (std::size_t t = 0; t < output.size(); ++t) {
    const ContextKey key{id, trailing_window(output, t, order_, vocab().bos)};
    out.col(static_cast<Eigen::Index>(t)) = scores(key);
  }
  return out;
}

Eigen::VectorXd TabularModel::next_logits(std::span<const TokenId> input, std::span<const TokenId> prefix) const {
  return scores(key_for(input, prefix));
}

Eigen::VectorXd TabularModel::backward(std::span<const TokenId> input, std::span<const TokenId> output,
                                       const Eigen::MatrixXd& dlogits) const {
  const Eigen::Index v = vocab().size;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  const std::uint64_t id = input_id(input);
  for (std::size_t t = 0; t < output.size(); ++t) {
    const ContextKey key{id, trailing_window(output, t, order_, vocab().bos)};
    if (auto it = index_.find(key); it != index_.end()) {
      grad.segment(it->second * v, v) += dlogits.col(static_cast<Eigen::Index>(t));
    }
  }
  return grad;
}

std::vector<ParameterSegment> TabularModel::segments() const {
  return {ParameterSegment{"context_scores", 0, params_.size()}};
}

void TabularModel::prepare(std::span<const TokenId> input, std::span<const TokenId> output) {
  const std::uint64_t id = input_id(input);
  for (std::size_t t = 0; t < output.size(); ++t) {
    ensure_context(ContextKey{id, trailing_window(output, t, order_, vocab().bos)});
  }
}

nlohmann::json TabularModel::hyperparameters() const { return {{"context_order", order_}}; }

void TabularModel::restore(const std::vector<ContextKey>& keys, const Eigen::VectorXd& params) {
  if (params.size() != static_cast<Eigen::Index>(keys.size()) * vocab().size) {
    throw LengthMismatch("tabular restore: parameter count does not match context count");
  }
  index_.clear();
  for (std::size_t b = 0; b < keys.size(); ++b) index_.emplace(keys[b], static_cast<Eigen::Index>(b));
  params_ = params;
}

// ---------------------------------------------------------------------------
// TinyNeuralModel

TinyNeuralModel::TinyNeuralModel(Vocab vocab, TinyNeuralConfig config)
    : SequenceModel(std::move(vocab)), config_(config) {
  if (config_.embedding_dim <= 0 || config_.hidden_dim <= 0 || config_.context_order < 0) {
    throw InvalidArgument("tiny neural model: dimensions must be positive");
  }
  const Layout l = layout();
  params_ = Eigen::VectorXd::Zero(l.total);

  std::mt19937_64 rng(config_.seed);
  auto fill = [&](Eigen::Index offset, Eigen::Index count, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev * config_.init_scale);
    for (Eigen::Index i = 0; i < count; ++i) params_[offset + i] = normal(rng);
  };
  const Eigen::Index v = this->vocab().size, d = config_.embedding_dim, h = config_.hidden_dim;
  fill(l.token_embedding, v * d, 0.5);
  fill(l.input_embedding, v * d, 0.5);
  fill(l.hidden_weight, h * feature_dim(), 1.0 / std::sqrt(static_cast<double>(feature_dim())));
  fill(l.output_weight, v * h, 1.0 / std::sqrt(static_cast<double>(h)));
}

TinyNeuralModel::Layout TinyNeuralModel::layout() const {
  const Eigen::Index v = vocab().size, d = config_.embedding_dim, h = config_.hidden_dim;
  Layout l{};
  l.token_embedding = 0;
  l.input_embedding = l.token_embedding + v * d;
  l.hidden_weight = l.input_embedding + v * d;
  l.hidden_bias = l.hidden_weight + h * feature_dim();
  l.output_weight = l.hidden_bias + h;
  l.output_bias = l.output_weight + v * h;
  l.total = l.output_bias + v;
  return l;
}

std::vector<ParameterSegment> TinyNeuralModel::segments() const {
  const Layout l = layout();
  return {
      {"token_embedding", l.token_embedding, l.input_embedding - l.token_embedding},
      {"input_embedding", l.input_embedding, l.hidden_weight - l.input_embedding},
      {"hidden_weight", l.hidden_weight, l.hidden_bias - l.hidden_weight},
      {"hidden_bias", l.hidden_bias, l.output_weight - l.hidden_bias},
      {"output_weight", l.output_weight, l.output_bias - l.output_weight},
      {"output_bias", l.output_bias, l.total - l.output_bias},
  };
}

Eigen::MatrixXd TinyNeuralModel::features(std::span<const TokenId> input, std::span<const TokenId> output,
                                          std::size_t first, std::size_t last) const {
  const Layout l = layout();
  const Eigen::Index v = vocab().size, d = config_.embedding_dim;
  const int k = config_.context_order;
  Eigen::Map<const Eigen::MatrixXd> token_emb(params_.data() + l.token_embedding, v, d);
  Eigen::Map<const Eigen::MatrixXd> input_emb(params_.data() + l.input_embedding, v, d);

  Eigen::VectorXd summary = Eigen::VectorXd::Zero(d);
  for (TokenId c : input) summary += input_emb.row(c).transpose();

  Eigen::MatrixXd z(feature_dim(), static_cast<Eigen::Index>(last - first));
  for (std::size_t t = first; t < last; ++t) {
    const auto col = static_cast<Eigen::Index>(t - first);
    for (int j = 1; j <= k; ++j) {
      const auto back = static_cast<std::ptrdiff_t>(t) - j;
      const TokenId w = back >= 0 ? output[static_cast<std::size_t>(back)] : vocab().bos;
      z.block((j - 1) * d, col, d, 1) = token_emb.row(w).transpose();
    }
    z.block(k * d, col, d, 1) = summary;
  }
  return z;
}

Eigen::MatrixXd TinyNeuralModel::logits(std::span<const TokenId> input, std::span<const TokenId> output) const {
  const Layout l = layout();
  const Eigen::Index v = vocab().size, h = config_.hidden_dim;
  Eigen::Map<const Eigen::MatrixXd> w_hidden(params_.data() + l.hidden_weight, h, feature_dim());
  Eigen::Map<const Eigen::VectorXd> b_hidden(params_.data() + l.hidden_bias, h);
  Eigen::Map<const Eigen::MatrixXd> w_out(params_.data() + l.output_weight, v, h);
  Eigen::Map<const Eigen::VectorXd> b_out(params_.data() + l.output_bias, v);

  const Eigen::MatrixXd z = features(input, output, 0, output.size());
  const Eigen::MatrixXd hidden = ((w_hidden * z).colwise() + b_hidden).array().tanh().matrix();
  return (w_out * hidden).colwise() + b_out;
}

Eigen::VectorXd TinyNeuralModel::next_logits(std::span<const TokenId> input, std::span<const TokenId> prefix) const {
  const Layout l = layout();
  const Eigen::Index v = vocab().size, h = config_.hidden_dim;
  Eigen::Map<const Eigen::MatrixXd> w_hidden(params_.data() + l.hidden_weight, h, feature_dim());
  Eigen::Map<const Eigen::VectorXd> b_hidden(params_.data() + l.hidden_bias, h);
  Eigen::Map<const Eigen::MatrixXd> w_out(params_.data() + l.output_weight, v, h);
  Eigen::Map<const Eigen::VectorXd> b_out(params_.data() + l.output_bias, v);

  // Position prefix.size() of any output extending prefix; features never read output[t] itself.
  const Eigen::VectorXd z = features(input, prefix, prefix.size(), prefix.size() + 1).col(0);
  const Eigen::VectorXd hidden = (w_hidden * z + b_hidden).array().tanh().matrix();
  return w_out * hidden + b_out;
}

Eigen::VectorXd TinyNeuralModel::backward(std::span<const TokenId> input, std::span<const TokenId> output,
                                          const Eigen::MatrixXd& dlogits) const {
  const Layout l = layout();
  const Eigen::Index v = vocab().size, d = config_.embedding_dim, h = config_.hidden_dim;
  const int k = config_.context_order;
  Eigen::Map<const Eigen::MatrixXd> w_hidden(params_.data() + l.hidden_weight, h, feature_dim());
  Eigen::Map<const Eigen::VectorXd> b_hidden(params_.data() + l.hidden_bias, h);
  Eigen::Map<const Eigen::MatrixXd> w_out(params_.data() + l.output_weight, v, h);

  const Eigen::MatrixXd z = features(input, output, 0, output.size());
  const Eigen::MatrixXd hidden = ((w_hidden * z).colwise() + b_hidden).array().tanh().matrix();

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(l.total);
  Eigen::Map<Eigen::MatrixXd> g_token(grad.data() + l.token_embedding, v, d);
  Eigen::Map<Eigen::MatrixXd> g_input(grad.data() + l.input_embedding, v, d);
  Eigen::Map<Eigen::MatrixXd> g_hidden_w(grad.data() + l.hidden_weight, h, feature_dim());
  Eigen::Map<Eigen::VectorXd> g_hidden_b(grad.data() + l.hidden_bias, h);
  Eigen::Map<Eigen::MatrixXd> g_out_w(grad.data() + l.output_weight, v, h);
  Eigen::Map<Eigen::VectorXd> g_out_b(grad.data() + l.output_bias, v);

  g_out_w.noalias() = dlogits * hidden.transpose();
  g_out_b = dlogits.rowwise().sum();
  const Eigen::MatrixXd d_pre =
      ((w_out.transpose() * dlogits).array() * (1.0 - hidden.array().square())).matrix();
  g_hidden_w.noalias() = d_pre * z.transpose();
  g_hidden_b = d_pre.rowwise().sum();
  const Eigen::MatrixXd dz = w_hidden.transpose() * d_pre;

  for (std::size_t t = 0; t < output.size(); ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    for (int j = 1; j <= k; ++j) {
      const auto back = static_cast<std::ptrdiff_t>(t) - j;
      const TokenId w = back >= 0 ? output[static_cast<std::size_t>(back)] : vocab().bos;
      g_token.row(w) += dz.block((j - 1) * d, col, d, 1).transpose();
    }
  }
  const Eigen::VectorXd d_summary = dz.bottomRows(d).rowwise().sum();
  for (TokenId c : input) g_input.row(c) += d_summary.transpose();
  return grad;
}

nlohmann::json TinyNeuralModel::hyperparameters() const {
  return {{"embedding_dim", config_.embedding_dim},
          {"hidden_dim", config_.hidden_dim},
          {"context_order", config_.context_order},
          {"init_scale", config_.init_scale},
          {"seed", config_.seed}};
}

// ---------------------------------------------------------------------------
// Free functions

std::vector<TokenDistribution> forward_all(const SequenceModel& model, std::span<const TokenId> input,
                                           std::span<const TokenId> output) {
  if (output.empty()) throw InvalidArgument("forward_all: output must be non-empty");
  model.vocab().check_tokens(input, "forward_all input");
  model.vocab().check_tokens(output, "forward_all output");
  const Eigen::MatrixXd scores = model.logits(input, output);
  std::vector<TokenDistribution> out;
  out.reserve(output.size());
  for (Eigen::Index t = 0; t < scores.cols(); ++t) {
    out.push_back(TokenDistribution::from_normalized(softmax(scores.col(t))));
  }
  return out;
}

TokenSeq greedy_decode(const SequenceModel& model, std::span<const TokenId> input, int max_len) {
  if (max_len < 1) throw InvalidArgument("greedy_decode: max_len must be >= 1");
  model.vocab().check_tokens(input, "greedy_decode input");
  TokenSeq out;
  out.reserve(static_cast<std::size_t>(max_len));
  while (static_cast<int>(out.size()) < max_len) {
    const Eigen::VectorXd scores = model.next_logits(input, out);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;  // strict: lowest id wins ties
    }
    out.push_back(static_cast<TokenId>(best));
    if (out.back() == model.vocab().eos) break;
  }
  return out;
}

ParameterGradient gradients(const SequenceModel& model, std::span<const TokenId> input,
                            std::span<const TokenId> output, const LogitLoss& loss) {
  const Eigen::MatrixXd scores = model.logits(input, output);
  LossGradient lg = loss(scores);
  if (!std::isfinite(lg.loss)) throw NonFiniteLoss("loss is " + std::to_string(lg.loss));
  if (lg.dlogits.rows() != scores.rows() || lg.dlogits.cols() != scores.cols()) {
    throw LengthMismatch("gradients: loss returned a logit gradient of the wrong shape");
  }
  ParameterGradient out{lg.loss, model.backward(input, output, lg.dlogits)};
  check_finite(out.grad, "parameter gradient");
  return out;
}

std::uint64_t parameter_hash(const Eigen::VectorXd& params) {
  return fnv1a(params.data(), static_cast<std::size_t>(params.size()) * sizeof(double));
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json vocab_to_json(const Vocab& vocab) {
  nlohmann::json j{{"size", vocab.size}, {"eos", vocab.eos}, {"bos", vocab.bos}, {"pad", vocab.pad}};
  if (!vocab.names.empty()) j["names"] = vocab.names;
  return j;
}

Vocab vocab_from_json(const nlohmann::json& j) {
  Vocab v;
  v.size = j.at("size").get<int>();
  v.eos = j.value("eos", 0);
  v.bos = j.value("bos", 1);
  v.pad = j.value("pad", 2);
  if (j.contains("names")) v.names = j.at("names").get<std::vector<std::string>>();
  v.validate();
  return v;
}

nlohmann::json checkpoint_to_json(const SequenceModel& model) {
  nlohmann::json j;
  j["format"] = "tnt-checkpoint";
  j["version"] = 1;
  j["kind"] = model.kind();
  j["vocab"] = vocab_to_json(model.vocab());
  j["hyperparameters"] = model.hyperparameters();
  const Eigen::VectorXd& p = model.parameters();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  if (const auto* tab = dynamic_cast<const TabularModel*>(&model)) {
    std::vector<const TabularModel::ContextKey*> ordered(tab->contexts().size());
    for (const auto& [key, block] : tab->contexts()) ordered[static_cast<std::size_t>(block)] = &key;
    nlohmann::json keys = nlohmann::json::array();
    for (const auto* key : ordered) keys.push_back({{"input_id", key->input_id}, {"window", key->window}});
    j["contexts"] = std::move(keys);
  }
  return j;
}

std::unique_ptr<SequenceModel> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tnt-checkpoint") throw IoError("checkpoint: unrecognized format");
  const Vocab vocab = vocab_from_json(j.at("vocab"));
  const auto raw = j.at("parameters").get<std::vector<double>>();
  const Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  const auto& hp = j.at("hyperparameters");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "tabular") {
    auto model = std::make_unique<TabularModel>(vocab, hp.at("context_order").get<int>());
    std::vector<TabularModel::ContextKey> keys;
    for (const auto& k : j.at("contexts")) {
      keys.push_back({k.at("input_id").get<std::uint64_t>(), k.at("window").get<TokenSeq>()});
    }
    model->restore(keys, params);
    return model;
  }
  if (kind == "tiny-neural") {
    TinyNeuralConfig cfg;
    cfg.embedding_dim = hp.at("embedding_dim").get<int>();
    cfg.hidden_dim = hp.at("hidden_dim").get<int>();
    cfg.context_order = hp.at("context_order").get<int>();
    cfg.init_scale = hp.value("init_scale", 1.0);
    cfg.seed = hp.value("seed", std::uint64_t{0});
    auto model = std::make_unique<TinyNeuralModel>(vocab, cfg);
    model->set_parameters(params);
    return model;
  }
  throw IoError("checkpoint: unknown model kind '" + kind + "'");
}

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace tnt
