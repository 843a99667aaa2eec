#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "price/catalog.hpp"
#include "price/featurizer.hpp"
#include "price/query.hpp"
#include "price/stats.hpp"
#include "price/tensor.hpp"
#include "price/workload.hpp"

namespace price {

/// Raised for invalid configurations, unusable checkpoints and diverging training.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t feature_dim = kFeatureBins;
  std::size_t embed_dim = 256;
  std::size_t heads = 8;
  std::size_t blocks_per_stage = 1;
  std::vector<std::size_t> mlp_hidden{256, 256};
  double dropout = 0.1;
  std::uint64_t seed = 42;

  std::size_t head_dim() const { return embed_dim / heads; }
  /// Throws ModelError on an unusable combination.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One transformer encoder block: multi-head self-attention with an output
/// projection, then a position-wise feed-forward layer, each followed by a
/// residual connection and an affine layer norm.
struct AttentionBlock {
  std::vector<Tensor> query;  // per head, d x d_k
  std::vector<Tensor> key;
  std::vector<Tensor> value;
  Tensor output;  // (H * d_k) x d
  Tensor norm1_gain, norm1_bias;
  Tensor ffn_in, ffn_in_bias;
  Tensor ffn_out, ffn_out_bias;
  Tensor norm2_gain, norm2_bias;
};

/// n x d tokens in, n x d tokens out. Dropout (probability `dropout`) follows
/// the output projection when the tape is in training mode.
Tensor attention_block(Tape& tape, const Tensor& tokens, const AttentionBlock& block, double dropout);

struct TrainingMeta {
  std::size_t epochs = 0;
  double final_loss = 0.0;
  std::string corpus_fingerprint;
};

class Model {
 public:
  enum class Stage : std::uint8_t { joining, filtering };

  /// Xavier-uniform weights, zero biases, unit norm gains, all drawn from `config.seed`.
  explicit Model(ModelConfig config);
  // Copies would share parameter storage; use clone().
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  /// Every trainable tensor in declared (checkpoint) order.
  const std::vector<Tensor>& parameters() const { return parameters_; }
  std::size_t parameter_count() const;
  const AttentionBlock& block(Stage stage, std::size_t index) const;

  TrainingMeta& meta() { return meta_; }
  const TrainingMeta& meta() const { return meta_; }

  /// Independent copy; training the copy leaves this model untouched.
  Model clone() const;
  /// Rounds every parameter to the nearest 32-bit float.
  void round_to_float();

  /// Unclamped natural-log cardinality as a 1x1 tensor on `tape`.
  Tensor forward(Tape& tape, const FeatureBundle& features) const;
  /// Eval-mode log cardinality, clamped to >= 0.
  double predict_log_card(const FeatureBundle& features) const;

 private:
  Tensor& add_parameter(Matrix value, std::string name);
  Tensor xavier(std::size_t rows, std::size_t cols, std::string name, Rng& rng);
  Tensor zeros(std::size_t rows, std::size_t cols, std::string name);
  Tensor ones(std::size_t rows, std::size_t cols, std::string name);
  AttentionBlock make_block(const std::string& prefix, Rng& rng);
  Tensor embed(Tape& tape, const std::vector<std::vector<double>>& rows, std::size_t width, const Tensor& weight,
               const Tensor& bias) const;

  ModelConfig config_;
  std::vector<Tensor> parameters_;
  Tensor join_weight_, join_bias_;
  Tensor filter_weight_, filter_bias_;
  Tensor table_weight_, table_bias_;
  Tensor special_;
  std::vector<AttentionBlock> joining_;
  std::vector<AttentionBlock> filtering_;
  std::vector<Tensor> head_weights_;
  std::vector<Tensor> head_biases_;
  TrainingMeta meta_;
};

/// (1/k) * sum (target - prediction)^2 over a k x 1 prediction column.
Tensor mse_loss(Tape& tape, const Tensor& predictions, const std::vector<double>& targets);

/// Cardinality estimate max(1, exp(log card)) for a parsed query.
double estimate_cardinality(const Model& model, const QuerySpec& query, const Catalog& catalog, const StatsStore& stats);

/// One database's share of the training data.
struct TrainingCorpus {
  const Catalog* catalog = nullptr;
  const StatsStore* stats = nullptr;
  std::vector<WorkloadRecord> records;
};

struct TrainingSample {
  FeatureBundle features;
  double target = 0.0;  // ln(max(1, card))
};

/// Featurizes every record; with `include_subqueries`, each labeled connected
/// sub-query becomes a sample as well.
std::vector<TrainingSample> prepare_samples(const TrainingCorpus& corpus, bool include_subqueries = false);

/// Stable FNV-1a digest of the records (sql + card) of all corpora.
std::string corpus_fingerprint(const std::vector<TrainingCorpus>& corpora);

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 2.85e-5;
  double weight_decay = 5e-5;
  StepLR schedule{};
  std::uint64_t seed = 42;
  bool include_subqueries = false;
  /// Called after every epoch with (epoch index, mean loss).
  std::function<void(std::size_t, double)> on_epoch;

  /// Same loop with half the learning rate.
  TrainOptions finetune_defaults() const;
};

struct TrainResult {
  Model model;
  std::vector<double> history;  // mean batch loss per epoch
};

/// Runs the training loop on `model` in place over pre-featurized samples.
std::vector<double> fit(Model& model, std::vector<TrainingSample> samples, const TrainOptions& options);

/// Pools and shuffles all corpora, trains a fresh model.
TrainResult train(const ModelConfig& config, const std::vector<TrainingCorpus>& corpora, const TrainOptions& options);

/// Continues training a copy of `pretrained` on one corpus.
TrainResult finetune(const Model& pretrained, const TrainingCorpus& corpus, const TrainOptions& options);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Payload size in bytes: 4 per parameter value.
std::uint64_t checkpoint_payload_bytes(const Model& model);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace price
