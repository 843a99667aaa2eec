#include "price/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace price {

namespace {

constexpr std::string_view kCheckpointMagic = "PRICECKP";

Matrix token_matrix(const std::vector<std::vector<double>>& rows, std::size_t width) {
  Matrix m(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw ModelError("feature token has width " + std::to_string(rows[r].size()) + ", expected " + std::to_string(width));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.data().begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  if (feature_dim != kFeatureBins) {
    throw ModelError("feature_dim must be " + std::to_string(kFeatureBins) + ", got " + std::to_string(feature_dim));
  }
  if (embed_dim == 0 || heads == 0) throw ModelError("embed_dim and heads must be at least 1");
  if (embed_dim % heads != 0) {
    throw ModelError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (blocks_per_stage == 0) throw ModelError("blocks_per_stage must be at least 1");
  if (std::any_of(mlp_hidden.begin(), mlp_hidden.end(), [](std::size_t w) { return w == 0; })) {
    throw ModelError("mlp_hidden widths must be at least 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ModelError("dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json doc;
  doc["feature_dim"] = feature_dim;
  doc["embed_dim"] = embed_dim;
  doc["heads"] = heads;
  doc["blocks_per_stage"] = blocks_per_stage;
  doc["mlp_hidden"] = mlp_hidden;
  doc["dropout"] = dropout;
  doc["seed"] = seed;
  return doc.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig config;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_object()) throw ModelError("model config must be a JSON object");
    config.feature_dim = doc.value("feature_dim", config.feature_dim);
    config.embed_dim = doc.value("embed_dim", config.embed_dim);
    config.heads = doc.value("heads", config.heads);
    config.blocks_per_stage = doc.value("blocks_per_stage", config.blocks_per_stage);
    config.mlp_hidden = doc.value("mlp_hidden", config.mlp_hidden);
    config.dropout = doc.value("dropout", config.dropout);
    config.seed = doc.value("seed", config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model config: ") + e.what());
  }
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// Attention

Tensor attention_block(Tape& tape, const Tensor& tokens, const AttentionBlock& block, double dropout_p) {
  const auto heads = block.query.size();
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(block.query.front().cols()));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const auto q = matmul(tape, tokens, block.query[i]);
    const auto k = matmul(tape, tokens, block.key[i]);
    const auto v = matmul(tape, tokens, block.value[i]);
    const auto weights = row_softmax(tape, scale(tape, matmul(tape, q, transpose(tape, k)), scale_factor));
    head_outputs.push_back(matmul(tape, weights, v));
  }
  auto y = matmul(tape, concat_cols(tape, head_outputs), block.output);
  y = dropout(tape, y, dropout_p);
  const auto x1 =
      add_row(tape, mul_row(tape, layer_norm(tape, add(tape, tokens, y)), block.norm1_gain), block.norm1_bias);

  auto f = relu(tape, add_row(tape, matmul(tape, x1, block.ffn_in), block.ffn_in_bias));
  f = add_row(tape, matmul(tape, f, block.ffn_out), block.ffn_out_bias);
  return add_row(tape, mul_row(tape, layer_norm(tape, add(tape, x1, f)), block.norm2_gain), block.norm2_bias);
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const auto d = config_.embed_dim;

  join_weight_ = xavier(kJoinTokenWidth, d, "embed.join.weight", rng);
  join_bias_ = zeros(1, d, "embed.join.bias");
  filter_weight_ = xavier(kFilterTokenWidth, d, "embed.filter.weight", rng);
  filter_bias_ = zeros(1, d, "embed.filter.bias");
  table_weight_ = xavier(kTableTokenWidth, d, "embed.table.weight", rng);
  table_bias_ = zeros(1, d, "embed.table.bias");
  special_ = xavier(1, d, "special", rng);

  for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) joining_.push_back(make_block("joining." + std::to_string(b), rng));
  for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
    filtering_.push_back(make_block("filtering." + std::to_string(b), rng));
  }

  auto width = d + kQueryFeatureWidth;
  std::vector<std::size_t> widths = config_.mlp_hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    head_weights_.push_back(xavier(width, widths[i], "head." + std::to_string(i) + ".weight", rng));
    head_biases_.push_back(zeros(1, widths[i], "head." + std::to_string(i) + ".bias"));
    width = widths[i];
  }
}

Tensor& Model::add_parameter(Matrix value, std::string name) {
  parameters_.push_back(Tensor::parameter(std::move(value), std::move(name)));
  return parameters_.back();
}

Tensor Model::xavier(std::size_t rows, std::size_t cols, std::string name, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(-limit, limit);
  return add_parameter(std::move(m), std::move(name));
}

Tensor Model::zeros(std::size_t rows, std::size_t cols, std::string name) {
  return add_parameter(Matrix(rows, cols), std::move(name));
}

Tensor Model::ones(std::size_t rows, std::size_t cols, std::string name) {
  return add_parameter(Matrix(rows, cols, 1.0), std::move(name));
}

AttentionBlock Model::make_block(const std::string& prefix, Rng& rng) {
  const auto d = config_.embed_dim;
  const auto dk = config_.head_dim();
  AttentionBlock block;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const auto head = prefix + ".head" + std::to_string(h);
    block.query.push_back(xavier(d, dk, head + ".query", rng));
    block.key.push_back(xavier(d, dk, head + ".key", rng));
    block.value.push_back(xavier(d, dk, head + ".value", rng));
  }
  block.output = xavier(config_.heads * dk, d, prefix + ".output", rng);
  block.norm1_gain = ones(1, d, prefix + ".norm1.gain");
  block.norm1_bias = zeros(1, d, prefix + ".norm1.bias");
  block.ffn_in = xavier(d, d, prefix + ".ffn.in.weight", rng);
  block.ffn_in_bias = zeros(1, d, prefix + ".ffn.in.bias");
  block.ffn_out = xavier(d, d, prefix + ".ffn.out.weight", rng);
  block.ffn_out_bias = zeros(1, d, prefix + ".ffn.out.bias");
  block.norm2_gain = ones(1, d, prefix + ".norm2.gain");
  block.norm2_bias = zeros(1, d, prefix + ".norm2.bias");
  return block;
}

std::size_t Model::parameter_count() const {
  return std::accumulate(parameters_.begin(), parameters_.end(), std::size_t{0},
                         [](std::size_t n, const Tensor& t) { return n + t.value().size(); });
}

const AttentionBlock& Model::block(Stage stage, std::size_t index) const {
  return (stage == Stage::joining ? joining_ : filtering_).at(index);
}

Model Model::clone() const {
  Model copy(config_);
  for (std::size_t i = 0; i < parameters_.size(); ++i) copy.parameters_[i].mutable_value() = parameters_[i].value();
  copy.meta_ = meta_;
  return copy;
}

void Model::round_to_float() {
  for (auto& p : parameters_) {
    for (auto& v : p.mutable_value().data()) v = static_cast<double>(static_cast<float>(v));
  }
}

Tensor Model::embed(Tape& tape, const std::vector<std::vector<double>>& rows, std::size_t width, const Tensor& weight,
                    const Tensor& bias) const {
  return add_row(tape, matmul(tape, Tensor::constant(token_matrix(rows, width)), weight), bias);
}

Tensor Model::forward(Tape& tape, const FeatureBundle& features) const {
  const double p = config_.dropout;

  std::vector<Tensor> joining_input{special_};
  if (!features.join_tokens.empty()) {
    joining_input.push_back(embed(tape, features.join_tokens, kJoinTokenWidth, join_weight_, join_bias_));
  }
  auto x = concat_rows(tape, joining_input);
  for (const auto& block : joining_) x = attention_block(tape, x, block, p);

  std::vector<Tensor> filtering_input{slice_rows(tape, x, 0, 1)};
  if (!features.filter_tokens.empty()) {
    filtering_input.push_back(embed(tape, features.filter_tokens, kFilterTokenWidth, filter_weight_, filter_bias_));
  }
  if (x.rows() > 1) filtering_input.push_back(slice_rows(tape, x, 1, x.rows() - 1));
  if (!features.table_tokens.empty()) {
    filtering_input.push_back(embed(tape, features.table_tokens, kTableTokenWidth, table_weight_, table_bias_));
  }
  auto u = concat_rows(tape, filtering_input);
  for (const auto& block : filtering_) u = attention_block(tape, u, block, p);

  const std::vector<Tensor> head_input{
      slice_rows(tape, u, 0, 1), Tensor::constant(Matrix::row(features.query_features))};
  auto y = concat_cols(tape, head_input);
  for (std::size_t i = 0; i < head_weights_.size(); ++i) {
    y = add_row(tape, matmul(tape, y, head_weights_[i]), head_biases_[i]);
    if (i + 1 < head_weights_.size()) y = dropout(tape, relu(tape, y), p);
  }
  return y;
}

double Model::predict_log_card(const FeatureBundle& features) const {
  Tape tape(false);
  return std::max(0.0, forward(tape, features).item());
}

Tensor mse_loss(Tape& tape, const Tensor& predictions, const std::vector<double>& targets) {
  if (targets.empty()) throw ModelError("empty batch");
  if (predictions.rows() != targets.size() || predictions.cols() != 1) {
    throw ShapeError("mse_loss: predictions " + shape_string(predictions.value()) + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  const auto target = Tensor::constant(Matrix(targets.size(), 1, targets));
  return mean(tape, square(tape, sub(tape, target, predictions)));
}

double estimate_cardinality(const Model& model, const QuerySpec& query, const Catalog& catalog, const StatsStore& stats) {
  return std::max(1.0, std::exp(model.predict_log_card(featurize(query, catalog, stats))));
}

// ---------------------------------------------------------------------------
// Training

std::vector<TrainingSample> prepare_samples(const TrainingCorpus& corpus, bool include_subqueries) {
  if (corpus.catalog == nullptr || corpus.stats == nullptr) throw ModelError("training corpus lacks catalog or stats");
  const auto& catalog = *corpus.catalog;
  const auto& stats = *corpus.stats;
  std::vector<TrainingSample> samples;
  for (const auto& record : corpus.records) {
    const auto query = parse_query(record.sql, catalog);
    if (include_subqueries && !record.subs.empty()) {
      const auto subs = sub_queries(query, catalog);
      for (const auto& sub : subs) {
        const auto key = table_set_key(sub.tables, catalog);
        const auto it = std::find_if(record.subs.begin(), record.subs.end(), [&](const auto& s) { return s.first == key; });
        if (it == record.subs.end()) throw DataError("workload record lacks sub-query " + key + ": " + record.sql);
        samples.push_back({featurize(sub, catalog, stats), std::log(std::max<double>(1.0, static_cast<double>(it->second)))});
      }
    } else {
      samples.push_back({featurize(query, catalog, stats), std::log(std::max<double>(1.0, static_cast<double>(record.card)))});
    }
  }
  return samples;
}

std::string corpus_fingerprint(const std::vector<TrainingCorpus>& corpora) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&](std::string_view bytes) {
    for (const auto c : bytes) {
      hash ^= static_cast<unsigned char>(c);
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& corpus : corpora) {
    if (corpus.catalog != nullptr) feed(corpus.catalog->name());
    feed("\x1e");
    for (const auto& r : corpus.records) {
      feed(r.sql);
      feed("\x1f");
      feed(std::to_string(r.card));
      feed("\n");
    }
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

TrainOptions TrainOptions::finetune_defaults() const {
  auto copy = *this;
  copy.learning_rate *= 0.5;
  return copy;
}

std::vector<double> fit(Model& model, std::vector<TrainingSample> samples, const TrainOptions& options) {
  std::vector<double> history;
  if (options.epochs == 0) return history;
  if (samples.empty()) throw ModelError("no training samples");
  if (options.batch_size == 0) throw ModelError("batch size must be at least 1");

  Adam adam(model.parameters(), AdamOptions{.weight_decay = options.weight_decay});
  Rng order_rng(options.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    order_rng.shuffle(order);
    const double lr = options.learning_rate * options.schedule.multiplier(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size, ++batch_index) {
      const auto end = std::min(order.size(), begin + options.batch_size);
      Tape tape(true, mix_seed(options.seed, batch_index));
      std::vector<Tensor> predictions;
      std::vector<double> targets;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& sample = samples[order[i]];
        predictions.push_back(model.forward(tape, sample.features));
        targets.push_back(sample.target);
      }
      const auto loss = mse_loss(tape, concat_rows(tape, predictions), targets);
      if (!std::isfinite(loss.item())) {
        throw ModelError("non-finite loss at batch " + std::to_string(batch_index) + " (epoch " + std::to_string(epoch) + ")");
      }
      adam.zero_grad();
      tape.backward(loss);
      adam.step(lr);
      loss_sum += loss.item();
      ++batches;
    }
    history.push_back(loss_sum / static_cast<double>(batches));
    if (options.on_epoch) options.on_epoch(epoch, history.back());
  }
  model.meta().epochs += options.epochs;
  model.meta().final_loss = history.back();
  return history;
}

TrainResult train(const ModelConfig& config, const std::vector<TrainingCorpus>& corpora, const TrainOptions& options) {
  if (corpora.empty()) throw ModelError("training needs at least one corpus");
  std::vector<TrainingSample> samples;
  for (const auto& corpus : corpora) {
    auto part = prepare_samples(corpus, options.include_subqueries);
    std::move(part.begin(), part.end(), std::back_inserter(samples));
  }
  Model model(config);
  auto history = fit(model, std::move(samples), options);
  model.meta().corpus_fingerprint = corpus_fingerprint(corpora);
  return {std::move(model), std::move(history)};
}

TrainResult finetune(const Model& pretrained, const TrainingCorpus& corpus, const TrainOptions& options) {
  auto model = pretrained.clone();
  auto history = fit(model, prepare_samples(corpus, options.include_subqueries), options);
  model.meta().corpus_fingerprint = corpus_fingerprint({corpus});
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t checkpoint_payload_bytes(const Model& model) { return 4 * static_cast<std::uint64_t>(model.parameter_count()); }

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["config"] = nlohmann::ordered_json::parse(model.config().to_json());
  header["meta"] = {{"epochs", model.meta().epochs},
                    {"final_loss", model.meta().final_loss},
                    {"corpus_fingerprint", model.meta().corpus_fingerprint}};
  header["parameter_count"] = model.parameter_count();
  header["payload_bytes"] = checkpoint_payload_bytes(model);
  auto& layout = header["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : model.parameters()) layout.push_back({{"name", p.name()}, {"rows", p.rows()}, {"cols", p.cols()}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + path.string());
  io::Writer w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.string(header.dump());
  w.u64(model.parameter_count());
  for (const auto& p : model.parameters()) {
    for (const double v : p.value().data()) w.f32(static_cast<float>(v));
  }
  out.flush();
  if (!out) throw ModelError("write failed for checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  try {
    io::Reader r(in, "checkpoint");
    r.expect_magic(kCheckpointMagic);
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
      throw ModelError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
    }
    const auto header = nlohmann::json::parse(r.string(1U << 26U));
    Model model(ModelConfig::from_json(header.at("config").dump()));
    const auto& layout = header.at("parameters");
    if (layout.size() != model.parameters().size()) throw ModelError("checkpoint parameter layout does not match its config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& p = model.parameters()[i];
      if (layout[i].at("name").get<std::string>() != p.name() || layout[i].at("rows").get<std::size_t>() != p.rows() ||
          layout[i].at("cols").get<std::size_t>() != p.cols()) {
        throw ModelError("checkpoint parameter '" + layout[i].at("name").get<std::string>() + "' does not match its config");
      }
    }
    if (r.u64() != model.parameter_count()) throw ModelError("corrupt checkpoint: parameter count mismatch");
    for (const auto& p : model.parameters()) {
      auto handle = p;
      for (auto& v : handle.mutable_value().data()) v = static_cast<double>(r.f32());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ModelError("corrupt checkpoint: trailing bytes");
    const auto& meta = header.at("meta");
    model.meta().epochs = meta.at("epochs").get<std::size_t>();
    model.meta().final_loss = meta.at("final_loss").get<double>();
    model.meta().corpus_fingerprint = meta.at("corpus_fingerprint").get<std::string>();
    return model;
  } catch (const DataError& e) {
    throw ModelError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("corrupt checkpoint: ") + e.what());
  }
}

}  // namespace price
