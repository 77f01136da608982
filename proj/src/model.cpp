#include "rmen/model.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "rmen/errors.hpp"

namespace rmen {

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw ConfigError("embedding dimension d must be positive");
  if (heads == 0) throw ConfigError("number of heads H must be positive");
  if (head_size == 0) throw ConfigError("head size n must be positive");
  if (memory_slots == 0) throw ConfigError("memory slots N must be at least 1");
  if (mlp_layers == 0) throw ConfigError("MLP layers l must be at least 1");
  if (filters == 0) throw ConfigError("filter count F must be at least 1");
  const std::size_t k = memory_size();
  if (k < 2) throw ConfigError("memory size k = n*H must be at least 2 for layer normalization");
  if (window == 0 || window > k) {
    throw ConfigError("window m must satisfy 1 <= m <= k (m=" + std::to_string(window) + ", k=" + std::to_string(k) +
                      ")");
  }
  if (ablate_mem && k != embedding_dim) {
    throw ConfigError("memory ablation requires k == d (k=" + std::to_string(k) + ", d=" +
                      std::to_string(embedding_dim) + ")");
  }
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_arrays() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"embed.entities", &entities},   {"embed.relations", &relations}, {"embed.positions", &positions},
      {"input.weight", &input_proj},   {"input.bias", &input_bias},     {"attention.query", &query},
      {"attention.key", &key},         {"attention.value", &value},
  };
  for (std::size_t i = 0; i < mlp_weights.size(); ++i) {
    out.emplace_back("mlp.weight." + std::to_string(i), &mlp_weights[i]);
    out.emplace_back("mlp.bias." + std::to_string(i), &mlp_biases[i]);
  }
  out.insert(out.end(), {
                            {"norm.gain", &norm_gain},
                            {"norm.bias", &norm_bias},
                            {"gate.forget.input", &forget_input},
                            {"gate.forget.memory", &forget_memory},
                            {"gate.forget.bias", &forget_bias},
                            {"gate.update.input", &update_input},
                            {"gate.update.memory", &update_memory},
                            {"gate.update.bias", &update_bias},
                            {"memory.initial", &initial_memory},
                            {"decoder.filters", &filters},
                            {"decoder.weights", &output_weights},
                        });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_arrays() const {
  auto mut = const_cast<ModelParams*>(this)->named_arrays();
  return {mut.begin(), mut.end()};
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& [name, t] : out.named_arrays()) t->fill(0.0);
  return out;
}

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

void expect_shape(const Tensor& t, const Shape& shape, const std::string& name) {
  if (t.shape() != shape) {
    throw DimensionError("parameter " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                         shape_string(shape));
  }
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::size_t num_entities, std::size_t num_relations, Rng& rng) {
  config.validate();
  if (num_entities == 0 || num_relations == 0) throw ConfigError("vocabulary must be non-empty");
  const std::size_t d = config.embedding_dim, k = config.memory_size();
  const double embed_bound = std::sqrt(3.0 / static_cast<double>(d));
  ModelParams p;
  p.entities = uniform({num_entities, d}, embed_bound, rng);
  p.relations = uniform({num_relations, d}, embed_bound, rng);
  p.positions = uniform({3, d}, embed_bound, rng);
  p.input_proj = fan_in_uniform({k, d}, d, rng);
  p.input_bias = Tensor({1, k});
  p.query = fan_in_uniform({k, k}, k, rng);
  p.key = fan_in_uniform({k, k}, k, rng);
  p.value = fan_in_uniform({k, k}, k, rng);
  for (std::size_t i = 0; i < config.mlp_layers; ++i) {
    p.mlp_weights.push_back(fan_in_uniform({k, k}, k, rng));
    p.mlp_biases.emplace_back(Shape{1, k});
  }
  p.norm_gain = Tensor({1, k}, 1.0);
  p.norm_bias = Tensor({1, k});
  p.forget_input = fan_in_uniform({k, k}, k, rng);
  p.forget_memory = fan_in_uniform({k, k}, k, rng);
  p.forget_bias = Tensor({1, k});
  p.update_input = fan_in_uniform({k, k}, k, rng);
  p.update_memory = fan_in_uniform({k, k}, k, rng);
  p.update_bias = Tensor({1, k});
  p.initial_memory = uniform({config.memory_slots, k}, 0.1, rng);
  p.filters = fan_in_uniform({config.filters, config.window, 3}, config.window * 3, rng);
  p.output_weights = fan_in_uniform({config.filters, 1}, config.filters, rng);
  return p;
}

std::size_t assign_embeddings(ModelParams& params, const Vocab& vocab, const WordVectors& vectors,
                              EmbeddingSource source, Rng& rng) {
  const std::size_t d = params.entities.cols();
  if (vocab.entities.size() != params.entities.rows() || vocab.relations.size() != params.relations.rows()) {
    throw DimensionError("vocabulary size does not match the embedding tables");
  }
  std::size_t found = 0;
  auto fill = [&](Tensor& table, std::size_t row, const std::string& name, const std::string& key) {
    std::optional<std::vector<double>> v;
    if (source == EmbeddingSource::kAverageTokens) {
      v = average_known_tokens(name, vectors, d);
    } else if (auto it = vectors.find(key); it != vectors.end()) {
      if (it->second.size() != d) throw DimensionError("pretrained vector for '" + key + "' has the wrong size");
      v = it->second;
    }
    found += v ? 1 : 0;
    const std::vector<double> row_values = v ? *std::move(v) : random_fallback(d, rng);
    std::copy(row_values.begin(), row_values.end(), table.data().begin() + static_cast<std::ptrdiff_t>(row * d));
  };
  for (std::size_t e = 0; e < vocab.entities.size(); ++e) {
    fill(params.entities, e, vocab.entities.name(e), vocab.entities.name(e));
  }
  for (std::size_t r = 0; r < vocab.relations.size(); ++r) {
    fill(params.relations, r, vocab.relations.name(r), std::string(kRelationTokenPrefix) + vocab.relations.name(r));
  }
  return found;
}

void check_shapes(const ModelParams& p, const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.embedding_dim, k = config.memory_size();
  if (p.entities.rank() != 2 || p.entities.cols() != d) throw DimensionError("entity embeddings must be [#E x d]");
  if (p.relations.rank() != 2 || p.relations.cols() != d) {
    throw DimensionError("relation embeddings must be [#R x d]");
  }
  expect_shape(p.positions, {3, d}, "embed.positions");
  expect_shape(p.input_proj, {k, d}, "input.weight");
  expect_shape(p.input_bias, {1, k}, "input.bias");
  expect_shape(p.query, {k, k}, "attention.query");
  expect_shape(p.key, {k, k}, "attention.key");
  expect_shape(p.value, {k, k}, "attention.value");
  if (p.mlp_weights.size() != config.mlp_layers || p.mlp_biases.size() != config.mlp_layers) {
    throw DimensionError("expected " + std::to_string(config.mlp_layers) + " MLP layers");
  }
  for (std::size_t i = 0; i < config.mlp_layers; ++i) {
    expect_shape(p.mlp_weights[i], {k, k}, "mlp.weight");
    expect_shape(p.mlp_biases[i], {1, k}, "mlp.bias");
  }
  expect_shape(p.norm_gain, {1, k}, "norm.gain");
  expect_shape(p.norm_bias, {1, k}, "norm.bias");
  expect_shape(p.forget_input, {k, k}, "gate.forget.input");
  expect_shape(p.forget_memory, {k, k}, "gate.forget.memory");
  expect_shape(p.forget_bias, {1, k}, "gate.forget.bias");
  expect_shape(p.update_input, {k, k}, "gate.update.input");
  expect_shape(p.update_memory, {k, k}, "gate.update.memory");
  expect_shape(p.update_bias, {1, k}, "gate.update.bias");
  expect_shape(p.initial_memory, {config.memory_slots, k}, "memory.initial");
  expect_shape(p.filters, {config.filters, config.window, 3}, "decoder.filters");
  expect_shape(p.output_weights, {config.filters, 1}, "decoder.weights");
}

BoundModel::BoundModel(Tape& tape, const ModelParams& params, const ModelConfig& config, bool requires_grad)
    : config_(config), tape_(&tape) {
  check_shapes(params, config);
  for (const auto& [name, t] : params.named_arrays()) leaves_.push_back(tape.borrow(*t, requires_grad));
  bind();
}

BoundModel::BoundModel(const ModelConfig& config, std::span<const Var> leaves)
    : config_(config), leaves_(leaves.begin(), leaves.end()) {
  config_.validate();
  if (leaves_.size() != 19 + 2 * config_.mlp_layers) throw DimensionError("wrong number of parameter leaves");
  tape_ = leaves_.front().tape;
  bind();
}

void BoundModel::bind() {
  std::size_t i = 0;
  auto next = [&] { return leaves_.at(i++); };
  entities = next();
  relations = next();
  positions = next();
  input_proj_t = transpose(next());
  input_bias = next();
  query_t = transpose(next());
  key_t = transpose(next());
  value_t = transpose(next());
  for (std::size_t j = 0; j < config_.mlp_layers; ++j) {
    mlp_weights_t.push_back(transpose(next()));
    mlp_biases.push_back(next());
  }
  norm_gain = next();
  norm_bias = next();
  forget_input_t = transpose(next());
  forget_memory_t = transpose(next());
  forget_bias = next();
  update_input_t = transpose(next());
  update_memory_t = transpose(next());
  update_bias = next();
  initial_memory = next();
  filters = next();
  output_weights = next();
}

void accumulate_gradients(const BoundModel& model, ModelParams& grads) {
  auto arrays = grads.named_arrays();
  const auto& leaves = model.leaves();
  if (arrays.size() != leaves.size()) throw DimensionError("gradient layout does not match the bound model");
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Tensor& g = model.tape().grad(leaves[i]);
    Tensor& dst = *arrays[i].second;
    if (dst.shape() != g.shape()) throw DimensionError("gradient shape mismatch for " + arrays[i].first);
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  }
}

std::array<Var, 3> input_sequence(const BoundModel& model, const Triple& triple) {
  const std::array<Var, 3> embedded = {gather_row(model.entities, triple.s), gather_row(model.relations, triple.r),
                                       gather_row(model.entities, triple.o)};
  std::array<Var, 3> out;
  for (std::size_t t = 0; t < 3; ++t) {
    Var v = embedded[t];
    if (!model.config().ablate_pos) v = v + gather_row(model.positions, t);
    out[t] = matmul(v, model.input_proj_t) + model.input_bias;
  }
  return out;
}

AttentionResult attention_update(const BoundModel& model, Var memory, Var input) {
  const auto& cfg = model.config();
  const std::size_t n = cfg.head_size;
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));

  Var queries = matmul(memory, model.query_t);
  const std::array<Var, 2> key_parts = {matmul(memory, model.key_t), matmul(input, model.key_t)};
  const std::array<Var, 2> value_parts = {matmul(memory, model.value_t), matmul(input, model.value_t)};
  Var keys = concat_rows(key_parts);      // [(N+1) x k], last row from the input
  Var values = concat_rows(value_parts);

  AttentionResult result;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Var q = slice_cols(queries, h * n, n);
    Var kh = slice_cols(keys, h * n, n);
    Var vh = slice_cols(values, h * n, n);
    Var alpha = softmax_rows(scale(matmul(q, transpose(kh)), inv_sqrt_n));
    heads.push_back(matmul(alpha, vh));
    result.weights.push_back(alpha);
  }
  result.memory_hat = heads.size() == 1 ? heads.front() : concat_cols(heads);
  return result;
}

MemoryStep memory_step(const BoundModel& model, Var memory, Var input) {
  const auto& cfg = model.config();
  const std::size_t slots = cfg.memory_slots;

  AttentionResult attended = attention_update(model, memory, input);
  Var z = attended.memory_hat + tile_rows(input, slots);

  Var hidden = z;
  for (std::size_t j = 0; j < cfg.mlp_layers; ++j) {
    hidden = matmul(hidden, model.mlp_weights_t[j]) + tile_rows(model.mlp_biases[j], slots);
    if (j + 1 < cfg.mlp_layers) hidden = relu(hidden);
  }
  Var candidate = layer_norm(hidden + z, model.norm_gain, model.norm_bias);

  Var memory_tanh = tanh(memory);
  Var forget = sigmoid(tile_rows(matmul(input, model.forget_input_t) + model.forget_bias, slots) +
                       matmul(memory_tanh, model.forget_memory_t));
  Var update = sigmoid(tile_rows(matmul(input, model.update_input_t) + model.update_bias, slots) +
                       matmul(memory_tanh, model.update_memory_t));
  Var next = forget * memory + update * tanh(candidate);

  return {mean_rows(next), next, std::move(attended.weights)};
}

Encoding encode_triple(const BoundModel& model, const Triple& triple) {
  const auto inputs = input_sequence(model, triple);
  Encoding enc;
  Var memory = model.initial_memory;
  for (std::size_t t = 0; t < 3; ++t) {
    MemoryStep step = memory_step(model, memory, inputs[t]);
    enc.outputs[t] = step.output;
    memory = step.next_memory;
    enc.attention.insert(enc.attention.end(), step.attention.begin(), step.attention.end());
  }
  return enc;
}

Var decode_score(const BoundModel& model, const std::array<Var, 3>& columns) {
  const std::array<Var, 3> transposed = {transpose(columns[0]), transpose(columns[1]), transpose(columns[2])};
  Var stacked = concat_cols(transposed);  // [k x 3]
  Var pooled = max_pool_rows(relu(conv_columns(stacked, model.filters)));  // [F x 1]
  return matmul(transpose(pooled), model.output_weights);
}

Var score(const BoundModel& model, const Triple& triple) {
  if (model.config().ablate_mem) {
    return decode_score(model, {gather_row(model.entities, triple.s), gather_row(model.relations, triple.r),
                                gather_row(model.entities, triple.o)});
  }
  return decode_score(model, encode_triple(model, triple).outputs);
}

double score_triple(const ModelParams& params, const ModelConfig& config, const Triple& triple) {
  Tape tape;
  BoundModel model(tape, params, config, false);
  return score(model, triple).value().item();
}

std::vector<double> score_batch(const ModelParams& params, const ModelConfig& config, std::span<const Triple> triples,
                                std::size_t threads) {
  std::vector<double> out(triples.size());
  if (triples.empty()) return out;
  check_shapes(params, config);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = score_triple(params, config, triples[i]);
  };
  threads = std::max<std::size_t>(1, std::min(threads, triples.size()));
  if (threads == 1) {
    work(0, triples.size());
    return out;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (triples.size() + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = w * chunk, end = std::min(triples.size(), begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        work(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace rmen
