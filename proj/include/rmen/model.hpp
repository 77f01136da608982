#pragma once

// R-MeN scorer: each triple (s, r, o) becomes three projected input vectors
// that are fed one at a time into a relational memory (multi-head attention
// over the memory slots plus the current input, an MLP with residual and
// layer norm, then LSTM-style gating). The three encoded vectors form a
// [k x 3] matrix scored by a convolution + ReLU + per-filter max-pool +
// linear layer.
//
// Row-vector convention throughout: inputs, encoded vectors and bias
// vectors are [1 x k]; memory is [N x k] with one slot per row; a projection
// stored as [out x in] is applied as v * W^T.

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rmen/autodiff.hpp"
#include "rmen/kg_data.hpp"

namespace rmen {

struct ModelConfig {
  std::size_t embedding_dim = 50;  // d
  std::size_t heads = 1;           // H
  std::size_t head_size = 128;     // n
  std::size_t memory_slots = 1;    // N
  std::size_t mlp_layers = 2;      // l
  std::size_t window = 1;          // m
  std::size_t filters = 128;       // F
  bool ablate_pos = false;         // drop positional embeddings
  bool ablate_mem = false;         // score [v_s, v_r, v_o] directly

  // k = n * H
  std::size_t memory_size() const { return heads * head_size; }
  // Throws ConfigError on inconsistent settings.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
  Tensor entities;    // [#E x d]
  Tensor relations;   // [#R x d]
  Tensor positions;   // [3 x d], one row per triple position
  Tensor input_proj;  // W [k x d]
  Tensor input_bias;  // b [1 x k]
  // Attention projections stacked over heads: rows [h*n, (h+1)*n) hold the
  // [n x k] matrix of head h.
  Tensor query;  // [k x k]
  Tensor key;    // [k x k]
  Tensor value;  // [k x k]
  std::vector<Tensor> mlp_weights;  // l x [k x k]
  std::vector<Tensor> mlp_biases;   // l x [1 x k]
  Tensor norm_gain;  // [1 x k]
  Tensor norm_bias;  // [1 x k]
  Tensor forget_input;   // W_f [k x k]
  Tensor forget_memory;  // U_f [k x k]
  Tensor forget_bias;    // b_f [1 x k]
  Tensor update_input;   // W_i [k x k]
  Tensor update_memory;  // U_i [k x k]
  Tensor update_bias;    // b_i [1 x k]
  Tensor initial_memory;  // M0 [N x k]
  Tensor filters;         // Omega [F x m x 3]
  Tensor output_weights;  // w [F x 1]

  // Every array with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named_arrays();
  std::vector<std::pair<std::string, const Tensor*>> named_arrays() const;

  // Same layout with every entry set to zero.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams&) const = default;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for projections and filters,
// Uniform(-sqrt(3/d), sqrt(3/d)) for embeddings, zero biases, unit norm gain,
// small random initial memory.
ModelParams init_params(const ModelConfig& config, std::size_t num_entities, std::size_t num_relations, Rng& rng);

enum class EmbeddingSource {
  kAverageTokens,  // mean of underscore-separated word vectors
  kExactNames,     // rows keyed by full entity name / kRelationTokenPrefix + relation name
};

// Overwrites entity and relation rows from `vectors`. Names without a usable
// vector get average_init's random fallback. Returns the number of rows
// taken from `vectors`.
std::size_t assign_embeddings(ModelParams& params, const Vocab& vocab, const WordVectors& vectors,
                              EmbeddingSource source, Rng& rng);

// Throws DimensionError if any array disagrees with `config`.
void check_shapes(const ModelParams& params, const ModelConfig& config);

// Model parameters attached to a tape as leaves.
class BoundModel {
 public:
  BoundModel(Tape& tape, const ModelParams& params, const ModelConfig& config, bool requires_grad);
  // `leaves` must follow ModelParams::named_arrays() order.
  BoundModel(const ModelConfig& config, std::span<const Var> leaves);

  const ModelConfig& config() const { return config_; }
  Tape& tape() const { return *tape_; }
  const std::vector<Var>& leaves() const { return leaves_; }

  Var entities, relations, positions, input_bias;
  Var input_proj_t, query_t, key_t, value_t;
  std::vector<Var> mlp_weights_t, mlp_biases;
  Var norm_gain, norm_bias;
  Var forget_input_t, forget_memory_t, forget_bias;
  Var update_input_t, update_memory_t, update_bias;
  Var initial_memory, filters, output_weights;

 private:
  void bind();

  ModelConfig config_;
  Tape* tape_ = nullptr;
  std::vector<Var> leaves_;
};

// Gradients of the tape's last backward root, added into `grads`
// (which must have the layout of the bound params).
void accumulate_gradients(const BoundModel& model, ModelParams& grads);

// x_t = W (v_t + p_t) + b for the subject, relation and object.
std::array<Var, 3> input_sequence(const BoundModel& model, const Triple& triple);

struct AttentionResult {
  Var memory_hat;               // [N x k], heads concatenated
  std::vector<Var> weights;     // per head, [N x (N+1)]; column N is the input
};

AttentionResult attention_update(const BoundModel& model, Var memory, Var input);

struct MemoryStep {
  Var output;       // y_t [1 x k]
  Var next_memory;  // [N x k]
  std::vector<Var> attention;
};

MemoryStep memory_step(const BoundModel& model, Var memory, Var input);

struct Encoding {
  std::array<Var, 3> outputs;
  std::vector<Var> attention;  // all heads of all three steps
};

// Runs the three inputs through the memory, starting from M0 each time.
Encoding encode_triple(const BoundModel& model, const Triple& triple);

// max_pool(ReLU(conv([c1, c2, c3], Omega)))^T w with each column [1 x k].
Var decode_score(const BoundModel& model, const std::array<Var, 3>& columns);

// Full pipeline; the memory-ablated variant decodes the raw embeddings.
Var score(const BoundModel& model, const Triple& triple);

double score_triple(const ModelParams& params, const ModelConfig& config, const Triple& triple);

// Scores are bit-identical to score_triple; `threads` > 1 splits the batch
// across worker threads that share `params` read-only.
std::vector<double> score_batch(const ModelParams& params, const ModelConfig& config,
                                std::span<const Triple> triples, std::size_t threads = 1);

}  // namespace rmen
