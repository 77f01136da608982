#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <tuple>
#include <vector>

#include "rmen/autodiff.hpp"
#include "rmen/kg_data.hpp"
#include "rmen/model.hpp"

namespace rmen {

// sum_i log(1 + exp(-t_i * f_i)), overflow safe.
double softplus_loss(std::span<const double> scores, std::span<const int> labels);
// Same loss on the tape; `scores` holds one element per label.
Var softplus_loss(Var scores, std::span<const int> labels);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first;   // m, one per parameter array
  std::vector<Tensor> second;  // v
  std::uint64_t step = 0;
};

// Bias-corrected Adam. Moment buffers are created on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamOptions& options);
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamOptions& options);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t negatives = 1;  // corrupted triples per positive
  std::uint64_t seed = 1;
  std::size_t epoch_cap = 30;

  void validate() const;
};

// Training positives plus what negative sampling needs.
struct TrainingData {
  std::vector<Triple> positives;
  std::size_t num_entities = 0;
  RelationStats stats;
  TripleSet known_valid;
};

TrainingData make_training_data(std::vector<Triple> positives, std::size_t num_entities, std::size_t num_relations);

struct TrainingState {
  ModelConfig config;
  ModelParams params;
  AdamState adam;
  std::uint64_t seed = 0;
  std::size_t epochs_done = 0;
};

// Generator for epoch `epoch` of a run seeded with `seed`. Each epoch gets
// its own stream, so a resumed run only needs (seed, epochs_done).
Rng epoch_rng(std::uint64_t seed, std::size_t epoch);

// Loss and parameter gradients of one batch of labeled triples.
double batch_gradients(const ModelParams& params, const ModelConfig& config, std::span<const LabeledTriple> batch,
                       ModelParams& grads);

// One pass over the shuffled positives: every batch pairs each positive with
// `negatives` Bernoulli-corrupted triples, backpropagates the summed softplus
// loss and takes one Adam step. Returns the mean batch loss.
double train_epoch(TrainingState& state, const TrainingData& data, const TrainConfig& config, Rng& rng);
// train_epoch with epoch_rng(state.seed, state.epochs_done).
double train_next_epoch(TrainingState& state, const TrainingData& data, const TrainConfig& config);

// Validation metric of a parameter snapshot; higher is better.
using Evaluator = std::function<double(const ModelParams&, const ModelConfig&)>;
using ParamInit = std::function<ModelParams(const ModelConfig&, Rng&)>;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double metric = 0.0;
};

struct MonitoredRun {
  TrainingState final_state;
  ModelParams best_params;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
};

// Trains for config.epochs epochs, scoring the evaluator after each one and
// keeping the earliest best snapshot.
MonitoredRun train_monitored(const ModelConfig& model, const TrainConfig& config, ModelParams init,
                             const TrainingData& data, const Evaluator& evaluate);

struct Grid {
  std::vector<std::size_t> heads;
  std::vector<std::size_t> head_sizes;
  std::vector<std::size_t> mlp_layers;
  std::vector<std::size_t> filters;
  std::vector<double> lrs;

  // H in {1,2,3}, n in {128..1024}, l in {2,3,4}, F in {128..1024},
  // lr in {1e-6 .. 5e-4}.
  static Grid full_search();
  std::size_t size() const;
};

struct GridPoint {
  std::size_t heads = 0;
  std::size_t head_size = 0;
  std::size_t mlp_layers = 0;
  std::size_t filters = 0;
  double lr = 0.0;

  // Tie-break order: smaller (H, n, F, l, lr) wins.
  auto order_key() const { return std::tuple(heads, head_size, filters, mlp_layers, lr); }
};

struct GridRow {
  GridPoint point;
  std::size_t epoch = 0;
  double loss = 0.0;
  double metric = 0.0;
};

struct GridResult {
  GridPoint best;
  ModelConfig best_model;
  TrainConfig best_train;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  ModelParams best_params;
  std::vector<GridRow> rows;  // one per (grid point, epoch)
};

// Trains every grid point from the same seed and returns the point with the
// highest best-epoch validation metric.
GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train, const Grid& grid,
                       const TrainingData& data, const ParamInit& init, const Evaluator& evaluate);

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows,
                    const std::string& metric_name);

}  // namespace rmen
