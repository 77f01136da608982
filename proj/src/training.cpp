#include "rmen/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "rmen/errors.hpp"

namespace rmen {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

double softplus_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("softplus_loss: scores and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += softplus(-labels[i] * scores[i]);
  return total;
}

Var softplus_loss(Var scores, std::span<const int> labels) {
  if (scores.value().size() != labels.size()) {
    throw DimensionError("softplus_loss: scores and labels differ in length");
  }
  Tensor signs(scores.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) signs[i] = -static_cast<double>(labels[i]);
  Var margin = mul(scores, scores.tape->constant(std::move(signs)));
  return sum(softplus(margin));
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (state.first.empty()) {
    for (const Tensor* p : params) {
      state.first.emplace_back(p->shape(), 0.0);
      state.second.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw DimensionError("adam_step: optimizer state layout mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t a = 0; a < params.size(); ++a) {
    Tensor& p = *params[a];
    const Tensor& g = *grads[a];
    Tensor& m = state.first[a];
    Tensor& v = state.second[a];
    if (g.shape() != p.shape() || m.shape() != p.shape()) throw DimensionError("adam_step: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamOptions& options) {
  std::vector<Tensor*> ps;
  std::vector<const Tensor*> gs;
  for (auto& [name, t] : params.named_arrays()) ps.push_back(t);
  for (const auto& [name, t] : grads.named_arrays()) gs.push_back(t);
  adam_step(ps, gs, state, options);
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (epochs > epoch_cap) {
    throw ConfigError("epochs (" + std::to_string(epochs) + ") exceed the cap of " + std::to_string(epoch_cap));
  }
  if (negatives == 0) throw ConfigError("negatives per positive must be at least 1");
}

TrainingData make_training_data(std::vector<Triple> positives, std::size_t num_entities, std::size_t num_relations) {
  if (positives.empty()) throw ConfigError("training set is empty");
  TrainingData data;
  data.stats = relation_stats(positives, num_relations);
  data.known_valid = TripleSet(positives.begin(), positives.end());
  data.positives = std::move(positives);
  data.num_entities = num_entities;
  return data;
}

Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(static_cast<std::uint64_t>(epoch) >> 32)};
  return Rng(seq);
}

double batch_gradients(const ModelParams& params, const ModelConfig& config, std::span<const LabeledTriple> batch,
                       ModelParams& grads) {
  if (batch.empty()) throw ContractError("batch_gradients: empty batch");
  Tape tape;
  BoundModel model(tape, params, config, true);
  std::vector<Var> scores;
  std::vector<int> labels;
  scores.reserve(batch.size());
  for (const auto& lt : batch) {
    scores.push_back(score(model, lt.triple));
    labels.push_back(lt.label);
  }
  Var loss = softplus_loss(concat_rows(scores), labels);
  tape.backward(loss);
  accumulate_gradients(model, grads);
  return loss.value().item();
}

double train_epoch(TrainingState& state, const TrainingData& data, const TrainConfig& config, Rng& rng) {
  config.validate();
  std::vector<Triple> order = data.positives;
  std::shuffle(order.begin(), order.end(), rng);

  const AdamOptions adam{.lr = config.lr};
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<LabeledTriple> batch;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back({order[i], 1});
      for (std::size_t n = 0; n < config.negatives; ++n) {
        batch.push_back({corrupt(order[i], data.stats, data.num_entities, rng, data.known_valid), -1});
      }
    }
    ModelParams grads = state.params.zeros_like();
    const double loss = batch_gradients(state.params, state.config, batch, grads);
    adam_step(state.params, grads, state.adam, adam);
    total += loss;
    ++batches;
  }
  ++state.epochs_done;
  return total / static_cast<double>(batches);
}

double train_next_epoch(TrainingState& state, const TrainingData& data, const TrainConfig& config) {
  Rng rng = epoch_rng(state.seed, state.epochs_done);
  return train_epoch(state, data, config, rng);
}

MonitoredRun train_monitored(const ModelConfig& model, const TrainConfig& config, ModelParams init,
                             const TrainingData& data, const Evaluator& evaluate) {
  config.validate();
  MonitoredRun run;
  run.final_state.config = model;
  run.final_state.params = std::move(init);
  run.final_state.seed = config.seed;
  check_shapes(run.final_state.params, model);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const double loss = train_next_epoch(run.final_state, data, config);
    const double metric = evaluate(run.final_state.params, model);
    run.history.push_back({run.final_state.epochs_done, loss, metric});
    if (run.history.size() == 1 || metric > run.best_metric) {
      run.best_metric = metric;
      run.best_epoch = run.final_state.epochs_done;
      run.best_params = run.final_state.params;
    }
  }
  return run;
}

Grid Grid::full_search() {
  return Grid{{1, 2, 3}, {128, 256, 512, 1024}, {2, 3, 4}, {128, 256, 512, 1024}, {1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4}};
}

std::size_t Grid::size() const {
  return heads.size() * head_sizes.size() * mlp_layers.size() * filters.size() * lrs.size();
}

GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train, const Grid& grid,
                       const TrainingData& data, const ParamInit& init, const Evaluator& evaluate) {
  if (grid.size() == 0) throw ConfigError("grid search needs at least one value per hyper-parameter");
  GridResult result;
  bool have_best = false;
  for (auto heads : grid.heads)
    for (auto head_size : grid.head_sizes)
      for (auto layers : grid.mlp_layers)
        for (auto filters : grid.filters)
          for (auto lr : grid.lrs) {
            const GridPoint point{heads, head_size, layers, filters, lr};
            ModelConfig model = base_model;
            model.heads = heads;
            model.head_size = head_size;
            model.mlp_layers = layers;
            model.filters = filters;
            model.validate();
            TrainConfig train = base_train;
            train.lr = lr;

            Rng rng(train.seed);
            MonitoredRun run = train_monitored(model, train, init(model, rng), data, evaluate);
            for (const auto& rec : run.history) result.rows.push_back({point, rec.epoch, rec.loss, rec.metric});

            const bool better = !have_best || run.best_metric > result.best_metric ||
                                (run.best_metric == result.best_metric && point.order_key() < result.best.order_key());
            if (better) {
              have_best = true;
              result.best = point;
              result.best_model = model;
              result.best_train = train;
              result.best_epoch = run.best_epoch;
              result.best_metric = run.best_metric;
              result.best_params = std::move(run.best_params);
            }
          }
  return result;
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows,
                    const std::string& metric_name) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "heads,head_size,mlp_layers,filters,lr,epoch,loss," << metric_name << '\n';
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.point.heads << ',' << r.point.head_size << ',' << r.point.mlp_layers << ',' << r.point.filters << ','
        << r.point.lr << ',' << r.epoch << ',' << r.loss << ',' << r.metric << '\n';
  }
}

}  // namespace rmen
