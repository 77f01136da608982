#include "rmen/transe.hpp"

#include <optional>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rmen/errors.hpp"

namespace rmen {

void TranseConfig::validate() const {
  if (dim == 0) throw ConfigError("transe: dim must be positive");
  if (!(margin > 0.0)) throw ConfigError("transe: margin must be positive");
  if (!(lr >= 0.0)) throw ConfigError("transe: lr must be non-negative");
  if (batch_size == 0) throw ConfigError("transe: batch_size must be positive");
}

namespace {

void normalize_rows(Tensor& table) {
  const std::size_t d = table.cols();
  for (std::size_t i = 0; i < table.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += table(i, j) * table(i, j);
    const double norm = std::sqrt(sq);
    if (norm == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) table(i, j) /= norm;
  }
}

}  // namespace

TranseParams init_transe(const TranseConfig& config, std::size_t num_entities, std::size_t num_relations, Rng& rng) {
  config.validate();
  if (num_entities == 0 || num_relations == 0) throw DimensionError("init_transe: empty vocabulary");
  const double bound = 6.0 / std::sqrt(static_cast<double>(config.dim));
  std::uniform_real_distribution<double> uni(-bound, bound);
  TranseParams p;
  p.entities = Tensor({num_entities, config.dim});
  p.relations = Tensor({num_relations, config.dim});
  for (auto& v : p.entities.data()) v = uni(rng);
  for (auto& v : p.relations.data()) v = uni(rng);
  normalize_rows(p.entities);
  normalize_rows(p.relations);
  p.norm = config.norm;
  p.margin = config.margin;
  return p;
}

double transe_score(const TranseParams& params, const Triple& triple) {
  const std::size_t d = params.entities.cols();
  if (triple.s >= params.entities.rows() || triple.o >= params.entities.rows() ||
      triple.r >= params.relations.rows()) {
    throw DimensionError("transe_score: index out of range");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = params.entities(triple.s, j) + params.relations(triple.r, j) - params.entities(triple.o, j);
    acc += params.norm == NormKind::L1 ? std::fabs(diff) : diff * diff;
  }
  return params.norm == NormKind::L1 ? acc : std::sqrt(acc);
}

Var transe_score(Tape&, Var entities, Var relations, NormKind norm, const Triple& triple) {
  Var diff = gather_row(entities, triple.s) + gather_row(relations, triple.r) - gather_row(entities, triple.o);
  return norm == NormKind::L1 ? sum(abs(diff)) : l2_norm(diff);
}

double transe_margin_loss(const TranseParams& params, std::span<const Triple> valid, std::span<const Triple> invalid) {
  if (valid.size() != invalid.size()) throw DimensionError("transe_margin_loss: pair counts differ");
  if (valid.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    acc += std::max(0.0, params.margin + transe_score(params, valid[i]) - transe_score(params, invalid[i]));
  }
  return acc / static_cast<double>(valid.size());
}

Var transe_margin_loss(Tape& tape, Var entities, Var relations, NormKind norm, double margin,
                       std::span<const Triple> valid, std::span<const Triple> invalid) {
  if (valid.size() != invalid.size()) throw DimensionError("transe_margin_loss: pair counts differ");
  if (valid.empty()) throw ContractError("transe_margin_loss: empty batch");
  std::vector<Var> terms;
  terms.reserve(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) {
    Var gap = transe_score(tape, entities, relations, norm, valid[i]) -
              transe_score(tape, entities, relations, norm, invalid[i]);
    terms.push_back(reshape(gap, {1, 1}));
  }
  Var gaps = concat_rows(terms);
  Var shifted = gaps + tape.constant(Tensor::scalar(margin));
  return scale(sum(relu(shifted)), 1.0 / static_cast<double>(valid.size()));
}

void normalize_entities(TranseParams& params) { normalize_rows(params.entities); }

TranseParams train_transe(const TrainingData& data, std::size_t num_relations, const TranseConfig& config, Rng& rng,
                          const TranseObserver& observer) {
  config.validate();
  if (data.positives.empty()) throw ContractError("train_transe: no training triples");
  TranseParams params = init_transe(config, data.num_entities, num_relations, rng);
  std::vector<Triple> order = data.positives;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const Triple> valid(order.data() + start, end - start);
      std::vector<Triple> invalid;
      invalid.reserve(valid.size());
      for (const auto& t : valid) invalid.push_back(corrupt(t, data.stats, data.num_entities, rng, data.known_valid));

      Tape tape;
      Var ent = tape.borrow(params.entities);
      Var rel = tape.borrow(params.relations);
      Var loss = transe_margin_loss(tape, ent, rel, params.norm, params.margin, valid, invalid);
      tape.backward(loss);
      loss_total += loss.value().item();
      ++batches;

      const Tensor& ge = tape.grad(ent);
      const Tensor& gr = tape.grad(rel);
      for (std::size_t i = 0; i < params.entities.size(); ++i) params.entities[i] -= config.lr * ge[i];
      for (std::size_t i = 0; i < params.relations.size(); ++i) params.relations[i] -= config.lr * gr[i];
      normalize_entities(params);
    }
    if (observer) observer(epoch, loss_total / static_cast<double>(batches), params);
  }
  return params;
}

TranseGridResult transe_grid_search(const TrainingData& data, std::size_t num_relations, const TranseConfig& base,
                                    const TranseGrid& grid, std::span<const LabeledTriple> valid,
                                    const TranseObserver& observer) {
  if (valid.empty()) throw ContractError("transe_grid_search: empty validation set");
  const auto norms = grid.norms.empty() ? std::vector<NormKind>{base.norm} : grid.norms;
  const auto margins = grid.margins.empty() ? std::vector<double>{base.margin} : grid.margins;
  const auto lrs = grid.lrs.empty() ? std::vector<double>{base.lr} : grid.lrs;
  std::optional<TranseGridResult> best;
  for (NormKind norm : norms) {
    for (double margin : margins) {
      for (double lr : lrs) {
        TranseConfig config = base;
        config.norm = norm;
        config.margin = margin;
        config.lr = lr;
        Rng rng(config.seed);
        train_transe(data, num_relations, config, rng, [&](std::size_t epoch, double loss, const TranseParams& p) {
          const double accuracy = evaluate_transe_classification(p, valid, valid).accuracy;
          if (!best || accuracy > best->best_accuracy) best = TranseGridResult{config, epoch, accuracy, p};
          if (observer) observer(epoch, loss, p);
        });
      }
    }
  }
  if (!best) throw ConfigError("transe_grid_search: no epochs to evaluate");
  return std::move(*best);
}

std::vector<double> transe_plausibility(const TranseParams& params, std::span<const Triple> triples) {
  std::vector<double> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(-transe_score(params, t));
  return out;
}

ClassificationReport evaluate_transe_classification(const TranseParams& params,
                                                    std::span<const LabeledTriple> valid,
                                                    std::span<const LabeledTriple> test) {
  const auto valid_triples = strip_labels({valid.begin(), valid.end()});
  const auto test_triples = strip_labels({test.begin(), test.end()});
  const auto thresholds =
      select_thresholds(valid, transe_plausibility(params, valid_triples), params.relations.rows());
  return classify(test, transe_plausibility(params, test_triples), thresholds);
}

void export_embeddings(const TranseParams& params, const Vocab& vocab, const std::filesystem::path& path) {
  if (vocab.entities.size() != params.entities.rows() || vocab.relations.size() != params.relations.rows()) {
    throw DimensionError("export_embeddings: vocabulary and embedding tables differ in size");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  char buf[32];
  auto write_row = [&](const std::string& token, const Tensor& table, std::size_t row) {
    out << token;
    for (std::size_t j = 0; j < table.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", table(row, j));
      out << ' ' << buf;
    }
    out << '\n';
  };
  for (std::size_t e = 0; e < params.entities.rows(); ++e) write_row(vocab.entities.name(e), params.entities, e);
  for (std::size_t r = 0; r < params.relations.rows(); ++r) {
    write_row(std::string(kRelationTokenPrefix) + vocab.relations.name(r), params.relations, r);
  }
}

}  // namespace rmen
