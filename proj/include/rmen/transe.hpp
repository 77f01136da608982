#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "rmen/autodiff.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/kg_data.hpp"
#include "rmen/training.hpp"

namespace rmen {

enum class NormKind { L1, L2 };

struct TranseConfig {
  std::size_t dim = 50;
  NormKind norm = NormKind::L1;
  double margin = 6.0;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TranseParams {
  Tensor entities;   // [#E x d], rows kept at unit L2 norm
  Tensor relations;  // [#R x d]
  NormKind norm = NormKind::L2;
  double margin = 2.0;
};

// Uniform(-6/sqrt(d), 6/sqrt(d)) rows; entity and relation rows are then
// scaled to unit length.
TranseParams init_transe(const TranseConfig& config, std::size_t num_entities, std::size_t num_relations, Rng& rng);

// Dissimilarity ||v_s + v_r - v_o||; lower means more plausible.
double transe_score(const TranseParams& params, const Triple& triple);
Var transe_score(Tape& tape, Var entities, Var relations, NormKind norm, const Triple& triple);

// Mean over pairs of max(0, margin + score(valid) - score(invalid)).
double transe_margin_loss(const TranseParams& params, std::span<const Triple> valid, std::span<const Triple> invalid);
Var transe_margin_loss(Tape& tape, Var entities, Var relations, NormKind norm, double margin,
                       std::span<const Triple> valid, std::span<const Triple> invalid);

// Divides every entity row by its L2 norm.
void normalize_entities(TranseParams& params);

// Called after every epoch with the 1-based epoch number and mean batch loss.
using TranseObserver = std::function<void(std::size_t epoch, double loss, const TranseParams&)>;

// Minibatch SGD on the margin loss with one Bernoulli-corrupted triple per
// positive, renormalizing entity rows after every update.
TranseParams train_transe(const TrainingData& data, std::size_t num_relations, const TranseConfig& config, Rng& rng,
                          const TranseObserver& observer = {});

// Negated dissimilarities, so that higher means more plausible as the
// threshold classifier expects.
std::vector<double> transe_plausibility(const TranseParams& params, std::span<const Triple> triples);

ClassificationReport evaluate_transe_classification(const TranseParams& params,
                                                    std::span<const LabeledTriple> valid,
                                                    std::span<const LabeledTriple> test);

// Candidate values searched on validation accuracy; an empty list means the
// base configuration's value.
struct TranseGrid {
  std::vector<NormKind> norms;
  std::vector<double> margins;
  std::vector<double> lrs;
};

struct TranseGridResult {
  TranseConfig best;
  std::size_t best_epoch = 0;  // 1-based
  double best_accuracy = 0.0;  // validation, percent
  TranseParams best_params;
};

// Trains every (norm, margin, lr) point from `base.seed` and keeps the epoch
// snapshot with the highest validation accuracy; earlier points and epochs
// win ties.
TranseGridResult transe_grid_search(const TrainingData& data, std::size_t num_relations, const TranseConfig& base,
                                    const TranseGrid& grid, std::span<const LabeledTriple> valid,
                                    const TranseObserver& observer = {});

// Writes `name v1 ... vd` rows: entities under their own names, relations
// under kRelationTokenPrefix + name. Loadable with load_pretrained.
void export_embeddings(const TranseParams& params, const Vocab& vocab, const std::filesystem::path& path);

}  // namespace rmen
