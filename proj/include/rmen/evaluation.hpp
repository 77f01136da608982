#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmen/kg_data.hpp"
#include "rmen/model.hpp"
#include "rmen/training.hpp"

namespace rmen {

// Per-relation decision thresholds: a triple is classified valid iff its
// score is strictly above the threshold of its relation.
struct ThresholdTable {
  std::vector<std::optional<double>> per_relation;
  std::optional<double> fallback;  // for relations absent from validation

  // Throws ContractError when neither a relation threshold nor a fallback exists.
  double resolve(std::size_t relation) const;
};

// For each relation, tries -inf, +inf and the midpoints between adjacent
// distinct scores, keeping the most accurate (smallest on ties). Relations
// without validation triples resolve to the median learned threshold (lower
// middle for an even count).
ThresholdTable select_thresholds(std::span<const LabeledTriple> validation, std::span<const double> scores,
                                 std::size_t num_relations);

struct RelationAccuracy {
  std::size_t relation = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;  // percent
};

struct ClassificationReport {
  double accuracy = 0.0;  // micro-averaged, percent
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<RelationAccuracy> per_relation;  // relations present in the test set, by index
};

ClassificationReport classify(std::span<const LabeledTriple> test, std::span<const double> scores,
                              const ThresholdTable& thresholds);

// Scores both splits, fits thresholds on `valid` and classifies `test`.
ClassificationReport evaluate_classification(const ModelParams& params, const ModelConfig& config,
                                             std::span<const LabeledTriple> valid,
                                             std::span<const LabeledTriple> test, std::size_t threads = 1);

// Candidate indices ordered by descending score; equal scores keep their
// original order.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores);
std::vector<std::size_t> rank_candidates(const ModelParams& params, const ModelConfig& config,
                                         const RankingInstance& instance);

struct RankingReport {
  double mrr = 0.0;
  double hits_at_1 = 0.0;  // percent
  std::size_t instances = 0;
};

// `rankings[i]` is a permutation of instance i's candidates. Each instance
// contributes the reciprocal rank of its first relevant candidate.
RankingReport mrr_hits(std::span<const RankingInstance> instances, std::span<const std::vector<std::size_t>> rankings);
// Metrics of the original candidate order.
RankingReport original_order_metrics(std::span<const RankingInstance> instances);
RankingReport evaluate_ranking(const ModelParams& params, const ModelConfig& config,
                               std::span<const RankingInstance> instances);

// Validation accuracy (percent) with thresholds fitted on the same split.
Evaluator classification_evaluator(std::vector<LabeledTriple> validation, std::size_t threads = 1);
Evaluator ranking_evaluator(std::vector<RankingInstance> validation);

struct EvalReport {
  std::optional<ClassificationReport> classification;
  std::optional<RankingReport> ranking;
  std::optional<RankingReport> original_ranking;
};

void write_report_json(const std::filesystem::path& path, const EvalReport& report, const Vocab& vocab);
// One row per relation: relation,correct,total,accuracy.
void write_report_csv(const std::filesystem::path& path, const ClassificationReport& report, const Vocab& vocab);

struct AblationRow {
  std::string variant;  // "full", "w/o Pos", "w/o M"
  ModelConfig config;
  GridPoint best;
  double valid_metric = 0.0;
  double test_metric = 0.0;
};

// Validation metric and test metric of a trained snapshot.
struct AblationTask {
  Evaluator validation;
  Evaluator test;
};

// Trains the full model, the variant without positional embeddings and the
// variant without the memory encoder with the same seed and grid. The
// memory-free variant searches only filters and learning rates, with k = d.
std::vector<AblationRow> run_ablation(const ModelConfig& base_model, const TrainConfig& base_train, const Grid& grid,
                                      const TrainingData& data, const ParamInit& init, const AblationTask& task);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace rmen
