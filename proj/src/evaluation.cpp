#include "rmen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rmen/errors.hpp"

namespace rmen {

double ThresholdTable::resolve(std::size_t relation) const {
  if (relation < per_relation.size() && per_relation[relation]) return *per_relation[relation];
  if (fallback) return *fallback;
  throw ContractError("no threshold for relation " + std::to_string(relation) + " and no fallback");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scored {
  double score;
  int label;
};

// Sweeps candidate thresholds in increasing order; the first maximum wins.
double best_threshold(std::vector<Scored> items) {
  std::sort(items.begin(), items.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  std::size_t positives = 0;
  for (const auto& it : items) positives += it.label > 0 ? 1 : 0;

  // theta = -inf: everything predicted valid.
  double best_theta = -kInf;
  std::size_t best_correct = positives;
  std::size_t neg_below = 0, pos_below = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].label > 0 ? pos_below : neg_below) += 1;
      ++j;
    }
    // Threshold between this distinct value and the next (or +inf).
    const std::size_t correct = neg_below + (positives - pos_below);
    double theta = kInf;
    if (j < items.size()) {
      const double a = items[i].score, b = items[j].score;
      theta = std::midpoint(a, b);
      if (!(theta < b)) theta = a;
    }
    if (correct > best_correct) {
      best_correct = correct;
      best_theta = theta;
    }
    i = j;
  }
  return best_theta;
}

std::string fixed(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

ThresholdTable select_thresholds(std::span<const LabeledTriple> validation, std::span<const double> scores,
                                 std::size_t num_relations) {
  if (validation.empty()) throw ContractError("select_thresholds: empty validation set");
  if (validation.size() != scores.size()) throw DimensionError("select_thresholds: scores and triples differ");
  std::vector<std::vector<Scored>> by_relation(num_relations);
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const auto r = validation[i].triple.r;
    if (r >= num_relations) throw DimensionError("select_thresholds: relation index out of range");
    by_relation[r].push_back({scores[i], validation[i].label});
  }
  ThresholdTable table;
  table.per_relation.resize(num_relations);
  std::vector<double> learned;
  for (std::size_t r = 0; r < num_relations; ++r) {
    if (by_relation[r].empty()) continue;
    table.per_relation[r] = best_threshold(std::move(by_relation[r]));
    learned.push_back(*table.per_relation[r]);
  }
  std::sort(learned.begin(), learned.end());
  table.fallback = learned[(learned.size() - 1) / 2];
  return table;
}

ClassificationReport classify(std::span<const LabeledTriple> test, std::span<const double> scores,
                              const ThresholdTable& thresholds) {
  if (test.size() != scores.size()) throw DimensionError("classify: scores and triples differ");
  ClassificationReport report;
  std::vector<RelationAccuracy> rel;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto r = test[i].triple.r;
    if (r >= rel.size()) rel.resize(r + 1);
    const bool predicted_valid = scores[i] > thresholds.resolve(r);
    const bool correct = predicted_valid == (test[i].label > 0);
    rel[r].relation = r;
    rel[r].total += 1;
    rel[r].correct += correct ? 1 : 0;
    report.correct += correct ? 1 : 0;
  }
  report.total = test.size();
  report.accuracy = report.total ? 100.0 * static_cast<double>(report.correct) / static_cast<double>(report.total) : 0.0;
  for (auto& r : rel) {
    if (r.total == 0) continue;
    r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total);
    report.per_relation.push_back(r);
  }
  return report;
}

ClassificationReport evaluate_classification(const ModelParams& params, const ModelConfig& config,
                                             std::span<const LabeledTriple> valid,
                                             std::span<const LabeledTriple> test, std::size_t threads) {
  const auto valid_triples = strip_labels({valid.begin(), valid.end()});
  const auto test_triples = strip_labels({test.begin(), test.end()});
  const auto valid_scores = score_batch(params, config, valid_triples, threads);
  const auto test_scores = score_batch(params, config, test_triples, threads);
  const auto thresholds = select_thresholds(valid, valid_scores, params.relations.rows());
  return classify(test, test_scores, thresholds);
}

std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> rank_candidates(const ModelParams& params, const ModelConfig& config,
                                         const RankingInstance& instance) {
  if (instance.candidates.empty()) throw ContractError("rank_candidates: instance has no candidates");
  std::vector<Triple> triples;
  for (const auto& c : instance.candidates) triples.push_back({instance.query, instance.user, c.document});
  return rank_by_scores(score_batch(params, config, triples));
}

RankingReport mrr_hits(std::span<const RankingInstance> instances, std::span<const std::vector<std::size_t>> rankings) {
  if (instances.size() != rankings.size()) throw DimensionError("mrr_hits: one ranking per instance expected");
  RankingReport report;
  double rr_total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& cands = instances[i].candidates;
    const auto& order = rankings[i];
    if (order.size() != cands.size()) throw DimensionError("mrr_hits: ranking length differs from candidates");
    std::size_t rank = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (cands.at(order[pos]).relevant) {
        rank = pos + 1;
        break;
      }
    }
    if (rank == 0) throw ContractError("mrr_hits: instance without a relevant candidate");
    rr_total += 1.0 / static_cast<double>(rank);
    hits += rank == 1 ? 1 : 0;
  }
  report.instances = instances.size();
  if (report.instances > 0) {
    report.mrr = rr_total / static_cast<double>(report.instances);
    report.hits_at_1 = 100.0 * static_cast<double>(hits) / static_cast<double>(report.instances);
  }
  return report;
}

RankingReport original_order_metrics(std::span<const RankingInstance> instances) {
  std::vector<std::vector<std::size_t>> rankings;
  for (const auto& inst : instances) {
    std::vector<std::size_t> order(inst.candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rankings.push_back(std::move(order));
  }
  return mrr_hits(instances, rankings);
}

RankingReport evaluate_ranking(const ModelParams& params, const ModelConfig& config,
                               std::span<const RankingInstance> instances) {
  std::vector<std::vector<std::size_t>> rankings;
  rankings.reserve(instances.size());
  for (const auto& inst : instances) rankings.push_back(rank_candidates(params, config, inst));
  return mrr_hits(instances, rankings);
}

Evaluator classification_evaluator(std::vector<LabeledTriple> validation, std::size_t threads) {
  return [validation = std::move(validation), threads](const ModelParams& params, const ModelConfig& config) {
    return evaluate_classification(params, config, validation, validation, threads).accuracy;
  };
}

Evaluator ranking_evaluator(std::vector<RankingInstance> validation) {
  return [validation = std::move(validation)](const ModelParams& params, const ModelConfig& config) {
    return evaluate_ranking(params, config, validation).mrr;
  };
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report, const Vocab& vocab) {
  nlohmann::json j = nlohmann::json::object();
  if (report.classification) {
    const auto& c = *report.classification;
    j["micro_accuracy"] = c.accuracy;
    j["correct"] = c.correct;
    j["total"] = c.total;
    auto& rels = j["per_relation"] = nlohmann::json::array();
    for (const auto& r : c.per_relation) {
      rels.push_back({{"relation", r.relation < vocab.relations.size() ? vocab.relations.name(r.relation)
                                                                          : std::to_string(r.relation)},
                      {"accuracy", r.accuracy},
                      {"correct", r.correct},
                      {"total", r.total}});
    }
  }
  if (report.ranking) {
    j["mrr"] = report.ranking->mrr;
    j["hits_at_1"] = report.ranking->hits_at_1;
    j["instances"] = report.ranking->instances;
  }
  if (report.original_ranking) {
    j["original_order"] = {{"mrr", report.original_ranking->mrr}, {"hits_at_1", report.original_ranking->hits_at_1}};
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const ClassificationReport& report, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "relation,correct,total,accuracy\n";
  for (const auto& r : report.per_relation) {
    const std::string name =
        r.relation < vocab.relations.size() ? vocab.relations.name(r.relation) : std::to_string(r.relation);
    out << name << ',' << r.correct << ',' << r.total << ',' << fixed(r.accuracy) << '\n';
  }
}

std::vector<AblationRow> run_ablation(const ModelConfig& base_model, const TrainConfig& base_train, const Grid& grid,
                                      const TrainingData& data, const ParamInit& init, const AblationTask& task) {
  struct Variant {
    const char* name;
    bool ablate_pos;
    bool ablate_mem;
  };
  const Variant variants[] = {{"full", false, false}, {"w/o Pos", true, false}, {"w/o M", false, true}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ModelConfig model = base_model;
    model.ablate_pos = v.ablate_pos;
    model.ablate_mem = v.ablate_mem;
    Grid variant_grid = grid;
    if (v.ablate_mem) {
      // The memory is bypassed, so only k = d matters among its settings.
      variant_grid.heads = {1};
      variant_grid.head_sizes = {base_model.embedding_dim};
      variant_grid.mlp_layers = {grid.mlp_layers.empty() ? base_model.mlp_layers : grid.mlp_layers.front()};
    }
    GridResult result = grid_search(model, base_train, variant_grid, data, init, task.validation);
    rows.push_back({v.name, result.best_model, result.best, result.best_metric,
                    task.test(result.best_params, result.best_model)});
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "variant,heads,head_size,mlp_layers,filters,lr,valid_metric,test_metric\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.best.heads << ',' << r.best.head_size << ',' << r.best.mlp_layers << ','
        << r.best.filters << ',' << r.best.lr << ',' << fixed(r.valid_metric) << ',' << fixed(r.test_metric) << '\n';
  }
}

}  // namespace rmen
