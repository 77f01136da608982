// Acceptance run: one PASS/FAIL/SKIPPED line per criterion. Pass criterion
// numbers as arguments to run a subset. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rmen/checkpoint.hpp"
#include "rmen/commands.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/grad_check.hpp"
#include "rmen/run_config.hpp"
#include "rmen/synthetic.hpp"
#include "rmen/training.hpp"
#include "rmen/transe.hpp"
#include "support.hpp"

using namespace rmen;
using rmen::test::read_file;
using rmen::test::TempDir;

namespace {

enum class Status { kPass, kFail, kSkipped };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ModelParams randomized(const ModelConfig& c, std::size_t entities, std::size_t relations, Rng& rng) {
  ModelParams p = init_params(c, entities, relations, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, t] : p.named_arrays())
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = u(rng);
  return p;
}

// Model used for the synthetic classification and ranking tasks.
ModelConfig desk_model() {
  ModelConfig c;
  c.embedding_dim = 16;
  c.heads = 2;
  c.head_size = 8;
  c.memory_slots = 1;
  c.mlp_layers = 2;
  c.window = 1;
  c.filters = 16;
  return c;
}

TrainConfig desk_training() {
  TrainConfig t;
  t.lr = 5e-3;
  t.batch_size = 16;
  t.epochs = 30;
  t.seed = 1;
  return t;
}

Outcome gradient_correctness() {
  Stopwatch clock;
  ModelConfig c;
  c.embedding_dim = 4;
  c.heads = 2;
  c.head_size = 2;
  c.memory_slots = 1;
  c.mlp_layers = 2;
  c.window = 1;
  c.filters = 3;
  Rng rng(101);
  const ModelParams p = randomized(c, 5, 2, rng);
  std::vector<std::string> names;
  std::vector<Tensor> theta;
  for (const auto& [name, t] : p.named_arrays()) {
    names.push_back(name);
    theta.push_back(*t);
  }
  const std::vector<Triple> batch{{0, 0, 1}, {2, 1, 3}, {4, 0, 0}, {1, 1, 4}};
  const std::vector<int> labels{1, -1, 1, -1};
  auto builder = [&](Tape&, std::span<const Var> leaves) {
    BoundModel m(c, leaves);
    std::vector<Var> scores;
    for (const auto& t : batch) scores.push_back(score(m, t));
    return softplus_loss(concat_rows(scores), labels);
  };
  const GradCheckResult r = grad_check(builder, theta);
  const double secs = clock.seconds();
  return verdict(r.max_rel_error < 1e-4 && secs < 30.0,
                 fmt("max relative error %.2e over %zu parameter groups (worst: %s), %.2f s", r.max_rel_error,
                     theta.size(), names[r.worst_leaf].c_str(), secs));
}

Outcome attention_invariant() {
  Rng rng(202);
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  double worst = 0.0;
  std::size_t distributions = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.embedding_dim = pick(1, 6);
    c.heads = pick(1, 3);
    c.head_size = pick(c.heads == 1 ? 2 : 1, 4);
    c.memory_slots = pick(1, 4);
    c.mlp_layers = pick(1, 3);
    c.window = pick(1, std::min<std::size_t>(3, c.memory_size()));
    c.filters = pick(1, 4);
    c.ablate_pos = rng() % 2 == 0;
    const std::size_t entities = pick(1, 6), relations = pick(1, 3);
    const ModelParams p = randomized(c, entities, relations, rng);
    Tape tape;
    BoundModel m(tape, p, c, false);
    const Encoding enc = encode_triple(m, {rng() % entities, rng() % relations, rng() % entities});
    for (const Var& alpha : enc.attention) {
      const Tensor& a = alpha.value();
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) sum += a(i, j);
        worst = std::max(worst, std::fabs(sum - 1.0));
        ++distributions;
      }
    }
  }
  return verdict(worst < 1e-9, fmt("%zu distributions, max |sum - 1| = %.2e", distributions, worst));
}

Outcome oracle_equivalence() {
  Rng rng(303);
  std::size_t threshold_mismatches = 0, mrr_mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t relations = 1 + rng() % 4;
    const std::size_t n = 1 + rng() % 60;
    std::vector<LabeledTriple> valid;
    std::vector<double> scores;
    std::vector<std::vector<double>> rs(relations);
    std::vector<std::vector<int>> rl(relations);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rng() % relations;
      const double s = rng() % 3 == 0 ? std::round(u(rng) * 2) / 2 : u(rng);
      const int label = rng() % 2 ? 1 : -1;
      valid.push_back({{i, r, i}, label});
      scores.push_back(s);
      rs[r].push_back(s);
      rl[r].push_back(label);
    }
    const ThresholdTable table = select_thresholds(valid, scores, relations);
    for (std::size_t r = 0; r < relations; ++r) {
      const bool same = rs[r].empty() ? !table.per_relation[r].has_value()
                                      : table.per_relation[r] == rmen::test::brute_threshold(rs[r], rl[r]);
      threshold_mismatches += same ? 0 : 1;
    }
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 15;
    std::vector<RankingInstance> instances;
    std::vector<std::vector<std::size_t>> rankings;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = 1 + rng() % 10;
      RankingInstance inst;
      const std::size_t forced = rng() % c;
      for (std::size_t d = 0; d < c; ++d) inst.candidates.push_back({d, d == forced || rng() % 5 == 0});
      std::vector<std::size_t> order(c);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      instances.push_back(inst);
      rankings.push_back(order);
    }
    const RankingReport got = mrr_hits(instances, rankings);
    const RankingReport want = rmen::test::naive_mrr(instances, rankings);
    mrr_mismatches += got.mrr == want.mrr && got.hits_at_1 == want.hits_at_1 ? 0 : 1;
  }
  return verdict(threshold_mismatches == 0 && mrr_mismatches == 0,
                 fmt("threshold mismatches %zu, MRR/Hits@1 mismatches %zu (100 instances each)",
                     threshold_mismatches, mrr_mismatches));
}

struct ClassificationRun {
  double valid = 0.0;
  double test = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

ClassificationRun train_and_classify(const SyntheticKG& kg, const ModelConfig& model, const TrainConfig& train) {
  Stopwatch clock;
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  Rng rng(train.seed);
  ModelParams init = init_params(model, kg.vocab.entities.size(), kg.vocab.relations.size(), rng);
  const MonitoredRun run = train_monitored(model, train, std::move(init), data, classification_evaluator(kg.valid));
  const double test = evaluate_classification(run.best_params, model, kg.valid, kg.test).accuracy;
  return {run.best_metric, test, run.best_epoch, clock.seconds()};
}

Outcome synthetic_learnability() {
  const SyntheticKG kg = make_rule_kg({});
  const ClassificationRun r = train_and_classify(kg, desk_model(), desk_training());
  return verdict(r.test >= 95.0 && r.seconds < 300.0,
                 fmt("test accuracy %.1f%% (validation %.1f%%, best epoch %zu of %zu, %zu/%zu/%zu triples), %.1f s",
                     r.test, r.valid, r.best_epoch, desk_training().epochs, kg.train.size(), kg.valid.size(),
                     kg.test.size(), r.seconds));
}

Outcome ablation_direction() {
  const SyntheticKG kg = make_positional_kg({});
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  const ModelConfig base = desk_model();
  const Grid grid{{base.heads}, {base.head_size}, {base.mlp_layers}, {base.filters}, {desk_training().lr}};
  auto init = [&](const ModelConfig& c, Rng& rng) {
    return init_params(c, kg.vocab.entities.size(), kg.vocab.relations.size(), rng);
  };
  const AblationTask task{classification_evaluator(kg.valid), [&](const ModelParams& p, const ModelConfig& c) {
                            return evaluate_classification(p, c, kg.valid, kg.test).accuracy;
                          }};
  const auto rows = run_ablation(base, desk_training(), grid, data, init, task);
  const double full = rows.at(0).test_metric, no_pos = rows.at(1).test_metric, no_mem = rows.at(2).test_metric;
  return verdict(full >= no_pos + 5.0 && full > no_mem && no_pos > no_mem,
                 fmt("test accuracy full %.1f%%, w/o Pos %.1f%%, w/o M %.1f%% (need full >= w/o Pos + 5 and both > "
                     "w/o M)",
                     full, no_pos, no_mem));
}

Outcome ranking_pipeline() {
  const SyntheticRanking set = make_ranking_set({});
  const TrainingData data = make_training_data(relevant_triples(set.train), set.vocab.entities.size(),
                                               set.vocab.relations.size());
  const ModelConfig model = desk_model();
  const TrainConfig train = desk_training();
  Rng rng(train.seed);
  ModelParams init = init_params(model, set.vocab.entities.size(), set.vocab.relations.size(), rng);
  const MonitoredRun run = train_monitored(model, train, std::move(init), data, ranking_evaluator(set.valid));
  const RankingReport learned = evaluate_ranking(run.best_params, model, set.test);
  const RankingReport original = original_order_metrics(set.test);
  return verdict(learned.mrr > original.mrr && learned.hits_at_1 > original.hits_at_1,
                 fmt("MRR %.3f vs original %.3f, Hits@1 %.1f%% vs %.1f%% (%zu test instances)", learned.mrr,
                     original.mrr, learned.hits_at_1, original.hits_at_1, learned.instances));
}

Outcome data_conformance() {
  struct Expected {
    const char* name;
    const char* env;
    DatasetStats stats;
  };
  const Expected expected[] = {{"WN11", "RMEN_WN11_DIR", {38696, 11, 112581, 5218, 21088}},
                               {"FB13", "RMEN_FB13_DIR", {75043, 13, 316232, 11816, 47466}}};
  std::string detail;
  bool any = false, ok = true;
  for (const auto& e : expected) {
    const char* dir = std::getenv(e.env);
    if (!dir || !*dir) continue;
    any = true;
    const std::filesystem::path root(dir);
    const auto valid = std::filesystem::exists(root / "valid.txt") ? root / "valid.txt" : root / "dev.txt";
    const DatasetStats s = load_dataset(root / "train.txt", valid, root / "test.txt").stats();
    const bool match = s.entities == e.stats.entities && s.relations == e.stats.relations &&
                       s.train == e.stats.train && s.valid == e.stats.valid && s.test == e.stats.test;
    ok = ok && match;
    detail += fmt("%s%s: %zu entities, %zu relations, %zu/%zu/%zu triples%s", detail.empty() ? "" : "; ", e.name,
                  s.entities, s.relations, s.train, s.valid, s.test, match ? "" : " (mismatch)");
  }
  if (!any) return {Status::kSkipped, "set RMEN_WN11_DIR or RMEN_FB13_DIR to a directory with train/valid/test files"};
  return verdict(ok, detail);
}

Outcome analytic_loss() {
  const double zero = 0.0;
  const int pos = 1, neg = -1;
  const double ln2 = softplus_loss({&zero, 1}, {&pos, 1});
  const double err = std::fabs(ln2 - std::log(2.0));
  bool finite = true;
  for (double f : {1e3, -1e3, 1e300, -1e300, std::numeric_limits<double>::max()}) {
    for (int t : {pos, neg}) {
      const double v = softplus_loss({&f, 1}, {&t, 1});
      finite = finite && std::isfinite(v) && v >= 0.0;
      Tape tape;
      Var loss = softplus_loss(tape.constant(Tensor::matrix({{f}})), std::vector<int>{t});
      tape.backward(loss);
      finite = finite && std::isfinite(loss.value().item());
    }
  }
  const double big = 1e3;
  const bool saturated = softplus_loss({&big, 1}, {&neg, 1}) == 1e3 && softplus_loss({&big, 1}, {&pos, 1}) < 1e-300;
  return verdict(err < 1e-12 && finite && saturated,
                 fmt("|softplus(0) - ln 2| = %.1e, saturated values finite: %s", err, finite && saturated ? "yes" : "no"));
}

Outcome determinism_and_checkpointing() {
  TempDir dir;
  write_kg(dir / "data", make_rule_kg({}));
  RunConfig cfg;
  apply_settings(cfg, {{"embedding_dim", "8"},
                       {"heads", "2"},
                       {"head_size", "4"},
                       {"filters", "8"},
                       {"lr", "0.005"},
                       {"seed", "7"},
                       {"train", (dir / "data" / "train.txt").string()},
                       {"valid", (dir / "data" / "valid.txt").string()},
                       {"test", (dir / "data" / "test.txt").string()}});
  std::ostringstream log;
  auto run = [&](const std::string& command, const std::string& out, std::map<std::string, std::string> extra) {
    RunConfig c = cfg;
    extra["out"] = (dir / out).string();
    apply_settings(c, extra);
    run_command(command, c, log);
  };
  for (const char* out : {"a", "b"}) {
    run("train", out, {{"epochs", "3"}});
    run("export-scores", out, {});
  }
  const std::string scores_a = read_file(dir / "a" / "scores.tsv");
  const bool exports_equal = !scores_a.empty() && scores_a == read_file(dir / "b" / "scores.tsv");

  run("train", "straight", {{"epochs", "10"}});
  run("train", "first", {{"epochs", "5"}});
  run("train", "resumed", {{"epochs", "10"}, {"checkpoint", (dir / "first" / "checkpoint.rmen").string()}});
  const bool checkpoints_equal =
      read_file(dir / "straight" / "checkpoint.rmen") == read_file(dir / "resumed" / "checkpoint.rmen");

  // Loss columns of epochs 6..10 must agree digit for digit.
  auto losses = [](const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto a = line.find(',');
      out.push_back(line.substr(a + 1, line.find(',', a + 1) - a - 1));
    }
    return out;
  };
  const auto straight = losses(read_file(dir / "straight" / "train.csv"));
  const auto resumed = losses(read_file(dir / "resumed" / "train.csv"));
  const bool trajectory_equal =
      straight.size() == 10 && resumed.size() == 5 && std::equal(resumed.begin(), resumed.end(), straight.begin() + 5);
  return verdict(exports_equal && checkpoints_equal && trajectory_equal,
                 fmt("score exports identical: %s; 5+resume+5 checkpoint identical to 10 epochs: %s; loss "
                     "trajectory identical: %s",
                     exports_equal ? "yes" : "no", checkpoints_equal ? "yes" : "no", trajectory_equal ? "yes" : "no"));
}

Outcome transe_baseline() {
  Stopwatch clock;
  const SyntheticKG kg = make_rule_kg({});
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  TranseConfig base;
  base.dim = 50;
  base.batch_size = 32;
  base.epochs = 400;
  base.seed = 1;
  const TranseGrid grid{{NormKind::L1, NormKind::L2}, {2.0, 6.0}, {0.01, 0.3}};
  const TranseGridResult best = transe_grid_search(data, kg.vocab.relations.size(), base, grid, kg.valid);
  const double test = evaluate_transe_classification(best.best_params, kg.valid, kg.test).accuracy;

  TempDir dir;
  export_embeddings(best.best_params, kg.vocab, dir / "transe.txt");
  const WordVectors vectors = load_pretrained(dir / "transe.txt", base.dim);
  ModelConfig model = desk_model();
  model.embedding_dim = base.dim;
  Rng rng(1);
  ModelParams params = init_params(model, kg.vocab.entities.size(), kg.vocab.relations.size(), rng);
  const std::size_t assigned = assign_embeddings(params, kg.vocab, vectors, EmbeddingSource::kExactNames, rng);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < params.entities.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(params.entities[i] - best.best_params.entities[i]));
  for (std::size_t i = 0; i < params.relations.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(params.relations[i] - best.best_params.relations[i]));
  const bool round_trip =
      assigned == kg.vocab.entities.size() + kg.vocab.relations.size() && max_diff < 1e-9;
  return verdict(test >= 85.0 && round_trip,
                 fmt("test accuracy %.1f%% (norm %s, margin %g, lr %g, best epoch %zu, validation %.1f%%); "
                     "init round trip %zu rows, max diff %.1e; %.1f s",
                     test, best.best.norm == NormKind::L1 ? "l1" : "l2", best.best.margin, best.best.lr,
                     best.best_epoch, best.best_accuracy, assigned, max_diff, clock.seconds()));
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "attention distributions", attention_invariant},
      {3, "oracle equivalence", oracle_equivalence},
      {4, "synthetic learnability", synthetic_learnability},
      {5, "ablation direction", ablation_direction},
      {6, "ranking pipeline", ranking_pipeline},
      {7, "data conformance", data_conformance},
      {8, "analytic loss values", analytic_loss},
      {9, "determinism and checkpointing", determinism_and_checkpointing},
      {10, "TransE baseline", transe_baseline},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome outcome;
    try {
      outcome = c.check();
    } catch (const std::exception& e) {
      outcome = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* label = outcome.status == Status::kPass ? "PASS" : outcome.status == Status::kFail ? "FAIL" : "SKIPPED";
    failures += outcome.status == Status::kFail ? 1 : 0;
    std::printf("%-7s %2d %s: %s\n", label, c.id, c.name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
