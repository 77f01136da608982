#include "rmen/commands.hpp"

#include <cstdio>
#include <fstream>
#include <optional>

#include "rmen/checkpoint.hpp"
#include "rmen/errors.hpp"
#include "rmen/evaluation.hpp"

namespace rmen {

namespace {

namespace fs = std::filesystem;

// Training triples plus whatever the selected task evaluates on.
struct TaskData {
  Vocab vocab;
  std::vector<Triple> positives;
  std::vector<LabeledTriple> valid, test;
  std::vector<RankingInstance> ranking_valid, ranking_test;
  bool ranking = false;
};

TaskData load_task(const RunConfig& cfg) {
  TaskData t;
  if (!cfg.train_path.empty()) {
    Dataset d = load_dataset(cfg.train_path, cfg.valid_path, cfg.test_path);
    t.vocab = std::move(d.vocab);
    t.positives = std::move(d.train);
    t.valid = std::move(d.valid);
    t.test = std::move(d.test);
    return t;
  }
  if (cfg.ranking_train.empty()) throw ConfigError("set train (classification) or ranking_train (ranking)");
  t.ranking = true;
  t.positives = relevant_triples(load_ranking(cfg.ranking_train, t.vocab, VocabMode::kBuild).instances);
  if (!cfg.ranking_valid.empty()) t.ranking_valid = load_ranking(cfg.ranking_valid, t.vocab, VocabMode::kBuild).instances;
  if (!cfg.ranking_test.empty()) t.ranking_test = load_ranking(cfg.ranking_test, t.vocab, VocabMode::kBuild).instances;
  return t;
}

std::optional<Evaluator> validation_metric(const TaskData& t, std::size_t threads) {
  if (t.ranking) {
    if (t.ranking_valid.empty()) return std::nullopt;
    return ranking_evaluator(t.ranking_valid);
  }
  if (t.valid.empty()) return std::nullopt;
  return classification_evaluator(t.valid, threads);
}

Evaluator require_validation(const TaskData& t, std::size_t threads) {
  auto eval = validation_metric(t, threads);
  if (!eval) throw ConfigError("this command needs validation data (valid or ranking_valid)");
  return *eval;
}

const char* metric_name(const TaskData& t) { return t.ranking ? "mrr" : "accuracy"; }

ParamInit make_init(const RunConfig& cfg, const Vocab& vocab) {
  std::optional<WordVectors> vectors;
  EmbeddingSource source = EmbeddingSource::kAverageTokens;
  if (cfg.init == InitMode::kGloveAverage) {
    vectors = load_pretrained(cfg.pretrained, cfg.model.embedding_dim);
  } else if (cfg.init == InitMode::kTranseImport) {
    vectors = load_pretrained(cfg.transe_embeddings, cfg.model.embedding_dim);
    source = EmbeddingSource::kExactNames;
  }
  return [vocab, vectors = std::move(vectors), source](const ModelConfig& model, Rng& rng) {
    ModelParams p = init_params(model, vocab.entities.size(), vocab.relations.size(), rng);
    if (vectors) assign_embeddings(p, vocab, *vectors, source, rng);
    return p;
  };
}

fs::path checkpoint_to_read(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  for (const char* name : {"best.rmen", "checkpoint.rmen"}) {
    if (fs::is_regular_file(cfg.out / name)) return cfg.out / name;
  }
  throw ConfigError("no checkpoint given and none found in " + cfg.out.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const TaskData task = load_task(cfg);
  const TrainingData data = make_training_data(task.positives, task.vocab.entities.size(), task.vocab.relations.size());
  const auto evaluate = validation_metric(task, cfg.threads);

  TrainingState state;
  if (!cfg.checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    if (!(ckpt.vocab == task.vocab)) throw ConfigError("checkpoint vocabulary does not match the training data");
    state = restore_state(ckpt);
    log << "resuming from " << cfg.checkpoint.string() << " after epoch " << state.epochs_done << '\n';
  } else {
    cfg.model.validate();
    Rng rng(cfg.train.seed);
    state.config = cfg.model;
    state.params = make_init(cfg, task.vocab)(cfg.model, rng);
    state.seed = cfg.train.seed;
  }

  auto history = open_out(cfg.out / "train.csv");
  history << "epoch,loss" << (evaluate ? std::string(",") + metric_name(task) : "") << '\n';
  std::optional<double> best;
  while (state.epochs_done < cfg.train.epochs) {
    const double loss = train_next_epoch(state, data, cfg.train);
    history << state.epochs_done << ',' << num(loss);
    log << "epoch " << state.epochs_done << " loss " << loss;
    if (evaluate) {
      const double metric = (*evaluate)(state.params, state.config);
      history << ',' << num(metric);
      log << ' ' << metric_name(task) << ' ' << metric;
      if (!best || metric > *best) {
        best = metric;
        save_checkpoint(cfg.out / "best.rmen", make_checkpoint(state, task.vocab));
      }
    }
    history << '\n';
    log << '\n';
  }
  save_checkpoint(cfg.out / "checkpoint.rmen", make_checkpoint(state, task.vocab));
}

void cmd_eval_classify(const RunConfig& cfg, std::ostream& log) {
  Checkpoint ckpt = load_checkpoint(checkpoint_to_read(cfg));
  if (cfg.valid_path.empty() || cfg.test_path.empty()) throw ConfigError("eval-classify needs valid and test");
  const auto valid = load_triples(cfg.valid_path, ckpt.vocab, VocabMode::kReuse);
  const auto test = load_triples(cfg.test_path, ckpt.vocab, VocabMode::kReuse);
  if (!valid.labeled || !test.labeled) throw ConfigError("eval-classify needs labeled valid and test files");
  EvalReport report;
  report.classification = evaluate_classification(ckpt.params, ckpt.config, valid.triples, test.triples, cfg.threads);
  write_report_json(cfg.out / "report.json", report, ckpt.vocab);
  write_report_csv(cfg.out / "report.csv", *report.classification, ckpt.vocab);
  log << "accuracy " << report.classification->accuracy << "% (" << report.classification->correct << '/'
      << report.classification->total << ")\n";
}

void cmd_eval_rank(const RunConfig& cfg, std::ostream& log) {
  Checkpoint ckpt = load_checkpoint(checkpoint_to_read(cfg));
  if (cfg.ranking_test.empty()) throw ConfigError("eval-rank needs ranking_test");
  const RankingFile file = load_ranking(cfg.ranking_test, ckpt.vocab, VocabMode::kReuse);
  EvalReport report;
  report.ranking = evaluate_ranking(ckpt.params, ckpt.config, file.instances);
  report.original_ranking = original_order_metrics(file.instances);
  write_report_json(cfg.out / "report.json", report, ckpt.vocab);
  log << "mrr " << report.ranking->mrr << " hits@1 " << report.ranking->hits_at_1 << "% (original order: mrr "
      << report.original_ranking->mrr << " hits@1 " << report.original_ranking->hits_at_1 << "%)\n";
}

EvalReport test_report(const TaskData& task, const ModelParams& params, const ModelConfig& model,
                       std::size_t threads) {
  EvalReport report;
  if (task.ranking && !task.ranking_test.empty()) {
    report.ranking = evaluate_ranking(params, model, task.ranking_test);
    report.original_ranking = original_order_metrics(task.ranking_test);
  } else if (!task.ranking && !task.test.empty()) {
    report.classification = evaluate_classification(params, model, task.valid, task.test, threads);
  }
  return report;
}

void cmd_grid_search(const RunConfig& cfg, std::ostream& log) {
  const TaskData task = load_task(cfg);
  const TrainingData data = make_training_data(task.positives, task.vocab.entities.size(), task.vocab.relations.size());
  log << "grid search over " << cfg.grid.size() << " configurations\n";
  GridResult result =
      grid_search(cfg.model, cfg.train, cfg.grid, data, make_init(cfg, task.vocab), require_validation(task, cfg.threads));
  write_grid_csv(cfg.out / "grid.csv", result.rows, metric_name(task));

  TrainingState best{result.best_model, result.best_params, {}, cfg.train.seed, result.best_epoch};
  save_checkpoint(cfg.out / "checkpoint.rmen", make_checkpoint(best, task.vocab));
  RunConfig chosen = cfg;
  chosen.model = result.best_model;
  chosen.train = result.best_train;
  chosen.train.epochs = result.best_epoch;
  open_out(cfg.out / "best-config.txt") << format_config(chosen);

  const EvalReport report = test_report(task, result.best_params, result.best_model, cfg.threads);
  write_report_json(cfg.out / "report.json", report, task.vocab);
  if (report.classification) write_report_csv(cfg.out / "report.csv", *report.classification, task.vocab);
  log << "best H=" << result.best.heads << " n=" << result.best.head_size << " l=" << result.best.mlp_layers
      << " F=" << result.best.filters << " lr=" << result.best.lr << " epoch " << result.best_epoch << ' '
      << metric_name(task) << ' ' << result.best_metric << '\n';
}

void cmd_ablate(const RunConfig& cfg, std::ostream& log) {
  const TaskData task = load_task(cfg);
  const TrainingData data = make_training_data(task.positives, task.vocab.entities.size(), task.vocab.relations.size());
  AblationTask ablation;
  ablation.validation = require_validation(task, cfg.threads);
  if (task.ranking) {
    if (task.ranking_test.empty()) throw ConfigError("ablate needs ranking_test");
    ablation.test = ranking_evaluator(task.ranking_test);
  } else {
    if (task.test.empty()) throw ConfigError("ablate needs test");
    ablation.test = [&task, threads = cfg.threads](const ModelParams& p, const ModelConfig& m) {
      return evaluate_classification(p, m, task.valid, task.test, threads).accuracy;
    };
  }
  const auto rows = run_ablation(cfg.model, cfg.train, cfg.grid, data, make_init(cfg, task.vocab), ablation);
  write_ablation_csv(cfg.out / "ablation.csv", rows);
  for (const auto& r : rows) {
    log << r.variant << ": valid " << r.valid_metric << " test " << r.test_metric << " (" << metric_name(task)
        << ")\n";
  }
}

void cmd_export_scores(const RunConfig& cfg, std::ostream& log) {
  Checkpoint ckpt = load_checkpoint(checkpoint_to_read(cfg));
  if (cfg.test_path.empty()) throw ConfigError("export-scores reads the triples named by test");
  const auto file = load_triples(cfg.test_path, ckpt.vocab, VocabMode::kReuse);
  const auto triples = strip_labels(file.triples);
  const auto scores = score_batch(ckpt.params, ckpt.config, triples, cfg.threads);
  auto out = open_out(cfg.out / "scores.tsv");
  for (std::size_t i = 0; i < triples.size(); ++i) {
    out << ckpt.vocab.entities.name(triples[i].s) << '\t' << ckpt.vocab.relations.name(triples[i].r) << '\t'
        << ckpt.vocab.entities.name(triples[i].o) << '\t' << num(scores[i]) << '\n';
  }
  log << "scored " << triples.size() << " triples\n";
}

void cmd_transe_train(const RunConfig& cfg, std::ostream& log) {
  if (cfg.train_path.empty()) throw ConfigError("transe-train needs train");
  const TaskData task = load_task(cfg);
  const TrainingData data = make_training_data(task.positives, task.vocab.entities.size(), task.vocab.relations.size());
  auto log_epoch = [&](std::size_t epoch, double loss, const TranseParams&) {
    log << "epoch " << epoch << " loss " << loss << '\n';
  };
  TranseParams chosen;
  if (task.valid.empty()) {
    Rng rng(cfg.transe.seed);
    chosen = train_transe(data, task.vocab.relations.size(), cfg.transe, rng, log_epoch);
  } else {
    TranseGridResult result =
        transe_grid_search(data, task.vocab.relations.size(), cfg.transe, cfg.transe_grid, task.valid, log_epoch);
    log << "best: norm " << (result.best.norm == NormKind::L1 ? "l1" : "l2") << " margin " << result.best.margin
        << " lr " << result.best.lr << " epoch " << result.best_epoch << " validation accuracy "
        << result.best_accuracy << '\n';
    chosen = std::move(result.best_params);
  }
  export_embeddings(chosen, task.vocab, cfg.out / "transe-embeddings.txt");
  if (!task.valid.empty() && !task.test.empty()) {
    EvalReport report;
    report.classification = evaluate_transe_classification(chosen, task.valid, task.test);
    write_report_json(cfg.out / "report.json", report, task.vocab);
    write_report_csv(cfg.out / "report.csv", *report.classification, task.vocab);
    log << "test accuracy " << report.classification->accuracy << "%\n";
  }
}

using Handler = void (*)(const RunConfig&, std::ostream&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> table = {
      {"train", cmd_train},           {"eval-classify", cmd_eval_classify}, {"eval-rank", cmd_eval_rank},
      {"grid-search", cmd_grid_search}, {"ablate", cmd_ablate},             {"export-scores", cmd_export_scores},
      {"transe-train", cmd_transe_train}};
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, handler] : handlers()) out.push_back(name);
    return out;
  }();
  return names;
}

void run_command(const std::string& name, const RunConfig& config, std::ostream& log) {
  for (const auto& [command, handler] : handlers()) {
    if (command != name) continue;
    config.validate();
    fs::create_directories(config.out);
    open_out(config.out / "effective-config.txt") << format_config(config);
    handler(config, log);
    return;
  }
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace rmen
