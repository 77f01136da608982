#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rmen/errors.hpp"
#include "rmen/grad_check.hpp"
#include "rmen/synthetic.hpp"
#include "rmen/transe.hpp"
#include "support.hpp"

using namespace rmen;
using rmen::test::random_tensor;
using rmen::test::TempDir;

namespace {

TranseParams two_dim(NormKind norm, Tensor entities, Tensor relations, double margin = 2.0) {
  return {std::move(entities), std::move(relations), norm, margin};
}

SyntheticKG small_kg() {
  RuleKGOptions o;
  o.entities = 20;
  o.groups = 5;
  o.shifts = {1, 2};
  o.train = 70;
  o.valid_positives = 15;
  o.test_positives = 15;
  return make_rule_kg(o);
}

}  // namespace

TEST_CASE("transe score examples") {
  const auto exact = two_dim(NormKind::L2, Tensor::matrix({{0, 0}, {1, 1}}), Tensor::matrix({{1, 1}}));
  CHECK(transe_score(exact, {0, 0, 1}) == 0.0);
  const auto l1 = two_dim(NormKind::L1, Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0, 0}}));
  CHECK(transe_score(l1, {0, 0, 1}) == 2.0);
  const auto l2 = two_dim(NormKind::L2, Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{0, 0}}));
  CHECK(transe_score(l2, {0, 0, 1}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Rng rng(1);
  for (NormKind norm : {NormKind::L1, NormKind::L2}) {
    TranseParams p{random_tensor({6, 3}, rng, -2, 2), random_tensor({2, 3}, rng, -2, 2), norm, 1.0};
    for (std::size_t s = 0; s < 6; ++s)
      for (std::size_t o = 0; o < 6; ++o) {
        const Triple t{s, o % 2, o};
        const double v = transe_score(p, t);
        CHECK(v >= 0.0);
        Tape tape;
        CHECK(transe_score(tape, tape.constant(p.entities), tape.constant(p.relations), norm, t).value().item() ==
              doctest::Approx(v).epsilon(1e-14));
      }
  }
}

TEST_CASE("margin loss examples") {
  // score(valid) = 0, score(invalid) = margin + 1.
  const auto p = two_dim(NormKind::L1, Tensor::matrix({{0, 0}, {0, 0}, {3, 0}}), Tensor::matrix({{0, 0}}), 2.0);
  const Triple valid[] = {{0, 0, 1}};
  const Triple far[] = {{0, 0, 2}};
  CHECK(transe_score(p, far[0]) == 3.0);
  CHECK(transe_margin_loss(p, valid, far) == 0.0);
  CHECK(transe_margin_loss(p, valid, valid) == 2.0);
  const Triple both_valid[] = {{0, 0, 1}, {0, 0, 1}};
  const Triple mixed[] = {{0, 0, 2}, {0, 0, 1}};
  CHECK(transe_margin_loss(p, both_valid, mixed) == 1.0);
}

TEST_CASE("margin loss gradients away from the kink") {
  Rng rng(2);
  const std::vector<Triple> valid{{0, 0, 1}, {2, 1, 3}, {4, 0, 0}};
  const std::vector<Triple> invalid{{0, 0, 4}, {1, 1, 3}, {4, 0, 2}};
  for (NormKind norm : {NormKind::L1, NormKind::L2}) {
    for (int trial = 0; trial < 5; ++trial) {
      TranseParams p{random_tensor({5, 4}, rng, -1, 1), random_tensor({2, 4}, rng, -1, 1), norm, 1.5};
      // Keep every hinge active or inactive by a clear gap.
      bool near_kink = false;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        near_kink |= std::fabs(p.margin + transe_score(p, valid[i]) - transe_score(p, invalid[i])) < 0.05;
      }
      if (near_kink) continue;
      auto builder = [&](Tape& tape, std::span<const Var> l) {
        return transe_margin_loss(tape, l[0], l[1], norm, p.margin, valid, invalid);
      };
      Tape tape;
      CHECK(builder(tape, std::vector<Var>{tape.constant(p.entities), tape.constant(p.relations)}).value().item() ==
            doctest::Approx(transe_margin_loss(p, valid, invalid)).epsilon(1e-13));
      CHECK(grad_check(builder, {p.entities, p.relations}).max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("initialization and normalization") {
  Rng rng(3);
  TranseConfig c;
  c.dim = 7;
  auto p = init_transe(c, 5, 3, rng);
  CHECK(p.entities.rows() == 5);
  CHECK(p.relations.cols() == 7);
  for (std::size_t i = 0; i < 5; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 7; ++j) sq += p.entities(i, j) * p.entities(i, j);
    CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));
  }
  p.entities(0, 0) = 10.0;
  normalize_entities(p);
  double sq = 0.0;
  for (std::size_t j = 0; j < 7; ++j) sq += p.entities(0, j) * p.entities(0, j);
  CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));

  c.margin = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training separates valid from corrupted triples") {
  const SyntheticKG kg = small_kg();
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  TranseConfig c;
  c.dim = 20;
  c.norm = NormKind::L1;
  c.lr = 0.1;
  c.epochs = 60;
  Rng rng(4);
  std::vector<double> losses;
  const auto p = train_transe(data, kg.vocab.relations.size(), c, rng,
                              [&](std::size_t, double loss, const TranseParams&) { losses.push_back(loss); });
  CHECK(losses.size() == 60);
  CHECK(losses.back() < losses.front());

  Rng crng(5);
  double valid_sum = 0.0, corrupt_sum = 0.0;
  for (const auto& t : kg.train) {
    valid_sum += transe_score(p, t);
    corrupt_sum += transe_score(p, corrupt(t, data.stats, kg.vocab.entities.size(), crng, data.known_valid));
  }
  CHECK(valid_sum < corrupt_sum);

  const auto report = evaluate_transe_classification(p, kg.valid, kg.test);
  CHECK(report.total == kg.test.size());
}

TEST_CASE("export round trip and determinism") {
  const SyntheticKG kg = small_kg();
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  TranseConfig c;
  c.dim = 6;
  c.epochs = 3;
  Rng a(9), b(9);
  const auto p = train_transe(data, kg.vocab.relations.size(), c, a);
  const auto q = train_transe(data, kg.vocab.relations.size(), c, b);
  CHECK(p.entities == q.entities);
  CHECK(p.relations == q.relations);

  TempDir dir;
  export_embeddings(p, kg.vocab, dir / "emb.txt");
  const WordVectors back = load_pretrained(dir / "emb.txt", 6);
  CHECK(back.size() == kg.vocab.entities.size() + kg.vocab.relations.size());
  for (std::size_t e = 0; e < kg.vocab.entities.size(); ++e) {
    const auto& row = back.at(kg.vocab.entities.name(e));
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::fabs(row[j] - p.entities(e, j)) < 1e-9);
  }
  for (std::size_t r = 0; r < kg.vocab.relations.size(); ++r) {
    const auto& row = back.at(std::string(kRelationTokenPrefix) + kg.vocab.relations.name(r));
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::fabs(row[j] - p.relations(r, j)) < 1e-9);
  }

  // The exported file initializes a model with matching dimension row for row.
  ModelConfig mc;
  mc.embedding_dim = 6;
  mc.heads = 2;
  mc.head_size = 3;
  mc.filters = 4;
  Rng init_rng(1);
  ModelParams mp = init_params(mc, kg.vocab.entities.size(), kg.vocab.relations.size(), init_rng);
  CHECK(assign_embeddings(mp, kg.vocab, back, EmbeddingSource::kExactNames, init_rng) ==
        kg.vocab.entities.size() + kg.vocab.relations.size());
  CHECK(mp.entities == p.entities);
  CHECK(mp.relations == p.relations);
}

TEST_CASE("grid search keeps the best validation snapshot") {
  const SyntheticKG kg = small_kg();
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  TranseConfig base;
  base.dim = 10;
  base.epochs = 8;
  const TranseGrid grid{{NormKind::L1, NormKind::L2}, {1.0, 2.0}, {0.05}};
  const auto result = transe_grid_search(data, kg.vocab.relations.size(), base, grid, kg.valid);

  // Replay each point and scan its epochs independently.
  double best = -1.0;
  TranseConfig best_config;
  std::size_t best_epoch = 0;
  for (NormKind norm : grid.norms)
    for (double margin : grid.margins) {
      TranseConfig c = base;
      c.norm = norm;
      c.margin = margin;
      c.lr = 0.05;
      Rng rng(c.seed);
      train_transe(data, kg.vocab.relations.size(), c, rng, [&](std::size_t e, double, const TranseParams& p) {
        const double acc = evaluate_transe_classification(p, kg.valid, kg.valid).accuracy;
        if (acc > best) {
          best = acc;
          best_config = c;
          best_epoch = e;
        }
      });
    }
  CHECK(result.best_accuracy == best);
  CHECK(result.best_epoch == best_epoch);
  CHECK(result.best.norm == best_config.norm);
  CHECK(result.best.margin == best_config.margin);
  CHECK(evaluate_transe_classification(result.best_params, kg.valid, kg.valid).accuracy == best);
  CHECK_THROWS_AS(transe_grid_search(data, kg.vocab.relations.size(), base, grid, {}), ContractError);
}
