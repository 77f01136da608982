#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rmen/errors.hpp"
#include "rmen/evaluation.hpp"
#include "rmen/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace rmen;
using rmen::test::brute_threshold;
using rmen::test::naive_mrr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<LabeledTriple> one_relation(const std::vector<int>& labels, std::size_t r = 0) {
  std::vector<LabeledTriple> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({{i, r, i}, labels[i]});
  return out;
}

RankingInstance instance_with_relevant(std::size_t count, std::vector<std::size_t> relevant) {
  RankingInstance inst;
  for (std::size_t i = 0; i < count; ++i) {
    inst.candidates.push_back({i, std::find(relevant.begin(), relevant.end(), i) != relevant.end()});
  }
  return inst;
}

std::vector<std::size_t> identity(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("threshold examples") {
  const auto valid = one_relation({1, 1, -1, -1});
  const std::vector<double> scores{0.9, 0.6, 0.5, 0.2};
  const auto table = select_thresholds(valid, scores, 1);
  CHECK(table.resolve(0) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(classify(valid, scores, table).accuracy == 100.0);

  const std::vector<double> pair{1.0, 0.0};
  CHECK(select_thresholds(one_relation({1, -1}), pair, 1).resolve(0) == 0.5);

  const std::vector<double> flat(5, 0.3);
  const auto mostly_valid = one_relation({1, 1, 1, -1, -1});
  const auto t1 = select_thresholds(mostly_valid, flat, 1);
  CHECK(t1.resolve(0) == -kInf);
  CHECK(classify(mostly_valid, flat, t1).accuracy == 60.0);
  const auto mostly_invalid = one_relation({1, -1, -1, -1, -1});
  const auto t2 = select_thresholds(mostly_invalid, flat, 1);
  CHECK(t2.resolve(0) == kInf);
  CHECK(classify(mostly_invalid, flat, t2).accuracy == 80.0);

  CHECK_THROWS_AS(select_thresholds({}, {}, 1), ContractError);
}

TEST_CASE("a score equal to the threshold is classified invalid") {
  ThresholdTable table;
  table.per_relation = {0.25};
  const auto test = one_relation({1, -1});
  const std::vector<double> at{0.25, 0.25};
  const auto report = classify(test, at, table);
  CHECK(report.correct == 1);
  CHECK(report.per_relation.at(0).accuracy == 50.0);
}

TEST_CASE("unseen relations use the lower median threshold") {
  std::vector<LabeledTriple> valid;
  std::vector<double> scores;
  // Relations 0, 1, 2, 4 get thresholds 0.5, 1.5, 2.5, 3.5; relation 3 is unseen.
  for (std::size_t r : {0, 1, 2, 4}) {
    const double base = r == 4 ? 3.0 : static_cast<double>(r);
    valid.push_back({{0, r, 1}, -1});
    scores.push_back(base);
    valid.push_back({{0, r, 2}, 1});
    scores.push_back(base + 1.0);
  }
  const auto table = select_thresholds(valid, scores, 6);
  CHECK(table.resolve(4) == 3.5);
  CHECK(table.resolve(3) == 1.5);
  CHECK(table.resolve(5) == 1.5);

  ThresholdTable none;
  none.per_relation.resize(2);
  CHECK_THROWS_AS(none.resolve(1), ContractError);
}

TEST_CASE("thresholds equal an exhaustive scan") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t relations = 1 + rng() % 4;
    const std::size_t n = 1 + rng() % 40;
    std::vector<LabeledTriple> valid;
    std::vector<double> scores;
    std::vector<std::vector<double>> rs(relations);
    std::vector<std::vector<int>> rl(relations);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rng() % relations;
      // Coarse grid so ties are common.
      const double s = static_cast<double>(static_cast<int>(rng() % 9) - 4) * 0.5;
      const int label = rng() % 2 ? 1 : -1;
      valid.push_back({{i, r, i}, label});
      scores.push_back(s);
      rs[r].push_back(s);
      rl[r].push_back(label);
    }
    const auto table = select_thresholds(valid, scores, relations);
    for (std::size_t r = 0; r < relations; ++r) {
      if (rs[r].empty()) {
        CHECK(table.per_relation[r] == std::nullopt);
        continue;
      }
      CHECK(table.per_relation[r] == brute_threshold(rs[r], rl[r]));
    }
  }
}

TEST_CASE("random scores classify near chance") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto draw = [&](std::size_t n) {
    std::vector<LabeledTriple> triples;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      triples.push_back({{i, i % 5, i}, i % 2 ? 1 : -1});
      scores.push_back(u(rng));
    }
    return std::pair(triples, scores);
  };
  const auto [valid, vscores] = draw(10000);
  const auto [test, tscores] = draw(10000);
  const auto report = classify(test, tscores, select_thresholds(valid, vscores, 5));
  CHECK(std::fabs(report.accuracy - 50.0) < 5.0);
  CHECK(report.per_relation.size() == 5);
}

TEST_CASE("accuracy is invariant under strictly monotone transforms") {
  Rng rng(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledTriple> valid, test;
    std::vector<double> vs, ts;
    for (std::size_t i = 0; i < 60; ++i) {
      const std::size_t r = i % 3;
      const double s = u(rng);
      valid.push_back({{i, r, i}, s + u(rng) > 0 ? 1 : -1});
      vs.push_back(s);
    }
    // Test scores reuse validation values: midpoints are not preserved by the
    // transform, but which side of the boundary an observed value falls on is.
    for (std::size_t i = 0; i < 80; ++i) {
      const std::size_t j = rng() % valid.size();
      test.push_back({{i, valid[j].triple.r, i}, rng() % 2 ? 1 : -1});
      ts.push_back(vs[j]);
    }
    auto transform = [](double x) { return std::exp(0.7 * x) + x * x * x; };
    std::vector<double> vs2, ts2;
    for (double x : vs) vs2.push_back(transform(x));
    for (double x : ts) ts2.push_back(transform(x));
    const auto a = classify(test, ts, select_thresholds(valid, vs, 3));
    const auto b = classify(test, ts2, select_thresholds(valid, vs2, 3));
    CHECK(a.correct == b.correct);
  }
}

TEST_CASE("ranking order and tie-break") {
  const std::vector<double> two{0.1, 0.9};
  CHECK(rank_by_scores(two) == std::vector<std::size_t>{1, 0});
  const std::vector<double> flat(6, 2.0);
  CHECK(rank_by_scores(flat) == identity(6));

  Rng rng(14);
  std::vector<double> scores(20);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(i) * 0.37 - 3.0;
  std::vector<std::size_t> perm = identity(scores.size());
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled;
  for (auto p : perm) shuffled.push_back(scores[p]);
  std::vector<double> ranked_a, ranked_b;
  for (auto i : rank_by_scores(scores)) ranked_a.push_back(scores[i]);
  for (auto i : rank_by_scores(shuffled)) ranked_b.push_back(shuffled[i]);
  CHECK(ranked_a == ranked_b);
}

TEST_CASE("mrr and hits examples") {
  std::vector<RankingInstance> two{instance_with_relevant(5, {0}), instance_with_relevant(5, {3})};
  const std::vector<std::vector<std::size_t>> ids{identity(5), identity(5)};
  const auto r1 = mrr_hits(two, ids);
  CHECK(r1.mrr == 0.625);
  CHECK(r1.hits_at_1 == 50.0);

  std::vector<RankingInstance> tops{instance_with_relevant(3, {0, 2}), instance_with_relevant(2, {0})};
  const auto r2 = mrr_hits(tops, std::vector<std::vector<std::size_t>>{identity(3), identity(2)});
  CHECK(r2.mrr == 1.0);
  CHECK(r2.hits_at_1 == 100.0);

  std::vector<RankingInstance> second{instance_with_relevant(2, {1})};
  const auto r3 = mrr_hits(second, std::vector<std::vector<std::size_t>>{identity(2)});
  CHECK(r3.mrr == 0.5);
  CHECK(r3.hits_at_1 == 0.0);

  std::vector<RankingInstance> none{instance_with_relevant(2, {})};
  CHECK_THROWS_AS(mrr_hits(none, std::vector<std::vector<std::size_t>>{identity(2)}), ContractError);
  CHECK(original_order_metrics(two).mrr == 0.625);
}

TEST_CASE("mrr equals a naive oracle and is permutation invariant") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<RankingInstance> instances;
    std::vector<std::vector<std::size_t>> rankings;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = 1 + rng() % 8;
      RankingInstance inst = instance_with_relevant(c, {rng() % c});
      for (auto& cand : inst.candidates) cand.relevant = cand.relevant || rng() % 4 == 0;
      auto order = identity(c);
      std::shuffle(order.begin(), order.end(), rng);
      instances.push_back(inst);
      rankings.push_back(order);
    }
    const auto got = mrr_hits(instances, rankings);
    const auto want = naive_mrr(instances, rankings);
    CHECK(got.mrr == doctest::Approx(want.mrr).epsilon(1e-15));
    CHECK(got.hits_at_1 == want.hits_at_1);
    CHECK(got.hits_at_1 / 100.0 <= got.mrr + 1e-15);

    auto perm = identity(n);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<RankingInstance> pi;
    std::vector<std::vector<std::size_t>> pr;
    for (auto p : perm) {
      pi.push_back(instances[p]);
      pr.push_back(rankings[p]);
    }
    const auto shuffled = mrr_hits(pi, pr);
    CHECK(shuffled.mrr == doctest::Approx(got.mrr).epsilon(1e-14));
    CHECK(shuffled.hits_at_1 == got.hits_at_1);
  }
}

TEST_CASE("ablation report") {
  SyntheticKG kg = make_rule_kg({});
  const TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  ModelConfig base;
  base.embedding_dim = 4;
  TrainConfig tc;
  tc.epochs = 1;
  Grid grid{{2}, {4}, {2}, {4}, {1e-3}};
  auto init = [&](const ModelConfig& c, Rng& rng) {
    return init_params(c, kg.vocab.entities.size(), kg.vocab.relations.size(), rng);
  };
  std::vector<ModelConfig> seen;
  AblationTask task{classification_evaluator(kg.valid), [&](const ModelParams& p, const ModelConfig& c) {
                      seen.push_back(c);
                      // The memory-free score is the decoder applied to the raw embeddings.
                      if (c.ablate_mem) {
                        Tape tape;
                        BoundModel m(tape, p, c, false);
                        const Triple t = kg.test.front().triple;
                        const Var cols[] = {gather_row(m.entities, t.s), gather_row(m.relations, t.r),
                                            gather_row(m.entities, t.o)};
                        const double direct = decode_score(m, {cols[0], cols[1], cols[2]}).value().item();
                        CHECK(direct == score_triple(p, c, t));
                      }
                      return evaluate_classification(p, c, kg.valid, kg.test).accuracy;
                    }};
  const auto rows = run_ablation(base, tc, grid, data, init, task);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == "full");
  CHECK(rows[1].variant == "w/o Pos");
  CHECK(rows[2].variant == "w/o M");
  CHECK(rows[1].config.ablate_pos);
  CHECK(rows[2].config.ablate_mem);
  CHECK(rows[2].config.memory_size() == 4);
  CHECK(seen.size() == 3);

  rmen::test::TempDir dir;
  write_ablation_csv(dir / "a.csv", rows);
  const std::string csv = rmen::test::read_file(dir / "a.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
