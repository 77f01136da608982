#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "rmen/checkpoint.hpp"
#include "rmen/errors.hpp"
#include "rmen/synthetic.hpp"
#include "support.hpp"

using namespace rmen;
using rmen::test::read_file;
using rmen::test::TempDir;

namespace {

ModelConfig config() {
  ModelConfig c;
  c.embedding_dim = 6;
  c.heads = 2;
  c.head_size = 3;
  c.memory_slots = 2;
  c.mlp_layers = 3;
  c.window = 2;
  c.filters = 5;
  return c;
}

struct Fixture {
  SyntheticKG kg = make_rule_kg({});
  TrainingData data = make_training_data(kg.train, kg.vocab.entities.size(), kg.vocab.relations.size());
  TrainConfig train;

  Fixture() { train.lr = 1e-3; }

  TrainingState fresh() const {
    Rng rng(42);
    return {config(), init_params(config(), kg.vocab.entities.size(), kg.vocab.relations.size(), rng), {}, 42, 0};
  }
};

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  Fixture fx;
  TrainingState state = fx.fresh();
  train_next_epoch(state, fx.data, fx.train);
  TempDir dir;
  const auto path = dir / "c.rmen";
  save_checkpoint(path, make_checkpoint(state, fx.kg.vocab));
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == state.config);
  CHECK(back.params == state.params);
  CHECK(back.adam.step == state.adam.step);
  CHECK(back.adam.first == state.adam.first);
  CHECK(back.adam.second == state.adam.second);
  CHECK(back.seed == 42);
  CHECK(back.epochs_done == 1);
  CHECK(back.vocab == fx.kg.vocab);
  CHECK(read_file(path).substr(0, 5) == "RMEN1");

  save_checkpoint(dir / "again.rmen", back);
  CHECK(read_file(path) == read_file(dir / "again.rmen"));
}

TEST_CASE("damaged checkpoints are rejected") {
  Fixture fx;
  TempDir dir;
  const auto path = dir / "c.rmen";
  save_checkpoint(path, make_checkpoint(fx.fresh(), fx.kg.vocab));
  const std::string bytes = read_file(path);

  std::string magic = bytes;
  magic[0] = 'X';
  write_bytes(dir / "magic.rmen", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.rmen"), ParseError);

  std::string version = bytes;
  version[5] = 2;
  write_bytes(dir / "version.rmen", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.rmen"), ParseError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(dir / "short.rmen", bytes.substr(0, cut));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.rmen"), ParseError);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.rmen"), ParseError);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  Fixture fx;
  TrainingState straight = fx.fresh();
  std::vector<double> expected;
  for (int e = 0; e < 10; ++e) expected.push_back(train_next_epoch(straight, fx.data, fx.train));

  TrainingState first = fx.fresh();
  std::vector<double> actual;
  for (int e = 0; e < 5; ++e) actual.push_back(train_next_epoch(first, fx.data, fx.train));
  TempDir dir;
  save_checkpoint(dir / "mid.rmen", make_checkpoint(first, fx.kg.vocab));
  TrainingState resumed = restore_state(load_checkpoint(dir / "mid.rmen"));
  for (int e = 0; e < 5; ++e) actual.push_back(train_next_epoch(resumed, fx.data, fx.train));

  CHECK(actual == expected);
  CHECK(resumed.params == straight.params);
  CHECK(resumed.adam.step == straight.adam.step);
}
