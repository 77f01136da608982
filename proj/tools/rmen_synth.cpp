#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rmen/synthetic.hpp"

int main(int argc, char** argv) {
  using namespace rmen;
  CLI::App app{"Write small generated datasets for trying out rmen"};
  app.require_subcommand(1);
  std::filesystem::path out = "data";
  std::uint64_t seed = 1;
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "generator seed");

  auto* rules = app.add_subcommand("rules", "group-shift relations (train/valid/test)");
  auto* positional = app.add_subcommand("positional", "relations whose reversals are invalid");
  auto* ranking = app.add_subcommand("ranking", "re-ranking lists (ranking-{train,valid,test}.tsv)");
  for (auto* sub : {rules, positional, ranking}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rules->parsed()) {
      RuleKGOptions opts;
      opts.seed = seed;
      write_kg(out, make_rule_kg(opts));
    } else if (positional->parsed()) {
      PositionalKGOptions opts;
      opts.seed = seed;
      write_kg(out, make_positional_kg(opts));
    } else {
      RankingOptions opts;
      opts.seed = seed;
      const SyntheticRanking set = make_ranking_set(opts);
      std::filesystem::create_directories(out);
      write_ranking(out / "ranking-train.tsv", set.vocab, set.train);
      write_ranking(out / "ranking-valid.tsv", set.vocab, set.valid);
      write_ranking(out / "ranking-test.tsv", set.vocab, set.test);
    }
  } catch (const std::exception& e) {
    std::cerr << "rmen-synth: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "wrote " << out.string() << '\n';
  return 0;
}
