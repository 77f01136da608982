#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rmen/commands.hpp"
#include "rmen/errors.hpp"

int main(int argc, char** argv) {
  using namespace rmen;
  CLI::App app{"Knowledge-graph triple scoring with a relational memory encoder"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key=value config file; flags override its entries")
      ->check(CLI::ExistingFile);

  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  for (const auto& field : config_fields()) {
    flag_options[field.name] = app.add_option("--" + field.name, flag_values[field.name], field.help);
  }

  const std::map<std::string, std::string> descriptions = {
      {"train", "train the scorer; resumes when --checkpoint is set"},
      {"eval-classify", "fit per-relation thresholds on valid, report test accuracy"},
      {"eval-rank", "re-rank ranking_test and report MRR and Hits@1"},
      {"grid-search", "train every grid point and keep the best on validation"},
      {"ablate", "compare the full model with the w/o Pos and w/o M variants"},
      {"export-scores", "write a score for every triple of --test"},
      {"transe-train", "train TransE and export its embeddings"},
  };
  std::string command;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.count(name) ? descriptions.at(name) : "");
    sub->fallthrough();
    sub->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig config;
    if (!config_path.empty()) apply_settings(config, read_config_file(config_path));
    std::map<std::string, std::string> overrides;
    for (const auto& [name, option] : flag_options) {
      if (option->count() > 0) overrides[name] = flag_values[name];
    }
    apply_settings(config, overrides);
    run_command(command, config, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "rmen " << command << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
