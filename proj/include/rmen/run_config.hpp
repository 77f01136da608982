#pragma once

// Flat key=value run configuration shared by every command. Keys are the
// snake_case field names below; the same names are accepted as --flags.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rmen/model.hpp"
#include "rmen/training.hpp"
#include "rmen/transe.hpp"

namespace rmen {

enum class InitMode { kRandom, kGloveAverage, kTranseImport };

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TranseConfig transe;
  Grid grid = Grid::full_search();
  TranseGrid transe_grid;

  std::filesystem::path train_path, valid_path, test_path;
  std::filesystem::path pretrained, transe_embeddings, checkpoint;
  std::filesystem::path ranking_train, ranking_valid, ranking_test;
  InitMode init = InitMode::kRandom;
  std::filesystem::path out = "out";
  std::size_t threads = 1;

  // Cross-field checks: model shape rules, init sources, existing paths.
  void validate() const;
};

struct ConfigField {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;  // throws ConfigError
};

const std::vector<ConfigField>& config_fields();

// `key=value` lines; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Applies settings in order; unknown keys are a ConfigError.
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);

// Every field as `key=value`, readable by read_config_file.
std::string format_config(const RunConfig& config);

}  // namespace rmen
