#include "rmen/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rmen/errors.hpp"

namespace rmen {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string str(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(const std::string& v) { return v; }

std::string norm_name(NormKind n) { return n == NormKind::L1 ? "l1" : "l2"; }

NormKind to_norm(const std::string& key, const std::string& v) {
  if (v == "l1") return NormKind::L1;
  if (v == "l2") return NormKind::L2;
  throw ConfigError(key + ": expected l1 or l2, got '" + v + "'");
}
std::string str(bool v) { return v ? "true" : "false"; }

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& key, const std::string& v, Parse parse, bool allow_empty = false) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list entry in '" + v + "'");
    out.push_back(parse(key, item));
  }
  if (out.empty() && !allow_empty) throw ConfigError(key + ": list must not be empty");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += str(values[i]);
  }
  return out;
}

const char* init_name(InitMode mode) {
  switch (mode) {
    case InitMode::kRandom:
      return "random";
    case InitMode::kGloveAverage:
      return "glove-average";
    case InitMode::kTranseImport:
      return "transe-import";
  }
  return "random";
}

// `access` maps a config (const or not) to the field it stores.
template <typename Get>
ConfigField make_size(std::string name, std::string help, Get access) {
  return {name, std::move(help), [access](const RunConfig& c) { return str(access(c)); },
          [access, name](RunConfig& c, const std::string& v) { access(c) = to_size(name, v); }};
}

template <typename Get>
ConfigField make_double(std::string name, std::string help, Get access) {
  return {name, std::move(help), [access](const RunConfig& c) { return str(access(c)); },
          [access, name](RunConfig& c, const std::string& v) { access(c) = to_double(name, v); }};
}

template <typename Get>
ConfigField make_bool(std::string name, std::string help, Get access) {
  return {name, std::move(help), [access](const RunConfig& c) { return str(access(c)); },
          [access, name](RunConfig& c, const std::string& v) { access(c) = to_bool(name, v); }};
}

template <typename Get>
ConfigField make_path(std::string name, std::string help, Get access) {
  return {name, std::move(help), [access](const RunConfig& c) { return access(c).string(); },
          [access](RunConfig& c, const std::string& v) { access(c) = v; }};
}

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  f.push_back(make_size("embedding_dim", "entity/relation embedding size d", [](auto& c) -> auto& { return c.model.embedding_dim; }));
  f.push_back(make_size("heads", "attention heads H", [](auto& c) -> auto& { return c.model.heads; }));
  f.push_back(make_size("head_size", "attention head size n (k = n*H)", [](auto& c) -> auto& { return c.model.head_size; }));
  f.push_back(make_size("memory_slots", "memory slots N", [](auto& c) -> auto& { return c.model.memory_slots; }));
  f.push_back(make_size("mlp_layers", "MLP layers l in the memory cell", [](auto& c) -> auto& { return c.model.mlp_layers; }));
  f.push_back(make_size("window", "convolution window m", [](auto& c) -> auto& { return c.model.window; }));
  f.push_back(make_size("filters", "convolution filters F", [](auto& c) -> auto& { return c.model.filters; }));
  f.push_back(make_bool("ablate_pos", "drop positional embeddings", [](auto& c) -> auto& { return c.model.ablate_pos; }));
  f.push_back(make_bool("ablate_mem", "score embeddings without the memory (needs k = d)", [](auto& c) -> auto& { return c.model.ablate_mem; }));

  f.push_back(make_double("lr", "Adam step size", [](auto& c) -> auto& { return c.train.lr; }));
  f.push_back(make_size("batch_size", "positives per batch", [](auto& c) -> auto& { return c.train.batch_size; }));
  f.push_back(make_size("epochs", "training epochs", [](auto& c) -> auto& { return c.train.epochs; }));
  f.push_back(make_size("epoch_cap", "upper bound on epochs", [](auto& c) -> auto& { return c.train.epoch_cap; }));
  f.push_back(make_size("negatives", "corrupted triples per positive", [](auto& c) -> auto& { return c.train.negatives; }));
  f.push_back({"seed", "seed for every random choice",
               [](const RunConfig& c) { return std::to_string(c.train.seed); },
               [](RunConfig& c, const std::string& v) { c.train.seed = c.transe.seed = to_size("seed", v); }});

  f.push_back(make_path("train", "training triples", [](auto& c) -> auto& { return c.train_path; }));
  f.push_back(make_path("valid", "labeled validation triples", [](auto& c) -> auto& { return c.valid_path; }));
  f.push_back(make_path("test", "labeled test triples (or triples to score)", [](auto& c) -> auto& { return c.test_path; }));
  f.push_back(make_path("pretrained", "word vectors for glove-average init", [](auto& c) -> auto& { return c.pretrained; }));
  f.push_back(make_path("transe_embeddings", "exported TransE vectors for transe-import init", [](auto& c) -> auto& { return c.transe_embeddings; }));
  f.push_back(make_path("checkpoint", "checkpoint to evaluate or resume", [](auto& c) -> auto& { return c.checkpoint; }));
  f.push_back(make_path("ranking_train", "ranking lists used for training", [](auto& c) -> auto& { return c.ranking_train; }));
  f.push_back(make_path("ranking_valid", "ranking lists for model selection", [](auto& c) -> auto& { return c.ranking_valid; }));
  f.push_back(make_path("ranking_test", "ranking lists to re-rank", [](auto& c) -> auto& { return c.ranking_test; }));
  f.push_back({"init", "random | glove-average | transe-import",
               [](const RunConfig& c) { return std::string(init_name(c.init)); },
               [](RunConfig& c, const std::string& v) {
                 if (v == "random") c.init = InitMode::kRandom;
                 else if (v == "glove-average") c.init = InitMode::kGloveAverage;
                 else if (v == "transe-import") c.init = InitMode::kTranseImport;
                 else throw ConfigError("init: expected random, glove-average or transe-import, got '" + v + "'");
               }});
  f.push_back(make_path("out", "output directory", [](auto& c) -> auto& { return c.out; }));
  f.push_back(make_size("threads", "worker threads for scoring", [](auto& c) -> auto& { return c.threads; }));

  f.push_back({"grid_heads", "grid values for H", [](const RunConfig& c) { return join(c.grid.heads); },
               [](RunConfig& c, const std::string& v) { c.grid.heads = to_list<std::size_t>("grid_heads", v, to_size); }});
  f.push_back({"grid_head_sizes", "grid values for n", [](const RunConfig& c) { return join(c.grid.head_sizes); },
               [](RunConfig& c, const std::string& v) { c.grid.head_sizes = to_list<std::size_t>("grid_head_sizes", v, to_size); }});
  f.push_back({"grid_mlp_layers", "grid values for l", [](const RunConfig& c) { return join(c.grid.mlp_layers); },
               [](RunConfig& c, const std::string& v) { c.grid.mlp_layers = to_list<std::size_t>("grid_mlp_layers", v, to_size); }});
  f.push_back({"grid_filters", "grid values for F", [](const RunConfig& c) { return join(c.grid.filters); },
               [](RunConfig& c, const std::string& v) { c.grid.filters = to_list<std::size_t>("grid_filters", v, to_size); }});
  f.push_back({"grid_lrs", "grid values for the learning rate", [](const RunConfig& c) { return join(c.grid.lrs); },
               [](RunConfig& c, const std::string& v) { c.grid.lrs = to_list<double>("grid_lrs", v, to_double); }});

  f.push_back(make_size("transe_dim", "TransE embedding size", [](auto& c) -> auto& { return c.transe.dim; }));
  f.push_back({"transe_norm", "l1 | l2", [](const RunConfig& c) { return norm_name(c.transe.norm); },
               [](RunConfig& c, const std::string& v) { c.transe.norm = to_norm("transe_norm", v); }});
  f.push_back(make_double("transe_margin", "TransE margin", [](auto& c) -> auto& { return c.transe.margin; }));
  f.push_back(make_double("transe_lr", "TransE SGD step size", [](auto& c) -> auto& { return c.transe.lr; }));
  f.push_back(make_size("transe_epochs", "TransE epochs", [](auto& c) -> auto& { return c.transe.epochs; }));
  f.push_back(make_size("transe_batch_size", "TransE positives per batch", [](auto& c) -> auto& { return c.transe.batch_size; }));
  f.push_back({"transe_grid_norms", "TransE norms to search (empty: transe_norm)",
               [](const RunConfig& c) {
                 std::vector<std::string> names;
                 for (NormKind n : c.transe_grid.norms) names.push_back(norm_name(n));
                 return join(names);
               },
               [](RunConfig& c, const std::string& v) { c.transe_grid.norms = to_list<NormKind>("transe_grid_norms", trim(v), to_norm, true); }});
  f.push_back({"transe_grid_margins", "TransE margins to search (empty: transe_margin)",
               [](const RunConfig& c) { return join(c.transe_grid.margins); },
               [](RunConfig& c, const std::string& v) { c.transe_grid.margins = to_list<double>("transe_grid_margins", trim(v), to_double, true); }});
  f.push_back({"transe_grid_lrs", "TransE step sizes to search (empty: transe_lr)",
               [](const RunConfig& c) { return join(c.transe_grid.lrs); },
               [](RunConfig& c, const std::string& v) { c.transe_grid.lrs = to_list<double>("transe_grid_lrs", trim(v), to_double, true); }});
  return f;
}

void require_file(const std::filesystem::path& path, const char* key) {
  if (!path.empty() && !std::filesystem::is_regular_file(path)) {
    throw ConfigError(std::string(key) + ": no such file " + path.string());
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  transe.validate();
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (init == InitMode::kGloveAverage && pretrained.empty()) throw ConfigError("init=glove-average needs pretrained");
  if (init == InitMode::kTranseImport && transe_embeddings.empty()) {
    throw ConfigError("init=transe-import needs transe_embeddings");
  }
  require_file(train_path, "train");
  require_file(valid_path, "valid");
  require_file(test_path, "test");
  require_file(pretrained, "pretrained");
  require_file(transe_embeddings, "transe_embeddings");
  require_file(checkpoint, "checkpoint");
  require_file(ranking_train, "ranking_train");
  require_file(ranking_valid, "ranking_valid");
  require_file(ranking_test, "ranking_test");
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": missing key");
    out[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings) {
  const auto& fields = config_fields();
  for (const auto& [key, value] : settings) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return f.name == key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(config, value);
  }
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : config_fields()) out += f.name + "=" + f.get(config) + "\n";
  return out;
}

}  // namespace rmen
