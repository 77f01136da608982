#include "rmen/kg_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "rmen/errors.hpp"

namespace rmen {

std::size_t SymbolTable::add(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const std::size_t id = names_.size();
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::size_t SymbolTable::at(std::string_view name) const {
  auto found = find(name);
  if (!found) throw ParseError("unknown symbol '" + std::string(name) + "'");
  return *found;
}

std::optional<std::size_t> SymbolTable::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skippable(const std::string& line) {
  return line.empty() || line.front() == '#' ||
         line.find_first_not_of(" \t") == std::string::npos;
}

// Tab-separated when the line has a tab, whitespace-separated otherwise.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  if (line.find('\t') != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      out.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
  } else {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no) + ": ";
}

double parse_double(const std::string& tok, const std::filesystem::path& path, std::size_t line_no) {
  double value = 0.0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError(where(path, line_no) + "invalid number '" + tok + "'");
  return value;
}

std::size_t lookup(SymbolTable& table, const std::string& name, VocabMode mode, const std::filesystem::path& path,
                   std::size_t line_no) {
  if (mode == VocabMode::kBuild) return table.add(name);
  auto found = table.find(name);
  if (!found) throw ParseError(where(path, line_no) + "unknown symbol '" + name + "'");
  return *found;
}

}  // namespace

void save_vocab(const Vocab& vocab, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto ents = open_output(dir / "entities.txt");
  for (const auto& n : vocab.entities.names()) ents << n << '\n';
  auto rels = open_output(dir / "relations.txt");
  for (const auto& n : vocab.relations.names()) rels << n << '\n';
}

Vocab load_vocab(const std::filesystem::path& dir) {
  Vocab vocab;
  auto read = [](const std::filesystem::path& path, SymbolTable& table) {
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const std::size_t before = table.size();
      if (table.add(line) != before) throw ParseError(where(path, line_no) + "duplicate symbol '" + line + "'");
    }
  };
  read(dir / "entities.txt", vocab.entities);
  read(dir / "relations.txt", vocab.relations);
  return vocab;
}

TripleFile load_triples(const std::filesystem::path& path, Vocab& vocab, VocabMode mode) {
  auto in = open_input(path);
  TripleFile file;
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> labeled;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(where(path, line_no) + "expected 3 or 4 columns, found " + std::to_string(fields.size()));
    }
    const bool has_label = fields.size() == 4;
    if (labeled && *labeled != has_label) throw ParseError(where(path, line_no) + "inconsistent column count");
    labeled = has_label;

    LabeledTriple lt;
    lt.triple.s = lookup(vocab.entities, fields[0], mode, path, line_no);
    lt.triple.r = lookup(vocab.relations, fields[1], mode, path, line_no);
    lt.triple.o = lookup(vocab.entities, fields[2], mode, path, line_no);
    if (has_label) {
      if (fields[3] == "1" || fields[3] == "+1") {
        lt.label = 1;
      } else if (fields[3] == "-1") {
        lt.label = -1;
      } else {
        throw ParseError(where(path, line_no) + "label must be 1 or -1, got '" + fields[3] + "'");
      }
    }
    file.triples.push_back(lt);
  }
  file.labeled = labeled.value_or(false);
  return file;
}

void save_triples(const std::filesystem::path& path, const Vocab& vocab, const std::vector<LabeledTriple>& triples,
                  bool with_labels) {
  auto out = open_output(path);
  for (const auto& lt : triples) {
    out << vocab.entities.name(lt.triple.s) << '\t' << vocab.relations.name(lt.triple.r) << '\t'
        << vocab.entities.name(lt.triple.o);
    if (with_labels) out << '\t' << lt.label;
    out << '\n';
  }
}

std::vector<Triple> strip_labels(const std::vector<LabeledTriple>& triples) {
  std::vector<Triple> out;
  out.reserve(triples.size());
  for (const auto& lt : triples) out.push_back(lt.triple);
  return out;
}

DatasetStats Dataset::stats() const {
  return {vocab.entities.size(), vocab.relations.size(), train.size(), valid.size(), test.size()};
}

Dataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& valid,
                     const std::filesystem::path& test) {
  Dataset data;
  if (!train.empty()) data.train = strip_labels(load_triples(train, data.vocab, VocabMode::kBuild).triples);
  if (!valid.empty()) data.valid = load_triples(valid, data.vocab, VocabMode::kBuild).triples;
  if (!test.empty()) data.test = load_triples(test, data.vocab, VocabMode::kBuild).triples;
  return data;
}

WordVectors load_pretrained(const std::filesystem::path& path, std::size_t dim) {
  auto in = open_input(path);
  WordVectors vectors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> values;
    values.reserve(dim);
    std::string tok;
    while (ss >> tok) values.push_back(parse_double(tok, path, line_no));
    if (values.size() != dim) {
      throw ParseError(where(path, line_no) + "expected " + std::to_string(dim) + " values for '" + token +
                       "', found " + std::to_string(values.size()));
    }
    vectors.try_emplace(token, std::move(values));
  }
  return vectors;
}

std::vector<std::string_view> name_tokens(std::string_view name) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto cut = name.find('_', start);
    const auto token = name.substr(start, cut == std::string_view::npos ? std::string_view::npos : cut - start);
    if (!token.empty()) out.push_back(token);
    if (cut == std::string_view::npos) break;
    start = cut + 1;
  }
  return out;
}

std::optional<std::vector<double>> average_known_tokens(std::string_view name, const WordVectors& vectors,
                                                        std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  std::size_t found = 0;
  for (auto token : name_tokens(name)) {
    auto it = vectors.find(std::string(token));
    if (it == vectors.end()) continue;
    if (it->second.size() != dim) throw DimensionError("word vector for '" + it->first + "' has the wrong size");
    for (std::size_t j = 0; j < dim; ++j) acc[j] += it->second[j];
    ++found;
  }
  if (found == 0) return std::nullopt;
  for (auto& v : acc) v /= static_cast<double>(found);
  return acc;
}

std::vector<double> random_fallback(std::size_t dim, Rng& rng) {
  const double bound = 0.5 / static_cast<double>(dim);
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::vector<double> out(dim);
  for (auto& v : out) v = uni(rng);
  return out;
}

std::vector<double> average_init(std::string_view name, const WordVectors& vectors, std::size_t dim, Rng& rng) {
  if (auto avg = average_known_tokens(name, vectors, dim)) return *std::move(avg);
  return random_fallback(dim, rng);
}

double RelationStats::head_probability(std::size_t relation) const {
  const double tph = relation < tails_per_head.size() ? tails_per_head[relation] : 0.0;
  const double hpt = relation < heads_per_tail.size() ? heads_per_tail[relation] : 0.0;
  if (tph + hpt <= 0.0) return 0.5;
  return tph / (tph + hpt);
}

RelationStats relation_stats(const std::vector<Triple>& triples, std::size_t num_relations) {
  std::vector<std::map<std::size_t, std::set<std::size_t>>> tails(num_relations), heads(num_relations);
  for (const auto& t : triples) {
    if (t.r >= num_relations) throw DimensionError("relation index out of range in relation_stats");
    tails[t.r][t.s].insert(t.o);
    heads[t.r][t.o].insert(t.s);
  }
  RelationStats stats;
  stats.tails_per_head.assign(num_relations, 0.0);
  stats.heads_per_tail.assign(num_relations, 0.0);
  auto mean_fanout = [](const std::map<std::size_t, std::set<std::size_t>>& groups) {
    if (groups.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [key, members] : groups) total += static_cast<double>(members.size());
    return total / static_cast<double>(groups.size());
  };
  for (std::size_t r = 0; r < num_relations; ++r) {
    stats.tails_per_head[r] = mean_fanout(tails[r]);
    stats.heads_per_tail[r] = mean_fanout(heads[r]);
  }
  return stats;
}

Triple corrupt(const Triple& triple, const RelationStats& stats, std::size_t num_entities, Rng& rng,
               const TripleSet& known_valid) {
  if (num_entities < 2) throw DimensionError("corrupt needs at least two entities");
  std::bernoulli_distribution replace_head(stats.head_probability(triple.r));
  std::uniform_int_distribution<std::size_t> pick(0, num_entities - 2);
  const bool head = replace_head(rng);
  Triple out = triple;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const std::size_t original = head ? triple.s : triple.o;
    std::size_t e = pick(rng);
    if (e >= original) ++e;
    out = triple;
    (head ? out.s : out.o) = e;
    if (!known_valid.contains(out)) break;
  }
  return out;
}

RankingFile load_ranking(const std::filesystem::path& path, Vocab& vocab, VocabMode mode) {
  auto in = open_input(path);
  std::vector<RankingInstance> groups;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> group_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ParseError(where(path, line_no) + "expected 4 columns, found " + std::to_string(fields.size()));
    }
    if (fields[3] != "0" && fields[3] != "1") {
      throw ParseError(where(path, line_no) + "relevance must be 0 or 1, got '" + fields[3] + "'");
    }
    const std::size_t q = lookup(vocab.entities, fields[0], mode, path, line_no);
    const std::size_t u = lookup(vocab.relations, fields[1], mode, path, line_no);
    const std::size_t d = lookup(vocab.entities, fields[2], mode, path, line_no);
    auto [it, inserted] = group_of.try_emplace({q, u}, groups.size());
    if (inserted) groups.push_back(RankingInstance{q, u, {}});
    groups[it->second].candidates.push_back({d, fields[3] == "1"});
  }
  RankingFile file;
  for (auto& g : groups) {
    const bool any = std::any_of(g.candidates.begin(), g.candidates.end(), [](const auto& c) { return c.relevant; });
    if (!any) {
      ++file.skipped;
      continue;
    }
    file.instances.push_back(std::move(g));
  }
  if (file.skipped > 0) {
    std::cerr << "warning: " << path.string() << ": skipped " << file.skipped
              << " query/user group(s) without a relevant document\n";
  }
  return file;
}

std::vector<Triple> relevant_triples(const std::vector<RankingInstance>& instances) {
  std::vector<Triple> out;
  for (const auto& inst : instances) {
    for (const auto& c : inst.candidates) {
      if (c.relevant) out.push_back({inst.query, inst.user, c.document});
    }
  }
  return out;
}

}  // namespace rmen
