#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rmen {

using Rng = std::mt19937_64;

// Bijection between symbol names and contiguous indices.
class SymbolTable {
 public:
  // Returns the index of `name`, adding it if unseen.
  std::size_t add(std::string_view name);
  // Throws ParseError for unknown names.
  std::size_t at(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Vocab {
  SymbolTable entities;
  SymbolTable relations;

  bool operator==(const Vocab& other) const {
    return entities.names() == other.entities.names() && relations.names() == other.relations.names();
  }
};

// One name per line, in index order: `entities.txt` and `relations.txt`.
void save_vocab(const Vocab& vocab, const std::filesystem::path& dir);
Vocab load_vocab(const std::filesystem::path& dir);

struct Triple {
  std::size_t s = 0;
  std::size_t r = 0;
  std::size_t o = 0;

  bool operator==(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = t.s * 0x9E3779B97F4A7C15ull;
    h ^= t.r + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    h ^= t.o + 0x94D049BB133111EBull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct LabeledTriple {
  Triple triple;
  int label = 1;  // +1 valid, -1 invalid
};

enum class VocabMode {
  kBuild,  // unseen names are appended to the vocabulary
  kReuse,  // unseen names are an error
};

struct TripleFile {
  std::vector<LabeledTriple> triples;
  bool labeled = false;  // true when every row carried a 4th label column
};

// Reads `subject<TAB>relation<TAB>object[<TAB>label]` rows. Lines starting
// with '#' and blank lines are skipped. Unlabeled rows get label +1.
TripleFile load_triples(const std::filesystem::path& path, Vocab& vocab, VocabMode mode);
void save_triples(const std::filesystem::path& path, const Vocab& vocab, const std::vector<LabeledTriple>& triples,
                  bool with_labels);

std::vector<Triple> strip_labels(const std::vector<LabeledTriple>& triples);

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct Dataset {
  Vocab vocab;
  std::vector<Triple> train;
  std::vector<LabeledTriple> valid;
  std::vector<LabeledTriple> test;

  DatasetStats stats() const;
};

// Loads train, then valid and test with the same vocabulary, in build mode.
// Empty paths are skipped.
Dataset load_dataset(const std::filesystem::path& train, const std::filesystem::path& valid,
                     const std::filesystem::path& test);

using WordVectors = std::unordered_map<std::string, std::vector<double>>;

// Relation rows in exported embedding files carry this prefix so entity and
// relation names cannot collide.
inline constexpr std::string_view kRelationTokenPrefix = "rel::";

// Whitespace-separated `token v1 ... vd` lines; duplicates keep the first row.
WordVectors load_pretrained(const std::filesystem::path& path, std::size_t dim);

// Underscore-separated pieces of `name`, empty pieces dropped.
std::vector<std::string_view> name_tokens(std::string_view name);
// Mean of the vectors of the known tokens of `name`; nullopt if none is known.
std::optional<std::vector<double>> average_known_tokens(std::string_view name, const WordVectors& vectors,
                                                        std::size_t dim);
// Uniform draws from [-0.5/dim, 0.5/dim].
std::vector<double> random_fallback(std::size_t dim, Rng& rng);

// Mean of the vectors of the underscore-separated tokens of `name`. Missing
// tokens are skipped; with none found, each coordinate is drawn uniformly from
// [-0.5/dim, 0.5/dim].
std::vector<double> average_init(std::string_view name, const WordVectors& vectors, std::size_t dim, Rng& rng);

struct RelationStats {
  std::vector<double> tails_per_head;  // indexed by relation, 0 when unseen
  std::vector<double> heads_per_tail;

  // Probability of replacing the head when corrupting a triple of `relation`.
  double head_probability(std::size_t relation) const;
};

RelationStats relation_stats(const std::vector<Triple>& triples, std::size_t num_relations);

// Bernoulli corruption: replaces the head with probability tph/(tph+hpt),
// otherwise the tail, by a uniformly drawn different entity. Draws that land
// in `known_valid` are retried up to 100 times, after which the last draw is
// kept.
Triple corrupt(const Triple& triple, const RelationStats& stats, std::size_t num_entities, Rng& rng,
               const TripleSet& known_valid);

struct RankingCandidate {
  std::size_t document = 0;
  bool relevant = false;
};

struct RankingInstance {
  std::size_t query = 0;  // entity index, subject role
  std::size_t user = 0;   // relation index
  std::vector<RankingCandidate> candidates;  // in original system order
};

struct RankingFile {
  std::vector<RankingInstance> instances;
  std::size_t skipped = 0;  // groups dropped for having no relevant document
};

// Reads `query_id<TAB>user_id<TAB>doc_id<TAB>relevance` rows grouped by
// (query, user), in first-seen group order. Queries and documents share the
// entity table; users go to the relation table.
RankingFile load_ranking(const std::filesystem::path& path, Vocab& vocab, VocabMode mode);

// Relevant (query, user, document) triples, usable as training positives.
std::vector<Triple> relevant_triples(const std::vector<RankingInstance>& instances);

}  // namespace rmen
