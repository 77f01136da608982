#include "rmen/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "rmen/errors.hpp"

namespace rmen {

namespace {

std::size_t group_of(std::size_t entity, std::size_t entities, std::size_t groups) {
  return entity / (entities / groups);
}

void check_groups(std::size_t entities, std::size_t groups) {
  if (groups < 2 || entities % groups != 0) throw ConfigError("entities must split into >= 2 equal groups");
}

void add_names(Vocab& vocab, const char* entity_prefix, std::size_t entities, const char* relation_prefix,
               std::size_t relations) {
  for (std::size_t e = 0; e < entities; ++e) vocab.entities.add(entity_prefix + std::to_string(e));
  for (std::size_t r = 0; r < relations; ++r) vocab.relations.add(relation_prefix + std::to_string(r));
}

// Splits a shuffled pool of valid triples into train and the positive halves
// of valid and test, then pairs each evaluation positive with one negative.
template <typename MakeNegative>
void split_pool(SyntheticKG& kg, std::vector<Triple> pool, std::size_t train, std::size_t valid,
                std::size_t test, Rng& rng, MakeNegative make_negative) {
  if (train + valid + test > pool.size()) throw ConfigError("not enough valid triples for the requested splits");
  std::shuffle(pool.begin(), pool.end(), rng);
  kg.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(train));
  auto fill = [&](std::vector<LabeledTriple>& out, std::size_t from, std::size_t count) {
    for (std::size_t i = from; i < from + count; ++i) {
      out.push_back({pool[i], 1});
      out.push_back({make_negative(pool[i], i - from), -1});
    }
  };
  fill(kg.valid, train, valid);
  fill(kg.test, train + valid, test);
}

}  // namespace

SyntheticKG make_rule_kg(const RuleKGOptions& options) {
  check_groups(options.entities, options.groups);
  if (options.shifts.empty()) throw ConfigError("rule KG needs at least one relation");
  SyntheticKG kg;
  add_names(kg.vocab, "e", options.entities, "shift", options.shifts.size());
  const auto groups = static_cast<long>(options.groups);
  std::vector<Triple> pool;
  for (std::size_t r = 0; r < options.shifts.size(); ++r) {
    for (std::size_t s = 0; s < options.entities; ++s) {
      const long target = static_cast<long>(group_of(s, options.entities, options.groups)) + options.shifts[r];
      if (target < 0 || target >= groups) continue;
      for (std::size_t o = 0; o < options.entities; ++o) {
        if (static_cast<long>(group_of(o, options.entities, options.groups)) == target) pool.push_back({s, r, o});
      }
    }
  }
  kg.all_valid.insert(pool.begin(), pool.end());
  const RelationStats stats = relation_stats(pool, options.shifts.size());
  Rng rng(options.seed);
  split_pool(kg, pool, options.train, options.valid_positives, options.test_positives, rng,
             [&](const Triple& t, std::size_t) { return corrupt(t, stats, options.entities, rng, kg.all_valid); });
  return kg;
}

SyntheticKG make_positional_kg(const PositionalKGOptions& options) {
  check_groups(options.entities, options.groups);
  if (options.groups < 3) throw ConfigError("positional KG needs at least 3 groups");
  SyntheticKG kg;
  add_names(kg.vocab, "p", options.entities, "perm", options.relations);
  Rng rng(options.seed);

  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t r = 0; r < options.relations; ++r) {
    std::vector<std::size_t> perm(options.groups);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto acceptable = [&] {
      for (std::size_t g = 0; g < perm.size(); ++g) {
        if (perm[g] == g || perm[perm[g]] == g) return false;
      }
      return true;
    };
    do {
      std::shuffle(perm.begin(), perm.end(), rng);
    } while (!acceptable());
    perms.push_back(std::move(perm));
  }

  std::vector<Triple> pool;
  for (std::size_t r = 0; r < options.relations; ++r) {
    for (std::size_t s = 0; s < options.entities; ++s) {
      const std::size_t target = perms[r][group_of(s, options.entities, options.groups)];
      for (std::size_t o = 0; o < options.entities; ++o) {
        if (group_of(o, options.entities, options.groups) == target) pool.push_back({s, r, o});
      }
    }
  }
  kg.all_valid.insert(pool.begin(), pool.end());
  const RelationStats stats = relation_stats(pool, options.relations);
  split_pool(kg, pool, options.train, options.valid_positives, options.test_positives, rng,
             [&](const Triple& t, std::size_t index) {
               if (index % 2 == 0) return Triple{t.o, t.r, t.s};
               return corrupt(t, stats, options.entities, rng, kg.all_valid);
             });
  return kg;
}

SyntheticRanking make_ranking_set(const RankingOptions& options) {
  if (options.topics < 2 || options.candidates < 2) throw ConfigError("ranking set needs >= 2 topics and candidates");
  if (options.items % options.topics != 0) throw ConfigError("items must split evenly into topics");
  const std::size_t per_topic = options.items / options.topics;
  if (options.train_relevant < 1 || options.train_relevant >= options.candidates ||
      options.train_relevant > per_topic) {
    throw ConfigError("train_relevant must leave room for irrelevant candidates");
  }
  if (options.items - per_topic < options.candidates - 1) {
    throw ConfigError("too few items for the requested candidate lists");
  }
  SyntheticRanking set;
  Rng rng(options.seed);
  for (std::size_t i = 0; i < options.items; ++i) set.vocab.entities.add("i" + std::to_string(i));
  for (std::size_t u = 0; u < options.users; ++u) set.vocab.relations.add("u" + std::to_string(u));

  auto topic = [&](std::size_t i) { return i % options.topics; };
  std::vector<std::vector<std::size_t>> perms(options.users);
  for (auto& perm : perms) {
    perm.resize(options.topics);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
  }

  std::vector<std::pair<std::size_t, std::size_t>> keys;
  for (std::size_t q = 0; q < options.items; ++q) {
    for (std::size_t u = 0; u < options.users; ++u) keys.emplace_back(q, u);
  }
  const std::size_t needed = options.train + options.valid + options.test;
  if (needed > keys.size()) throw ConfigError("not enough (query, user) pairs for the requested splits");
  std::shuffle(keys.begin(), keys.end(), rng);

  std::vector<std::size_t> relevant_docs, other_docs;
  std::vector<RankingInstance> all;
  for (std::size_t i = 0; i < needed; ++i) {
    const auto [q, u] = keys[i];
    const std::size_t wanted = perms[u][topic(q)];
    relevant_docs.clear();
    other_docs.clear();
    for (std::size_t d = 0; d < options.items; ++d) (topic(d) == wanted ? relevant_docs : other_docs).push_back(d);
    RankingInstance inst;
    inst.query = q;
    inst.user = u;
    const std::size_t relevant = i < options.train ? options.train_relevant : 1;
    std::shuffle(relevant_docs.begin(), relevant_docs.end(), rng);
    for (std::size_t c = 0; c < relevant; ++c) inst.candidates.push_back({relevant_docs[c], true});
    std::shuffle(other_docs.begin(), other_docs.end(), rng);
    for (std::size_t c = relevant; c < options.candidates; ++c) {
      inst.candidates.push_back({other_docs[c - relevant], false});
    }
    std::shuffle(inst.candidates.begin(), inst.candidates.end(), rng);
    all.push_back(std::move(inst));
  }
  const auto t = static_cast<std::ptrdiff_t>(options.train);
  const auto v = static_cast<std::ptrdiff_t>(options.valid);
  set.train.assign(all.begin(), all.begin() + t);
  set.valid.assign(all.begin() + t, all.begin() + t + v);
  set.test.assign(all.begin() + t + v, all.end());
  return set;
}

void write_kg(const std::filesystem::path& dir, const SyntheticKG& kg) {
  std::filesystem::create_directories(dir);
  std::vector<LabeledTriple> train;
  for (const auto& t : kg.train) train.push_back({t, 1});
  save_triples(dir / "train.txt", kg.vocab, train, false);
  save_triples(dir / "valid.txt", kg.vocab, kg.valid, true);
  save_triples(dir / "test.txt", kg.vocab, kg.test, true);
}

void write_ranking(const std::filesystem::path& path, const Vocab& vocab,
                   const std::vector<RankingInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& inst : instances) {
    for (const auto& c : inst.candidates) {
      out << vocab.entities.name(inst.query) << '\t' << vocab.relations.name(inst.user) << '\t'
          << vocab.entities.name(c.document) << '\t' << (c.relevant ? 1 : 0) << '\n';
    }
  }
}

}  // namespace rmen
