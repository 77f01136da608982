#pragma once

// Small generated datasets with known ground truth, used by the acceptance
// checks and for smoke-testing the command line.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rmen/kg_data.hpp"

namespace rmen {

struct SyntheticKG {
  Vocab vocab;
  std::vector<Triple> train;
  std::vector<LabeledTriple> valid;  // balanced +1/-1
  std::vector<LabeledTriple> test;
  TripleSet all_valid;  // every triple the generating rules accept
};

// Entities e_0..e_{n-1} fall into `groups` equal groups of consecutive
// indices. Relation r links s to o iff group(o) = group(s) + shifts[r];
// subjects whose shifted group falls outside [0, groups) have no tails.
struct RuleKGOptions {
  std::size_t entities = 50;
  std::size_t groups = 10;
  std::vector<int> shifts = {1, 2, 3, -2};
  std::size_t train = 500;
  std::size_t valid_positives = 50;
  std::size_t test_positives = 50;
  std::uint64_t seed = 1;
};

SyntheticKG make_rule_kg(const RuleKGOptions& options);

// Relation r links s to o iff group(o) = perm_r(group(s)) for a random group
// permutation whose square has no fixed point, so the reversal (o, r, s) of a
// valid triple is never valid. Half of the evaluation negatives are such
// reversals, the other half Bernoulli corruptions.
struct PositionalKGOptions {
  std::size_t entities = 40;
  std::size_t groups = 8;
  std::size_t relations = 3;
  std::size_t train = 400;
  std::size_t valid_positives = 50;
  std::size_t test_positives = 50;
  std::uint64_t seed = 1;
};

SyntheticKG make_positional_kg(const PositionalKGOptions& options);

struct SyntheticRanking {
  Vocab vocab;
  std::vector<RankingInstance> train;
  std::vector<RankingInstance> valid;
  std::vector<RankingInstance> test;
};

// Items i_0..i_{n-1} serve as both queries and documents; item i has topic
// i mod `topics`. User u finds a document relevant iff
// topic(doc) = perm_u(topic(query)). Every (query, user) instance lists one
// relevant and `candidates - 1` irrelevant documents in random order; training
// instances list `train_relevant` relevant documents instead.
struct RankingOptions {
  std::size_t items = 60;
  std::size_t users = 4;
  std::size_t topics = 5;
  std::size_t candidates = 5;
  std::size_t train_relevant = 4;
  std::size_t train = 160;
  std::size_t valid = 40;
  std::size_t test = 40;
  std::uint64_t seed = 1;
};

SyntheticRanking make_ranking_set(const RankingOptions& options);

// train.txt (unlabeled), valid.txt and test.txt (labeled).
void write_kg(const std::filesystem::path& dir, const SyntheticKG& kg);
// `query user doc relevance` rows.
void write_ranking(const std::filesystem::path& path, const Vocab& vocab,
                   const std::vector<RankingInstance>& instances);

}  // namespace rmen
