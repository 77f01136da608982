#pragma once

// Binary checkpoint layout (all integers and reals little-endian):
//
//   "RMEN1"                 magic
//   u32 version             currently 1
//   u64 n, n bytes          metadata, `key<TAB>value` lines: model config,
//                           seed, epochs, Adam step, vocabulary
//   u32 count               number of arrays
//   count x manifest entry  u32 name length, name, u8 dtype length, "f64",
//                           u32 rank, rank x u64 dims
//   payloads                raw f64 values of each array, manifest order
//
// Arrays are named "param/<name>", "adam.m/<name>" and "adam.v/<name>".

#include <filesystem>

#include "rmen/kg_data.hpp"
#include "rmen/model.hpp"
#include "rmen/training.hpp"

namespace rmen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  AdamState adam;
  std::uint64_t seed = 0;
  std::size_t epochs_done = 0;
  Vocab vocab;
};

Checkpoint make_checkpoint(const TrainingState& state, const Vocab& vocab);
TrainingState restore_state(const Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws ParseError on a bad magic, version mismatch or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rmen
