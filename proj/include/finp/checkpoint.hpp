#pragma once

// Model checkpoint file:
//   line 1   JSON header terminated by '\n'
//            {"format":"finp-checkpoint","version":1,"layer_sizes":[...],
//             "activation":"relu","param_count":d,"dtype":"float32",
//             "lineage":{"seed":S,"round":R,"client":K}}
//   rest     d little-endian IEEE-754 binary32 values, flat layout
//
// Models exchanged between clients and server are float32 on the wire, so
// simulator models are rounded through float before upload; round-tripping
// such a model through a checkpoint is bit-exact.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "finp/nncore.hpp"

namespace finp {

struct Lineage {
  std::uint64_t seed = 0;
  std::int64_t round = -1;   // -1: not tied to a round
  std::int64_t client = -1;  // -1: global model
  bool operator==(const Lineage&) const = default;
};

struct Checkpoint {
  nn::ModelParams model;
  Lineage lineage;
};

// Round every parameter to the nearest float32.
nn::ModelParams quantize_f32(const nn::ModelParams& model);
void quantize_f32_inplace(nn::ModelParams& model);

std::string encode_checkpoint(const nn::ModelParams& model, const Lineage& lineage);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const nn::ModelParams& model,
                     const Lineage& lineage);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the float32 payload; identifies a model on the wire.
std::uint64_t wire_hash(const nn::ModelParams& model);

}  // namespace finp
