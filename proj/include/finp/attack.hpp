#pragma once

// Source inference: for every known training record the server picks the
// client whose uploaded model assigns it the smallest cross-entropy.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "finp/nncore.hpp"
#include "finp/rng.hpp"

namespace finp::attack {

enum class TieBreak { lowest_id, random };

struct TargetRecord {
  std::vector<double> x;
  int label = 0;
  int source = 0;
};

struct TargetSet {
  std::vector<TargetRecord> records;  // grouped by source, client-id order
  std::size_t n_per_client = 0;
  std::size_t clients = 0;

  nn::Batch as_batch() const;
};

struct SiaRoundResult {
  std::size_t clients = 0;
  bool defined = false;             // false when there are no targets
  std::vector<double> accuracy;     // per true source; NaN when undefined
  std::vector<double> target_loss;  // mean CE of client k's model on k's own targets
  std::vector<std::size_t> attribution;  // K x K, [true][predicted]

  std::size_t count(std::size_t truth, std::size_t predicted) const {
    return attribution[truth * clients + predicted];
  }
  double mean_accuracy() const;
};

TargetSet select_targets(std::span<const nn::Batch> shards, std::size_t n_per_client, Rng& rng);

// rng is only consulted for TieBreak::random.
SiaRoundResult sia_round(std::span<const nn::ModelParams> client_models, const TargetSet& targets,
                         TieBreak tie_break = TieBreak::lowest_id, Rng* rng = nullptr);

// Same decision rule on a precomputed loss matrix losses[model][target].
SiaRoundResult attribute(const std::vector<std::vector<double>>& losses, const TargetSet& targets,
                         TieBreak tie_break = TieBreak::lowest_id, Rng* rng = nullptr);

}  // namespace finp::attack
