#pragma once

// Attention-score token pruning. A sentence with at least `s` real tokens
// keeps the keep_count(n, q) tokens whose importance, the column sum of the
// head-averaged attention matrix over real query rows, is highest. Pruning
// happens once, at layer `l`.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tokprune/states.hpp"

namespace tokprune {

struct PruneConfig {
  std::size_t s = 15;  // minimum real-token count for a sentence to be pruned
  double q = 0.8;      // fraction of tokens kept, in (0, 1]
  std::size_t l = 1;   // 1-based layer index

  // Throws "config error".
  void validate() const;
  void validate_for(std::size_t num_layers) const;

  std::string to_json() const;
  static PruneConfig from_json(const std::string& text);

  friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

// One vector per sentence, lengths[b] entries each.
using ImportanceScores = std::vector<std::vector<double>>;
// One ascending list of surviving positions per sentence.
using KeepSet = std::vector<std::vector<std::size_t>>;

// Requires scores.head_mean. Reads only entries whose query and key are both
// real tokens.
ImportanceScores token_importance(const AttentionScores& scores, std::span<const std::uint8_t> pad_mask,
                                  std::span<const std::size_t> lengths);

// max(1, ceil(q * n)), with q * n products within 1e-9 of an integer treated
// as that integer.
std::size_t keep_count(std::size_t n, double q);

KeepSet select_tokens(const ImportanceScores& importance, const PruneConfig& config,
                      std::span<const std::size_t> lengths);

// Gathers surviving rows and repacks the batch to the new maximum length.
HiddenStates apply_pruning(const HiddenStates& hidden, const KeepSet& keep);

}  // namespace tokprune
