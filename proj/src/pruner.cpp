#include "tokprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "tokprune/error.hpp"

namespace tokprune {

using nlohmann::json;

void PruneConfig::validate() const {
  if (!(q > 0.0 && q <= 1.0)) fail(ErrorKind::kConfigError, "prune q must lie in (0, 1], got " + std::to_string(q));
  if (s < 1) fail(ErrorKind::kConfigError, "prune s must be at least 1");
  if (l < 1) fail(ErrorKind::kConfigError, "prune l is 1-based and must be at least 1");
}

void PruneConfig::validate_for(std::size_t num_layers) const {
  validate();
  if (l > num_layers) {
    fail(ErrorKind::kConfigError,
         "prune l = " + std::to_string(l) + " exceeds the model's " + std::to_string(num_layers) + " layers");
  }
}

std::string PruneConfig::to_json() const { return json{{"s", s}, {"q", q}, {"l", l}}.dump(); }

PruneConfig PruneConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfigError, std::string("prune config is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("s") || !j.contains("q") || !j.contains("l") ||
      !j.at("s").is_number_unsigned() || !j.at("q").is_number() || !j.at("l").is_number_unsigned()) {
    fail(ErrorKind::kConfigError, "prune config needs unsigned \"s\", numeric \"q\" and unsigned \"l\"");
  }
  PruneConfig c{j.at("s").get<std::size_t>(), j.at("q").get<double>(), j.at("l").get<std::size_t>()};
  c.validate();
  return c;
}

ImportanceScores token_importance(const AttentionScores& scores, std::span<const std::uint8_t> pad_mask,
                                  std::span<const std::size_t> lengths) {
  const std::size_t n = scores.width;
  if (lengths.size() != scores.batch_size || pad_mask.size() != scores.batch_size * n ||
      scores.head_mean.size() != scores.batch_size * n * n) {
    fail(ErrorKind::kShapeError, "attention scores, mask and lengths disagree on batch layout");
  }

  ImportanceScores out(scores.batch_size);
  std::vector<std::size_t> real;
  for (std::size_t b = 0; b < scores.batch_size; ++b) {
    real.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (pad_mask[b * n + i]) real.push_back(i);
    }
    if (real.size() != lengths[b]) {
      fail(ErrorKind::kShapeError, "pad mask of sentence " + std::to_string(b) + " does not match its length");
    }
    auto& imp = out[b];
    imp.assign(real.size(), 0.0);
    for (std::size_t i : real) {
      for (std::size_t k = 0; k < real.size(); ++k) imp[k] += scores.mean(b, i, real[k]);
    }
  }
  return out;
}

std::size_t keep_count(std::size_t n, double q) {
  const double kept = std::ceil(q * static_cast<double>(n) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(kept));
}

KeepSet select_tokens(const ImportanceScores& importance, const PruneConfig& config,
                      std::span<const std::size_t> lengths) {
  config.validate();
  if (importance.size() != lengths.size()) fail(ErrorKind::kShapeError, "importance and lengths disagree");
  KeepSet keep(lengths.size());
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t n = lengths[b];
    const auto& imp = importance[b];
    if (imp.size() != n) {
      fail(ErrorKind::kShapeError, "sentence " + std::to_string(b) + " has " + std::to_string(imp.size()) +
                                       " importance scores for " + std::to_string(n) + " tokens");
    }
    auto& kept = keep[b];
    kept.resize(n);
    std::iota(kept.begin(), kept.end(), std::size_t{0});
    if (n < config.s) continue;

    const std::size_t k = keep_count(n, config.q);
    // Highest importance first; equal scores keep the earlier position.
    std::stable_sort(kept.begin(), kept.end(), [&imp](std::size_t a, std::size_t c) { return imp[a] > imp[c]; });
    kept.resize(k);
    std::sort(kept.begin(), kept.end());
  }
  return keep;
}

HiddenStates apply_pruning(const HiddenStates& hidden, const KeepSet& keep) {
  hidden.check_layout();
  if (keep.size() != hidden.batch_size) fail(ErrorKind::kShapeError, "keep set and batch size disagree");

  std::vector<std::size_t> new_lengths(keep.size());
  for (std::size_t b = 0; b < keep.size(); ++b) {
    const auto& kept = keep[b];
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i] >= hidden.lengths[b]) {
        fail(ErrorKind::kShapeError, "keep position " + std::to_string(kept[i]) + " out of range for sentence " +
                                         std::to_string(b) + " of length " + std::to_string(hidden.lengths[b]));
      }
      if (i > 0 && kept[i] <= kept[i - 1]) {
        fail(ErrorKind::kShapeError, "keep positions of sentence " + std::to_string(b) + " are not increasing");
      }
    }
    new_lengths[b] = kept.size();
  }

  HiddenStates out = HiddenStates::zeros(new_lengths, hidden.d_model());
  for (std::size_t b = 0; b < keep.size(); ++b) {
    const auto src = hidden.sentence(b);
    auto dst = out.sentence(b);
    for (std::size_t i = 0; i < keep[b].size(); ++i) {
      dst.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(keep[b][i]));
    }
  }
  return out;
}

}  // namespace tokprune
