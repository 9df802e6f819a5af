#pragma once

// Embedding-time and accuracy harness: k-shot training split, logistic head,
// pruned vs unpruned comparison.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokprune/classifier.hpp"
#include "tokprune/dataset.hpp"
#include "tokprune/encoder.hpp"

namespace tokprune {

inline constexpr std::size_t kDefaultRuns = 7;
inline constexpr std::size_t kDefaultThreads = 4;

struct TimingReport {
  std::vector<double> runs;  // seconds per timed pass
  double mean_seconds = 0.0;
  std::optional<PruneConfig> config_used;
  std::size_t thread_count = 1;
};

// One untimed warm-up pass, then `runs` timed passes; each timed region covers
// tokenize -> encode -> mean pool -> normalize for the whole list. The last
// pass's embeddings are stored in `embeddings_out` when given.
TimingReport time_embeddings(const EncoderModel& model, const Vocab& vocab, std::span<const std::string> texts,
                             const std::optional<PruneConfig>& prune, std::size_t runs, std::size_t threads,
                             std::size_t batch_size = 32,
                             std::vector<SentenceEmbedding>* embeddings_out = nullptr);

// (t_unpruned - t_pruned) / t_unpruned
double speedup(double seconds_unpruned, double seconds_pruned);

struct ExperimentSettings {
  std::size_t k_shots = 5;
  std::uint64_t seed = 0;
  PruneConfig prune;
  std::size_t runs = kDefaultRuns;
  std::size_t threads = kDefaultThreads;
  std::size_t batch_size = 32;
  TrainSettings train;
};

struct ConditionResult {
  ClassificationMetrics metrics;
  TimingReport timing;
};

struct ExperimentReport {
  std::string dataset;
  std::size_t k_shots = 0;
  std::uint64_t seed = 0;
  PruneConfig prune;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t num_labels = 0;
  std::vector<std::string> warnings;
  ConditionResult unpruned;
  ConditionResult pruned;
  double accuracy_delta = 0.0;  // pruned - unpruned
  double speedup = 0.0;

  std::string to_json() const;
  // Same report with every wall-clock field zeroed; stable across reruns.
  std::string to_json_without_timing() const;
};

// The head is trained on a k-shot sample of `pool`. It is evaluated on `test`
// when given, otherwise on the pool examples left out of the sample.
// Errors: a test label unseen in training -> "label error".
ExperimentReport run_experiment(const EncoderModel& model, const Vocab& vocab, const Dataset& pool,
                                const std::optional<Dataset>& test, const ExperimentSettings& settings);

std::string timing_to_json(const TimingReport& report);

}  // namespace tokprune
