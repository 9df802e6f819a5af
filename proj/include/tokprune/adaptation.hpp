#pragma once

// Multitask pruning-configuration search: every (s, q, l) in a grid is scored
// by the unweighted mean, over holdout intent tasks, of the dev metric of a
// logistic head trained on that task's pruned embeddings. The configuration
// with the best mean is then used unchanged for new tasks.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tokprune/classifier.hpp"
#include "tokprune/dataset.hpp"
#include "tokprune/encoder.hpp"
#include "tokprune/pruner.hpp"

namespace tokprune {

struct IntentTask {
  std::string name;
  std::vector<Example> train;
  std::vector<Example> dev;

  // Throws "degenerate task" for empty splits, "label error" when a dev label
  // is missing from train.
  void validate() const;
};

inline constexpr double kDefaultQStep = 0.05;

struct SearchSpace {
  std::vector<std::size_t> s_values;
  std::vector<double> q_values;
  std::vector<std::size_t> l_values;

  void validate() const;
  std::size_t size() const { return s_values.size() * q_values.size() * l_values.size(); }

  // Each key holds either a list or a {"min", "max"[, "step"]} range; q
  // ranges default to a 0.05 step, s and l ranges to 1.
  static SearchSpace from_json(const std::string& text);
  // q grid min, min+step, ... up to max, rounded to 1e-9.
  static std::vector<double> q_range(double min, double max, double step = kDefaultQStep);
};

enum class Metric { kAccuracy, kWeightedF1 };

const char* metric_name(Metric metric);
Metric metric_from_name(const std::string& name);

struct AdaptationSettings {
  Metric metric = Metric::kAccuracy;
  TrainSettings train;
  EmbedSettings embed;
};

struct ConfigEvaluation {
  PruneConfig config;
  std::vector<double> per_task;
  double mean = 0.0;
};

struct SearchResult {
  PruneConfig best;
  std::vector<std::string> task_names;
  Metric metric = Metric::kAccuracy;
  std::vector<ConfigEvaluation> table;  // s-major, then q, then l

  std::string to_json() const;
};

// Dev metric of a head trained on the task's train split, both splits encoded
// with `config` (std::nullopt = no pruning). Errors are rethrown with the task
// name prepended.
double evaluate_config(const EncoderModel& model, const Vocab& vocab, const std::optional<PruneConfig>& config,
                       const IntentTask& task, const AdaptationSettings& settings = {});

// Highest mean wins; ties go to higher q, then higher s, then lower l.
PruneConfig select_best(const std::vector<ConfigEvaluation>& table);

// Exhaustive evaluation of the grid. The first failing task aborts the search.
SearchResult search(const EncoderModel& model, const Vocab& vocab, const SearchSpace& space,
                    const std::vector<IntentTask>& tasks, const AdaptationSettings& settings = {});

// Manifest: {"tasks": [{"name", "train", "dev"}]} with file paths relative to
// the manifest's directory. Errors: "format error".
std::vector<IntentTask> load_task_manifest(const std::filesystem::path& path);

}  // namespace tokprune
