#include "tokprune/bench.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <json.hpp>

#include "tokprune/error.hpp"

namespace tokprune {

using nlohmann::json;

TimingReport time_embeddings(const EncoderModel& model, const Vocab& vocab, std::span<const std::string> texts,
                             const std::optional<PruneConfig>& prune, std::size_t runs, std::size_t threads,
                             std::size_t batch_size, std::vector<SentenceEmbedding>* embeddings_out) {
  if (texts.empty()) fail(ErrorKind::kEmptyBatch, "no texts to time");
  if (runs == 0) fail(ErrorKind::kConfigError, "runs must be positive");
  if (threads == 0) fail(ErrorKind::kConfigError, "threads must be positive");
  const EmbedSettings embed{batch_size, kDefaultMaxLen, threads};

  // Warm-up.
  auto embeddings = embed_texts(model, vocab, texts, prune, embed);

  TimingReport report;
  report.config_used = prune;
  report.thread_count = threads;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto start = std::chrono::steady_clock::now();
    embeddings = embed_texts(model, vocab, texts, prune, embed);
    const auto stop = std::chrono::steady_clock::now();
    report.runs.push_back(std::chrono::duration<double>(stop - start).count());
  }
  report.mean_seconds = std::accumulate(report.runs.begin(), report.runs.end(), 0.0) / static_cast<double>(runs);
  if (embeddings_out) *embeddings_out = std::move(embeddings);
  return report;
}

double speedup(double seconds_unpruned, double seconds_pruned) {
  if (!(seconds_unpruned > 0.0)) fail(ErrorKind::kConfigError, "unpruned time must be positive");
  return (seconds_unpruned - seconds_pruned) / seconds_unpruned;
}

namespace {

json prune_json(const PruneConfig& c) { return {{"s", c.s}, {"q", c.q}, {"l", c.l}}; }

json timing_json(const TimingReport& t) {
  json j = {{"runs", t.runs}, {"mean_seconds", t.mean_seconds}, {"thread_count", t.thread_count}};
  j["config_used"] = t.config_used ? prune_json(*t.config_used) : json(nullptr);
  return j;
}

json metrics_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"weighted_precision", m.weighted_precision},
          {"weighted_recall", m.weighted_recall},
          {"weighted_f1", m.weighted_f1}};
}

json report_json(const ExperimentReport& r) {
  return {{"dataset", r.dataset},
          {"k_shots", r.k_shots},
          {"seed", r.seed},
          {"prune", prune_json(r.prune)},
          {"train_size", r.train_size},
          {"test_size", r.test_size},
          {"num_labels", r.num_labels},
          {"warnings", r.warnings},
          {"accuracy_unpruned", r.unpruned.metrics.accuracy},
          {"accuracy_pruned", r.pruned.metrics.accuracy},
          {"accuracy_delta", r.accuracy_delta},
          {"time_unpruned", r.unpruned.timing.mean_seconds},
          {"time_pruned", r.pruned.timing.mean_seconds},
          {"speedup", r.speedup},
          {"unpruned", {{"metrics", metrics_json(r.unpruned.metrics)}, {"timing", timing_json(r.unpruned.timing)}}},
          {"pruned", {{"metrics", metrics_json(r.pruned.metrics)}, {"timing", timing_json(r.pruned.timing)}}}};
}

ConditionResult run_condition(const EncoderModel& model, const Vocab& vocab, const Dataset& train,
                              const Dataset& test, const std::optional<PruneConfig>& prune,
                              const ExperimentSettings& settings) {
  ConditionResult result;
  std::vector<SentenceEmbedding> train_embeddings;
  const auto train_texts = train.texts();
  result.timing = time_embeddings(model, vocab, train_texts, prune, settings.runs, settings.threads,
                                  settings.batch_size, &train_embeddings);

  const auto head = train_head(train_embeddings, train.label_ids(), settings.train, train.labels());
  const auto test_texts = test.texts();
  const auto test_embeddings =
      embed_texts(model, vocab, test_texts, prune, EmbedSettings{settings.batch_size, kDefaultMaxLen, settings.threads});
  result.metrics = evaluate(head, test_embeddings, test.label_ids_in(train));
  return result;
}

}  // namespace

std::string timing_to_json(const TimingReport& report) { return timing_json(report).dump(2); }

std::string ExperimentReport::to_json() const { return report_json(*this).dump(2); }

std::string ExperimentReport::to_json_without_timing() const {
  ExperimentReport copy = *this;
  for (auto* c : {&copy.unpruned, &copy.pruned}) {
    std::fill(c->timing.runs.begin(), c->timing.runs.end(), 0.0);
    c->timing.mean_seconds = 0.0;
  }
  copy.speedup = 0.0;
  return report_json(copy).dump(2);
}

ExperimentReport run_experiment(const EncoderModel& model, const Vocab& vocab, const Dataset& pool,
                                const std::optional<Dataset>& test, const ExperimentSettings& settings) {
  settings.prune.validate_for(model.config.num_layers);

  ExperimentReport report;
  report.dataset = pool.name();
  report.k_shots = settings.k_shots;
  report.seed = settings.seed;
  report.prune = settings.prune;

  const Dataset train = sample_few_shot(pool, settings.k_shots, settings.seed, &report.warnings);
  Dataset held_out;
  if (test) {
    held_out = *test;
  } else {
    // Sampled examples are a sorted subsequence of the pool; take the rest.
    std::vector<std::size_t> rest;
    std::size_t t = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (t < train.size() && pool.examples()[i] == train.examples()[t]) {
        ++t;
      } else {
        rest.push_back(i);
      }
    }
    held_out = pool.subset(rest);
  }
  if (held_out.empty()) fail(ErrorKind::kEmptyEvaluation, "no test examples remain after k-shot sampling");
  held_out.label_ids_in(train);

  report.train_size = train.size();
  report.test_size = held_out.size();
  report.num_labels = train.labels().size();

  report.unpruned = run_condition(model, vocab, train, held_out, std::nullopt, settings);
  report.pruned = run_condition(model, vocab, train, held_out, settings.prune, settings);
  report.accuracy_delta = report.pruned.metrics.accuracy - report.unpruned.metrics.accuracy;
  report.speedup = speedup(report.unpruned.timing.mean_seconds, report.pruned.timing.mean_seconds);
  return report;
}

}  // namespace tokprune
