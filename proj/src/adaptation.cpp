#include "tokprune/adaptation.hpp"

#include <cmath>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "tokprune/error.hpp"

namespace tokprune {

using nlohmann::json;

void IntentTask::validate() const {
  if (train.empty() || dev.empty()) fail(ErrorKind::kDegenerateTask, "task '" + name + "' has an empty split");
  const Dataset train_set(name, train);
  for (const auto& ex : dev) {
    if (!train_set.label_id(ex.label)) {
      fail(ErrorKind::kLabelError, "task '" + name + "': dev label '" + ex.label + "' is absent from train");
    }
  }
}

void SearchSpace::validate() const {
  if (s_values.empty() || q_values.empty() || l_values.empty()) {
    fail(ErrorKind::kConfigError, "search space needs at least one value for each of s, q and l");
  }
  for (auto s : s_values) {
    for (auto q : q_values) {
      for (auto l : l_values) PruneConfig{s, q, l}.validate();
    }
  }
}

std::vector<double> SearchSpace::q_range(double min, double max, double step) {
  if (!(step > 0.0) || min > max) fail(ErrorKind::kConfigError, "q range needs min <= max and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(std::round((min + static_cast<double>(i) * step) * 1e9) / 1e9);
  return out;
}

namespace {

template <typename T>
std::vector<T> integer_axis(const json& j, const char* key) {
  if (j.is_array()) return j.get<std::vector<T>>();
  if (!j.is_object() || !j.contains("min") || !j.contains("max")) {
    fail(ErrorKind::kConfigError, std::string("search space '") + key + "' must be a list or {min, max[, step]}");
  }
  const auto lo = j.at("min").get<T>();
  const auto hi = j.at("max").get<T>();
  const auto step = j.value("step", T{1});
  if (step == 0 || lo > hi) fail(ErrorKind::kConfigError, std::string("bad range for '") + key + "'");
  std::vector<T> out;
  for (T v = lo; v <= hi; v += step) out.push_back(v);
  return out;
}

}  // namespace

SearchSpace SearchSpace::from_json(const std::string& text) {
  SearchSpace space;
  try {
    const json j = json::parse(text);
    if (!j.contains("s") || !j.contains("q") || !j.contains("l")) {
      fail(ErrorKind::kConfigError, "search space needs keys \"s\", \"q\" and \"l\"");
    }
    space.s_values = integer_axis<std::size_t>(j.at("s"), "s");
    space.l_values = integer_axis<std::size_t>(j.at("l"), "l");
    const auto& q = j.at("q");
    if (q.is_array()) {
      space.q_values = q.get<std::vector<double>>();
    } else if (q.is_object() && q.contains("min") && q.contains("max")) {
      space.q_values = q_range(q.at("min").get<double>(), q.at("max").get<double>(), q.value("step", kDefaultQStep));
    } else {
      fail(ErrorKind::kConfigError, "search space 'q' must be a list or {min, max[, step]}");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfigError, std::string("search space: ") + e.what());
  }
  space.validate();
  return space;
}

const char* metric_name(Metric metric) { return metric == Metric::kAccuracy ? "accuracy" : "weighted_f1"; }

Metric metric_from_name(const std::string& name) {
  if (name == "accuracy") return Metric::kAccuracy;
  if (name == "weighted_f1") return Metric::kWeightedF1;
  fail(ErrorKind::kConfigError, "unknown metric '" + name + "'");
}

double evaluate_config(const EncoderModel& model, const Vocab& vocab, const std::optional<PruneConfig>& config,
                       const IntentTask& task, const AdaptationSettings& settings) {
  try {
    task.validate();
    const Dataset train(task.name, task.train);
    const Dataset dev(task.name, task.dev);
    const auto train_texts = train.texts();
    const auto dev_texts = dev.texts();
    const auto train_emb = embed_texts(model, vocab, train_texts, config, settings.embed);
    const auto dev_emb = embed_texts(model, vocab, dev_texts, config, settings.embed);
    const auto head = train_head(train_emb, train.label_ids(), settings.train, train.labels());
    const auto metrics = evaluate(head, dev_emb, dev.label_ids_in(train));
    return settings.metric == Metric::kAccuracy ? metrics.accuracy : metrics.weighted_f1;
  } catch (const Error& e) {
    if (e.detail().starts_with("task '")) throw;
    throw Error(e.kind(), "task '" + task.name + "': " + e.detail());
  }
}

PruneConfig select_best(const std::vector<ConfigEvaluation>& table) {
  if (table.empty()) fail(ErrorKind::kConfigError, "empty result table");
  const ConfigEvaluation* best = &table.front();
  auto rank = [](const ConfigEvaluation& e) {
    // Larger tuple wins; negate l so the lower layer ranks higher.
    return std::make_tuple(e.mean, e.config.q, e.config.s, -static_cast<long long>(e.config.l));
  };
  for (const auto& e : table) {
    if (rank(e) > rank(*best)) best = &e;
  }
  return best->config;
}

SearchResult search(const EncoderModel& model, const Vocab& vocab, const SearchSpace& space,
                    const std::vector<IntentTask>& tasks, const AdaptationSettings& settings) {
  space.validate();
  if (tasks.empty()) fail(ErrorKind::kConfigError, "search needs at least one task");
  for (const auto& l : space.l_values) PruneConfig{1, 1.0, l}.validate_for(model.config.num_layers);
  for (const auto& t : tasks) t.validate();

  SearchResult result;
  result.metric = settings.metric;
  for (const auto& t : tasks) result.task_names.push_back(t.name);
  for (auto s : space.s_values) {
    for (auto q : space.q_values) {
      for (auto l : space.l_values) {
        ConfigEvaluation e{PruneConfig{s, q, l}, {}, 0.0};
        double sum = 0.0;
        for (const auto& task : tasks) {
          e.per_task.push_back(evaluate_config(model, vocab, e.config, task, settings));
          sum += e.per_task.back();
        }
        e.mean = sum / static_cast<double>(tasks.size());
        result.table.push_back(std::move(e));
      }
    }
  }
  result.best = select_best(result.table);
  return result;
}

std::string SearchResult::to_json() const {
  auto cfg = [](const PruneConfig& c) { return json{{"s", c.s}, {"q", c.q}, {"l", c.l}}; };
  json rows = json::array();
  for (const auto& e : table) rows.push_back({{"config", cfg(e.config)}, {"per_task", e.per_task}, {"mean", e.mean}});
  return json{{"best", cfg(best)}, {"metric", metric_name(metric)}, {"tasks", task_names}, {"table", rows}}.dump(2);
}

std::vector<IntentTask> load_task_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormatError, path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty()) {
    fail(ErrorKind::kFormatError, path.string() + ": expected {\"tasks\": [...]} with at least one task");
  }
  const auto base = path.parent_path();
  std::vector<IntentTask> tasks;
  for (const auto& t : j.at("tasks")) {
    if (!t.is_object() || !t.contains("train") || !t.contains("dev") || !t.at("train").is_string() ||
        !t.at("dev").is_string()) {
      fail(ErrorKind::kFormatError, path.string() + ": every task needs string \"train\" and \"dev\" paths");
    }
    IntentTask task;
    const auto train_path = base / t.at("train").get<std::string>();
    task.name = t.value("name", train_path.stem().string());
    task.train = load_dataset(train_path).examples();
    task.dev = load_dataset(base / t.at("dev").get<std::string>()).examples();
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace tokprune
