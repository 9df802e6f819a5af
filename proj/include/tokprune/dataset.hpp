#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokprune/classifier.hpp"

namespace tokprune {

struct Example {
  std::string text;
  std::string label;

  friend bool operator==(const Example&, const Example&) = default;
};

// Labeled utterances with label ids assigned in order of first appearance.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<Example> examples);

  const std::string& name() const { return name_; }
  const std::vector<Example>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  // id -> label string
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<LabelId> label_id(const std::string& label) const;

  std::vector<std::string> texts() const;
  std::vector<LabelId> label_ids() const;
  // Ids of this dataset's labels under another label index; a label unknown
  // there raises "label error".
  std::vector<LabelId> label_ids_in(const Dataset& reference) const;

  // Same labels and ids, subset of examples (in the given order).
  Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::string name_;
  std::vector<Example> examples_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, LabelId> label_index_;
};

enum class DatasetFormat { kCsv, kJsonLines };

// `.csv` -> kCsv, `.jsonl` / `.json` / `.ndjson` -> kJsonLines.
DatasetFormat format_from_extension(const std::filesystem::path& path);

// CSV must have a header naming `text` and `label` columns (RFC 4180 quoting);
// JSON-lines rows are objects with string "text" and string or integer "label".
// Errors: missing file -> "io error"; malformed row or empty text -> "format
// error" with its line number; no rows -> "empty dataset".
Dataset load_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format = std::nullopt);
Dataset parse_dataset(const std::string& content, DatasetFormat format, std::string name = "inline");

// Up to k examples per label, drawn uniformly without replacement with a
// seeded generator. The result keeps the input's label ids and example order.
// Labels with fewer than k examples contribute all of them and add a line to
// `warnings`. Errors: k == 0 -> "config error".
Dataset sample_few_shot(const Dataset& dataset, std::size_t k, std::uint64_t seed,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace tokprune
