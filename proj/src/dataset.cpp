#include "tokprune/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tokprune/error.hpp"

namespace tokprune {

Dataset::Dataset(std::string name, std::vector<Example> examples)
    : name_(std::move(name)), examples_(std::move(examples)) {
  for (const auto& ex : examples_) {
    if (label_index_.emplace(ex.label, labels_.size()).second) labels_.push_back(ex.label);
  }
}

std::optional<LabelId> Dataset::label_id(const std::string& label) const {
  auto it = label_index_.find(label);
  if (it == label_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Dataset::texts() const {
  std::vector<std::string> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.text);
  return out;
}

std::vector<LabelId> Dataset::label_ids() const { return label_ids_in(*this); }

std::vector<LabelId> Dataset::label_ids_in(const Dataset& reference) const {
  std::vector<LabelId> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) {
    auto id = reference.label_id(ex.label);
    if (!id) fail(ErrorKind::kLabelError, "label '" + ex.label + "' does not occur in " + reference.name());
    out.push_back(*id);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name_ = name_;
  out.labels_ = labels_;
  out.label_index_ = label_index_;
  out.examples_.reserve(indices.size());
  for (std::size_t i : indices) out.examples_.push_back(examples_.at(i));
  return out;
}

DatasetFormat format_from_extension(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return DatasetFormat::kCsv;
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DatasetFormat::kJsonLines;
  fail(ErrorKind::kFormatError, "cannot infer dataset format from extension of " + path.string());
}

namespace {

[[noreturn]] void format_error(const std::string& name, std::size_t line, const std::string& what) {
  fail(ErrorKind::kFormatError, name + ":" + std::to_string(line) + ": " + what);
}

struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRecord> split_csv(const std::string& content, const std::string& name) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_record = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = CsvRecord{};
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted) format_error(name, line, "stray quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        current.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        current.line = ++line;
        break;
      default:
        if (field_was_quoted) format_error(name, line, "characters after closing quote");
        field.push_back(c);
    }
  }
  if (in_quotes) format_error(name, line, "unterminated quoted field");
  if (!field.empty() || field_was_quoted || !current.fields.empty()) end_record();
  return records;
}

std::vector<Example> parse_csv(const std::string& content, const std::string& name) {
  const auto records = split_csv(content, name);
  if (records.empty()) fail(ErrorKind::kEmptyDataset, name + " has no rows");

  const auto& header = records.front().fields;
  auto column = [&](const char* key) {
    auto it = std::find(header.begin(), header.end(), key);
    if (it == header.end()) format_error(name, records.front().line, std::string("header lacks a '") + key + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t text_col = column("text");
  const std::size_t label_col = column("label");

  std::vector<Example> out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      format_error(name, rec.line, "expected " + std::to_string(header.size()) + " fields, found " +
                                       std::to_string(rec.fields.size()));
    }
    if (rec.fields[text_col].empty()) format_error(name, rec.line, "empty text");
    if (rec.fields[label_col].empty()) format_error(name, rec.line, "empty label");
    out.push_back({rec.fields[text_col], rec.fields[label_col]});
  }
  return out;
}

std::vector<Example> parse_jsonl(const std::string& content, const std::string& name) {
  std::vector<Example> out;
  std::istringstream in(content);
  std::string row;
  std::size_t line = 0;
  while (std::getline(in, row)) {
    ++line;
    if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(row);
    } catch (const nlohmann::json::exception& e) {
      format_error(name, line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j.at("text").is_string() || !j.contains("label")) {
      format_error(name, line, "row needs a string \"text\" and a \"label\"");
    }
    Example ex;
    ex.text = j.at("text").get<std::string>();
    const auto& label = j.at("label");
    if (label.is_string()) {
      ex.label = label.get<std::string>();
    } else if (label.is_number_integer()) {
      ex.label = std::to_string(label.get<std::int64_t>());
    } else {
      format_error(name, line, "label must be a string or an integer");
    }
    if (ex.text.empty()) format_error(name, line, "empty text");
    if (ex.label.empty()) format_error(name, line, "empty label");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

Dataset parse_dataset(const std::string& content, DatasetFormat format, std::string name) {
  std::string_view body = content;
  if (body.starts_with("\xEF\xBB\xBF")) body.remove_prefix(3);
  auto examples =
      format == DatasetFormat::kCsv ? parse_csv(std::string(body), name) : parse_jsonl(std::string(body), name);
  if (examples.empty()) fail(ErrorKind::kEmptyDataset, name + " has no examples");
  return Dataset(std::move(name), std::move(examples));
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), format.value_or(format_from_extension(path)), path.filename().string());
}

Dataset sample_few_shot(const Dataset& dataset, std::size_t k, std::uint64_t seed,
                        std::vector<std::string>* warnings) {
  if (k == 0) fail(ErrorKind::kConfigError, "k-shot sampling needs k >= 1");
  std::vector<std::vector<std::size_t>> by_label(dataset.labels().size());
  const auto ids = dataset.label_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) by_label[ids[i]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t label = 0; label < by_label.size(); ++label) {
    auto& pool = by_label[label];
    if (pool.size() < k) {
      if (warnings) {
        warnings->push_back("label '" + dataset.labels()[label] + "' has " + std::to_string(pool.size()) +
                            " examples, fewer than k = " + std::to_string(k));
      }
      chosen.insert(chosen.end(), pool.begin(), pool.end());
      continue;
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(chosen.begin(), chosen.end());
  return dataset.subset(chosen);
}

}  // namespace tokprune
