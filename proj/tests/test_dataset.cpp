#include <doctest.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "tokprune/dataset.hpp"
#include "tokprune/error.hpp"

using namespace tokprune;
using namespace tokprune::testing;

namespace {

Error caught(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorKind::kIoError, "");
}

Dataset balanced(std::size_t labels, std::size_t per_label) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < per_label; ++i)
    for (std::size_t c = 0; c < labels; ++c)
      examples.push_back({"text " + std::to_string(c) + "/" + std::to_string(i), "intent_" + std::to_string(c)});
  return Dataset("balanced", std::move(examples));
}

}  // namespace

TEST_CASE("CSV ingest assigns label ids by first appearance") {
  const auto ds = parse_dataset("text,label\nbook a flight,travel\nwhat's the weather,weather\nfly me home,travel\n",
                                DatasetFormat::kCsv);
  CHECK(ds.size() == 3);
  CHECK(ds.labels() == std::vector<std::string>{"travel", "weather"});
  CHECK(ds.label_ids() == std::vector<LabelId>{0, 1, 0});
  CHECK(ds.texts()[1] == "what's the weather");
}

TEST_CASE("CSV quoting, column order, CRLF and BOM") {
  const auto ds = parse_dataset(
      "\xEF\xBB\xBFlabel,text\r\ngreet,\"hello, there\"\r\nquote,\"she said \"\"hi\"\"\"\r\nmulti,\"two\nlines\"\r\n",
      DatasetFormat::kCsv);
  REQUIRE(ds.size() == 3);
  CHECK(ds.examples()[0] == Example{"hello, there", "greet"});
  CHECK(ds.examples()[1].text == "she said \"hi\"");
  CHECK(ds.examples()[2].text == "two\nlines");
}

TEST_CASE("ingest errors carry line numbers") {
  const auto empty_text = caught([] { parse_dataset("text,label\nok,a\n,b\n", DatasetFormat::kCsv); });
  CHECK(empty_text.kind() == ErrorKind::kFormatError);
  CHECK(std::string(empty_text.what()).find("inline:3:") != std::string::npos);

  CHECK(caught([] { parse_dataset("text,label\nok,a,extra\n", DatasetFormat::kCsv); }).kind() ==
        ErrorKind::kFormatError);
  CHECK(caught([] { parse_dataset("words,label\nok,a\n", DatasetFormat::kCsv); }).kind() == ErrorKind::kFormatError);
  CHECK(caught([] { parse_dataset("text,label\n\"open,a\n", DatasetFormat::kCsv); }).kind() ==
        ErrorKind::kFormatError);
  CHECK(caught([] { parse_dataset("text,label\n", DatasetFormat::kCsv); }).kind() == ErrorKind::kEmptyDataset);
  CHECK(caught([] { parse_dataset("", DatasetFormat::kCsv); }).kind() == ErrorKind::kEmptyDataset);

  const auto bad_json =
      caught([] { parse_dataset("{\"text\":\"a\",\"label\":\"x\"}\n{\"text\":1}\n", DatasetFormat::kJsonLines); });
  CHECK(bad_json.kind() == ErrorKind::kFormatError);
  CHECK(std::string(bad_json.what()).find("inline:2:") != std::string::npos);
  CHECK(caught([] { parse_dataset("\n\n", DatasetFormat::kJsonLines); }).kind() == ErrorKind::kEmptyDataset);
}

TEST_CASE("JSON-lines ingest and file loading") {
  TempDir dir;
  std::ofstream(dir / "d.jsonl") << "{\"text\": \"play music\", \"label\": \"music\"}\n\n"
                                    "{\"text\": \"stop\", \"label\": 7}\n";
  const auto ds = load_dataset(dir / "d.jsonl");
  CHECK(ds.size() == 2);
  CHECK(ds.labels() == std::vector<std::string>{"music", "7"});
  CHECK(format_from_extension("x.csv") == DatasetFormat::kCsv);
  CHECK(format_from_extension("x.ndjson") == DatasetFormat::kJsonLines);
  CHECK(caught([&] { load_dataset(dir / "missing.csv"); }).kind() == ErrorKind::kIoError);
}

TEST_CASE("label lookup across datasets") {
  const Dataset train("train", {{"a", "x"}, {"b", "y"}});
  const Dataset test("test", {{"c", "y"}, {"d", "x"}});
  CHECK(test.label_ids_in(train) == std::vector<LabelId>{1, 0});
  const Dataset unseen("test", {{"c", "z"}});
  CHECK(caught([&] { unseen.label_ids_in(train); }).kind() == ErrorKind::kLabelError);
}

TEST_CASE("few-shot sampling") {
  const auto ds = balanced(150, 4);
  const auto one = sample_few_shot(ds, 1, 42);
  CHECK(one.size() == 150);
  std::map<std::string, int> counts;
  for (const auto& e : one.examples()) ++counts[e.label];
  CHECK(counts.size() == 150);
  CHECK(one.labels() == ds.labels());

  const auto again = sample_few_shot(ds, 3, 7);
  CHECK(again.examples() == sample_few_shot(ds, 3, 7).examples());
  CHECK(again.examples() != sample_few_shot(ds, 3, 8).examples());

  std::vector<std::string> warnings;
  const auto all = sample_few_shot(ds, 10, 1, &warnings);
  CHECK(all.examples() == ds.examples());
  CHECK(warnings.size() == 150);

  CHECK(caught([&] { sample_few_shot(ds, 0, 1); }).kind() == ErrorKind::kConfigError);
}

TEST_CASE("property: sampling takes min(k, available) per label, without replacement") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Example> examples;
    for (int i = 0; i < 60; ++i) examples.push_back({"t" + std::to_string(i), "l" + std::to_string(pick(rng))});
    const Dataset ds("random", examples);
    const std::size_t k = 1 + static_cast<std::size_t>(trial % 6);
    const auto sample = sample_few_shot(ds, k, static_cast<std::uint64_t>(trial));
    std::map<std::string, std::size_t> available, taken;
    for (const auto& e : ds.examples()) ++available[e.label];
    std::set<std::string> texts;
    for (const auto& e : sample.examples()) {
      ++taken[e.label];
      CHECK(texts.insert(e.text).second);
    }
    for (const auto& [label, n] : available) CHECK(taken[label] == std::min(k, n));
  }
}
