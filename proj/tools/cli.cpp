#include "cli.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokprune/adaptation.hpp"
#include "tokprune/bench.hpp"
#include "tokprune/classifier.hpp"
#include "tokprune/dataset.hpp"
#include "tokprune/encoder.hpp"
#include "tokprune/error.hpp"
#include "tokprune/model_io.hpp"

namespace tokprune::cli {
namespace {

using nlohmann::json;

struct CommonFlags {
  std::string model_dir;
  std::size_t prune_s = 15;
  double prune_q = 0.8;
  std::size_t prune_l = 1;
  bool no_prune = false;
  std::size_t threads = kDefaultThreads;
  std::uint64_t seed = 0;
  std::string out_path;
  std::size_t batch_size = 32;

  std::optional<PruneConfig> prune() const {
    if (no_prune) return std::nullopt;
    PruneConfig c{prune_s, prune_q, prune_l};
    c.validate();
    return c;
  }
};

// Failures while loading the model map to exit code 3 whatever their kind.
struct ModelLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ModelBundle load(const CommonFlags& flags) {
  try {
    return load_bundle(flags.model_dir);
  } catch (const std::exception& e) {
    throw ModelLoadError(e.what());
  }
}

void emit(const CommonFlags& flags, std::ostream& out, const std::string& text) {
  if (flags.out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(flags.out_path, std::ios::trunc);
  if (!file) fail(ErrorKind::kIoError, "cannot write " + flags.out_path);
  file << text;
}

void add_model_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--model-dir", f.model_dir, "Directory with model.safetensors, encoder_config.json, vocab.txt")
      ->required();
  cmd->add_option("--threads", f.threads, "Thread cap for all internal parallelism")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "Sentences per encoder batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", f.out_path, "Write output here instead of stdout");
}

void add_prune_flags(CLI::App* cmd, CommonFlags& f) {
  auto* s = cmd->add_option("--prune-s", f.prune_s, "Minimum token count for pruning")->capture_default_str();
  auto* q = cmd->add_option("--prune-q", f.prune_q, "Fraction of tokens kept")->capture_default_str();
  auto* l = cmd->add_option("--prune-l", f.prune_l, "1-based layer where pruning runs")->capture_default_str();
  cmd->add_flag("--no-prune", f.no_prune, "Disable token pruning")->excludes(s)->excludes(q)->excludes(l);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorKind::kEmptyBatch, path + " has no lines");
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kLabelError:
      return kLabelError;
    case ErrorKind::kArtifactMissing:
    case ErrorKind::kShapeError:
    case ErrorKind::kCorruptWeights:
    case ErrorKind::kVocabError:
      return kModelError;
    default:
      return kInputError;
  }
}

std::vector<SentenceEmbedding> embed_all(const ModelBundle& bundle, const std::vector<std::string>& texts,
                                         const CommonFlags& flags) {
  return embed_texts(bundle.model, bundle.vocab, texts, flags.prune(),
                     EmbedSettings{flags.batch_size, kDefaultMaxLen, flags.threads});
}

int cmd_embed(const CommonFlags& flags, const std::string& input, std::ostream& out) {
  const auto texts = read_lines(input);
  const auto prune = flags.prune();
  const ModelBundle bundle = load(flags);
  const auto embeddings = embed_all(bundle, texts, flags);
  std::string text;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& e = embeddings[i];
    json row = {{"text", texts[i]}, {"embedding", std::vector<float>(e.data(), e.data() + e.size())}};
    text += row.dump();
    text += '\n';
  }
  emit(flags, out, text);
  return kOk;
}

int cmd_train_eval(const CommonFlags& flags, const std::string& train_path, const std::string& test_path,
                   const std::string& save_head_path, std::ostream& out) {
  const Dataset train = load_dataset(train_path);
  const Dataset test = load_dataset(test_path);
  const auto test_labels = test.label_ids_in(train);
  const auto prune = flags.prune();
  const ModelBundle bundle = load(flags);

  TrainSettings settings;
  settings.seed = flags.seed;
  const auto head = train_head(embed_all(bundle, train.texts(), flags), train.label_ids(), settings, train.labels());
  if (!save_head_path.empty()) save_head(head, save_head_path);
  const auto m = evaluate(head, embed_all(bundle, test.texts(), flags), test_labels);
  const json result = {{"accuracy", m.accuracy},
                       {"weighted_precision", m.weighted_precision},
                       {"weighted_recall", m.weighted_recall},
                       {"weighted_f1", m.weighted_f1}};
  emit(flags, out, result.dump(2) + "\n");
  return kOk;
}

int cmd_search(const CommonFlags& flags, const std::string& manifest, const std::string& space_path,
               const std::string& metric, std::ostream& out) {
  const auto tasks = load_task_manifest(manifest);
  const auto space = SearchSpace::from_json(read_file(space_path));
  const ModelBundle bundle = load(flags);
  AdaptationSettings settings;
  settings.metric = metric_from_name(metric);
  settings.train.seed = flags.seed;
  settings.embed = EmbedSettings{flags.batch_size, kDefaultMaxLen, flags.threads};
  const auto result = search(bundle.model, bundle.vocab, space, tasks, settings);
  emit(flags, out, result.to_json() + "\n");
  return kOk;
}

int cmd_bench(const CommonFlags& flags, const std::string& dataset_path, const std::string& test_path,
              std::size_t k, std::size_t runs, std::ostream& out) {
  const Dataset pool = load_dataset(dataset_path);
  std::optional<Dataset> test;
  if (!test_path.empty()) test = load_dataset(test_path);
  if (flags.no_prune) fail(ErrorKind::kConfigError, "bench compares against a pruned run; drop --no-prune");
  const ModelBundle bundle = load(flags);

  ExperimentSettings settings;
  settings.k_shots = k;
  settings.seed = flags.seed;
  settings.prune = *flags.prune();
  settings.runs = runs;
  settings.threads = flags.threads;
  settings.batch_size = flags.batch_size;
  settings.train.seed = flags.seed;
  const auto report = run_experiment(bundle.model, bundle.vocab, pool, test, settings);
  emit(flags, out, report.to_json() + "\n");
  return kOk;
}

struct InitFlags {
  std::string out_dir;
  std::string vocab_path;
  std::size_t vocab_size = 1000;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t max_position = 512;
  std::uint64_t seed = 0;
};

// Special tokens, then "w0", "w1", ... filler words.
Vocab synthetic_vocab(std::size_t size) {
  std::vector<std::string> tokens{kPadToken, kUnkToken, kClsToken, kSepToken};
  for (std::size_t i = 0; tokens.size() < size; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab::from_tokens(std::move(tokens));
}

int cmd_init_random(const InitFlags& f, std::ostream& err) {
  const Vocab vocab = f.vocab_path.empty() ? synthetic_vocab(f.vocab_size) : Vocab::load(f.vocab_path);
  EncoderConfig config;
  config.num_layers = f.layers;
  config.num_heads = f.heads;
  config.d_model = f.d_model;
  config.d_k = f.heads == 0 ? 0 : f.d_model / f.heads;
  config.d_ff = f.d_ff;
  config.vocab_size = vocab.size();
  config.max_position = f.max_position;
  save_bundle(f.out_dir, init_random_encoder(config, f.seed), vocab);
  err << "wrote random encoder to " << f.out_dir << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sentence embeddings with attention-score token pruning", "tokprune"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string input, train_path, test_path, save_head_path, manifest, space_path, dataset_path;
  std::string metric = "accuracy";
  std::size_t k = 5;
  std::size_t runs = kDefaultRuns;
  InitFlags init;

  auto* embed = app.add_subcommand("embed", "Write one JSON line {text, embedding} per input line");
  add_model_flags(embed, flags);
  add_prune_flags(embed, flags);
  embed->add_option("input", input, "Text file, one utterance per line")->required();

  auto* train_eval = app.add_subcommand("train-eval", "Train a logistic head and report test metrics");
  add_model_flags(train_eval, flags);
  add_prune_flags(train_eval, flags);
  train_eval->add_option("train", train_path, "Training dataset (.csv or .jsonl)")->required();
  train_eval->add_option("test", test_path, "Test dataset (.csv or .jsonl)")->required();
  train_eval->add_option("--seed", flags.seed, "Training seed")->capture_default_str();
  train_eval->add_option("--save-head", save_head_path, "Save the trained head as JSON + safetensors");

  auto* search_cmd = app.add_subcommand("search", "Grid-search (s, q, l) over holdout tasks");
  add_model_flags(search_cmd, flags);
  search_cmd->add_option("manifest", manifest, "Task manifest JSON")->required();
  search_cmd->add_option("space", space_path, "Search space JSON")->required();
  search_cmd->add_option("--metric", metric, "Task metric")
      ->check(CLI::IsMember({"accuracy", "weighted_f1"}))
      ->capture_default_str();
  search_cmd->add_option("--seed", flags.seed, "Training seed")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Pruned vs unpruned accuracy and embedding time on a k-shot split");
  add_model_flags(bench, flags);
  add_prune_flags(bench, flags);
  bench->add_option("dataset", dataset_path, "Labeled pool the k-shot training split is drawn from")->required();
  bench->add_option("--test", test_path, "Test split; defaults to the pool examples left out of the sample");
  bench->add_option("-k,--k-shots", k, "Examples per label")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--runs", runs, "Timed passes per condition")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--seed", flags.seed, "Sampling seed")->capture_default_str();

  auto* init_cmd = app.add_subcommand("init-random", "Write a seeded random encoder directory");
  init_cmd->add_option("--out", init.out_dir, "Output model directory")->required();
  init_cmd->add_option("--vocab", init.vocab_path, "Vocabulary file (default: synthetic)");
  init_cmd->add_option("--vocab-size", init.vocab_size, "Synthetic vocabulary size")->capture_default_str();
  init_cmd->add_option("--layers", init.layers)->capture_default_str();
  init_cmd->add_option("--heads", init.heads)->capture_default_str();
  init_cmd->add_option("--d-model", init.d_model)->capture_default_str();
  init_cmd->add_option("--d-ff", init.d_ff)->capture_default_str();
  init_cmd->add_option("--max-position", init.max_position)->capture_default_str();
  init_cmd->add_option("--seed", init.seed)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kInputError;
  }

  try {
    if (*embed) return cmd_embed(flags, input, out);
    if (*train_eval) return cmd_train_eval(flags, train_path, test_path, save_head_path, out);
    if (*search_cmd) return cmd_search(flags, manifest, space_path, metric, out);
    if (*bench) return cmd_bench(flags, dataset_path, test_path, k, runs, out);
    if (*init_cmd) return cmd_init_random(init, err);
  } catch (const ModelLoadError& e) {
    err << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace tokprune::cli
