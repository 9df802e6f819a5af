#include "tokprune/model_io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tokprune/error.hpp"
#include "tokprune/safetensors.hpp"

namespace tokprune {

using nlohmann::json;

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) fail(ErrorKind::kConfigError, std::string(name) + " must be positive");
  };
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(d_model, "d_model");
  positive(d_k, "d_k");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  if (max_position < 2) fail(ErrorKind::kConfigError, "max_position must be at least 2");
  if (d_k * num_heads != d_model) {
    fail(ErrorKind::kConfigError, "d_k * num_heads (" + std::to_string(d_k * num_heads) + ") != d_model (" +
                                      std::to_string(d_model) + ")");
  }
  if (!(static_cast<float>(layernorm_eps) > 0.0f) || !std::isfinite(layernorm_eps)) {
    fail(ErrorKind::kConfigError, "layernorm_eps must be a small positive number");
  }
}

EncoderConfig minilm_l12_config() {
  EncoderConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.d_model = 384;
  c.d_k = 32;
  c.d_ff = 1536;
  c.vocab_size = 30522;
  c.max_position = 512;
  c.layernorm_eps = 1e-12;
  return c;
}

EncoderConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  auto dim = [&j](const char* key) -> std::size_t {
    if (!j.contains(key)) fail(ErrorKind::kConfigError, std::string("config lacks key '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      fail(ErrorKind::kConfigError, std::string("config key '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  };
  EncoderConfig c;
  c.num_layers = dim("num_layers");
  c.num_heads = dim("num_heads");
  c.d_model = dim("d_model");
  c.d_k = dim("d_k");
  c.d_ff = dim("d_ff");
  c.vocab_size = dim("vocab_size");
  c.max_position = dim("max_position");
  if (!j.contains("layernorm_eps") || !j.at("layernorm_eps").is_number()) {
    fail(ErrorKind::kConfigError, "config lacks numeric 'layernorm_eps'");
  }
  c.layernorm_eps = j.at("layernorm_eps").get<double>();
  c.validate();
  return c;
}

std::string config_to_json(const EncoderConfig& c) {
  json j = {{"num_layers", c.num_layers}, {"num_heads", c.num_heads},       {"d_model", c.d_model},
            {"d_k", c.d_k},               {"d_ff", c.d_ff},                 {"vocab_size", c.vocab_size},
            {"max_position", c.max_position}, {"layernorm_eps", c.layernorm_eps}};
  return j.dump(2) + "\n";
}

namespace {

// Visits every tensor of the model together with its archive name and
// expected shape. Vectors have a single dimension.
struct TensorVisitor {
  std::function<void(const std::string&, MatrixF&, std::size_t, std::size_t)> matrix;
  std::function<void(const std::string&, VectorF&, std::size_t)> vector;
};

void visit_tensors(EncoderModel& m, const TensorVisitor& v) {
  const auto& c = m.config;
  v.matrix("embeddings.word_embeddings.weight", m.token_embeddings, c.vocab_size, c.d_model);
  v.matrix("embeddings.position_embeddings.weight", m.position_embeddings, c.max_position, c.d_model);
  v.matrix("embeddings.token_type_embeddings.weight", m.segment_embeddings, 2, c.d_model);
  v.vector("embeddings.LayerNorm.weight", m.emb_ln_gamma, c.d_model);
  v.vector("embeddings.LayerNorm.bias", m.emb_ln_beta, c.d_model);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& L = m.layers[i];
    const std::string p = "encoder.layer." + std::to_string(i) + ".";
    v.matrix(p + "attention.self.query.weight", L.query_w, c.d_model, c.d_model);
    v.vector(p + "attention.self.query.bias", L.query_b, c.d_model);
    v.matrix(p + "attention.self.key.weight", L.key_w, c.d_model, c.d_model);
    v.vector(p + "attention.self.key.bias", L.key_b, c.d_model);
    v.matrix(p + "attention.self.value.weight", L.value_w, c.d_model, c.d_model);
    v.vector(p + "attention.self.value.bias", L.value_b, c.d_model);
    v.matrix(p + "attention.output.dense.weight", L.attn_out_w, c.d_model, c.d_model);
    v.vector(p + "attention.output.dense.bias", L.attn_out_b, c.d_model);
    v.vector(p + "attention.output.LayerNorm.weight", L.attn_ln_gamma, c.d_model);
    v.vector(p + "attention.output.LayerNorm.bias", L.attn_ln_beta, c.d_model);
    v.matrix(p + "intermediate.dense.weight", L.ffn_in_w, c.d_ff, c.d_model);
    v.vector(p + "intermediate.dense.bias", L.ffn_in_b, c.d_ff);
    v.matrix(p + "output.dense.weight", L.ffn_out_w, c.d_model, c.d_ff);
    v.vector(p + "output.dense.bias", L.ffn_out_b, c.d_model);
    v.vector(p + "output.LayerNorm.weight", L.ffn_ln_gamma, c.d_model);
    v.vector(p + "output.LayerNorm.bias", L.ffn_ln_beta, c.d_model);
  }
}

template <typename Visitor>
void visit_const(const EncoderModel& m, Visitor&& v) {
  // Safe: every visitor passed here only reads the tensors it is given.
  visit_tensors(const_cast<EncoderModel&>(m), v);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kArtifactMissing, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::kArtifactMissing, path.string());
}

}  // namespace

std::vector<std::string> tensor_names(const EncoderConfig& config) {
  EncoderModel shell;
  shell.config = config;
  shell.layers.resize(config.num_layers);
  std::vector<std::string> names;
  visit_tensors(shell, {[&](const std::string& n, MatrixF&, std::size_t, std::size_t) { names.push_back(n); },
                        [&](const std::string& n, VectorF&, std::size_t) { names.push_back(n); }});
  return names;
}

void EncoderModel::validate() const {
  config.validate();
  if (layers.size() != config.num_layers) {
    fail(ErrorKind::kShapeError, "model has " + std::to_string(layers.size()) + " layers, config declares " +
                                     std::to_string(config.num_layers));
  }
  visit_const(*this, TensorVisitor{
                         [](const std::string& n, MatrixF& t, std::size_t rows, std::size_t cols) {
                           if (static_cast<std::size_t>(t.rows()) != rows ||
                               static_cast<std::size_t>(t.cols()) != cols) {
                             fail(ErrorKind::kShapeError, n);
                           }
                           if (!t.allFinite()) fail(ErrorKind::kCorruptWeights, n);
                         },
                         [](const std::string& n, VectorF& t, std::size_t size) {
                           if (static_cast<std::size_t>(t.size()) != size) fail(ErrorKind::kShapeError, n);
                           if (!t.allFinite()) fail(ErrorKind::kCorruptWeights, n);
                         }});
}

EncoderModel load_model(const std::filesystem::path& model_dir) {
  const auto archive_path = model_dir / kArchiveFile;
  const auto config_path = model_dir / kConfigFile;
  require_file(config_path);
  require_file(archive_path);
  require_file(model_dir / kVocabFile);

  EncoderModel model;
  model.config = config_from_json(read_text(config_path));
  model.layers.resize(model.config.num_layers);
  const auto archive = safetensors::read_file(archive_path);

  auto fetch = [&archive](const std::string& name, std::vector<std::size_t> shape) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end()) fail(ErrorKind::kShapeError, name + " is absent from the archive");
    const auto& t = it->second;
    if (t.dtype != safetensors::DType::kF32) fail(ErrorKind::kShapeError, name + " is not F32");
    if (t.shape != shape) fail(ErrorKind::kShapeError, name);
    return t.to_f32();
  };
  visit_tensors(model, {[&](const std::string& n, MatrixF& m, std::size_t rows, std::size_t cols) {
                          const auto data = fetch(n, {rows, cols});
                          m = Eigen::Map<const MatrixF>(data.data(), static_cast<Eigen::Index>(rows),
                                                        static_cast<Eigen::Index>(cols));
                        },
                        [&](const std::string& n, VectorF& v, std::size_t size) {
                          const auto data = fetch(n, {size});
                          v = Eigen::Map<const VectorF>(data.data(), static_cast<Eigen::Index>(size));
                        }});
  model.validate();
  return model;
}

ModelBundle load_bundle(const std::filesystem::path& model_dir) {
  ModelBundle bundle{load_model(model_dir), Vocab::load(model_dir / kVocabFile)};
  if (bundle.vocab.size() != bundle.model.config.vocab_size) {
    fail(ErrorKind::kShapeError, "vocab.txt has " + std::to_string(bundle.vocab.size()) +
                                     " tokens, config declares vocab_size " +
                                     std::to_string(bundle.model.config.vocab_size));
  }
  return bundle;
}

void save_bundle(const std::filesystem::path& model_dir, const EncoderModel& model, const Vocab& vocab) {
  model.validate();
  if (vocab.size() != model.config.vocab_size) fail(ErrorKind::kShapeError, "vocab size does not match config");
  std::filesystem::create_directories(model_dir);

  safetensors::Archive archive;
  visit_const(model, TensorVisitor{
                         [&](const std::string& n, MatrixF& m, std::size_t rows, std::size_t cols) {
                           archive.tensors[n] = safetensors::Tensor::from_f32(
                               {rows, cols}, std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
                         },
                         [&](const std::string& n, VectorF& v, std::size_t size) {
                           archive.tensors[n] = safetensors::Tensor::from_f32(
                               {size}, std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
                         }});
  archive.metadata["format"] = "pt";
  safetensors::write_file(model_dir / kArchiveFile, archive);

  std::ofstream cfg(model_dir / kConfigFile, std::ios::trunc);
  if (!cfg) fail(ErrorKind::kIoError, "cannot write " + (model_dir / kConfigFile).string());
  cfg << config_to_json(model.config);
  vocab.save(model_dir / kVocabFile);
}

EncoderModel init_random_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderModel model;
  model.config = config;
  model.layers.resize(config.num_layers);

  const float scale = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-scale, scale);
  auto is_layernorm = [](const std::string& n) { return n.find("LayerNorm") != std::string::npos; };

  visit_tensors(model, {[&](const std::string&, MatrixF& m, std::size_t rows, std::size_t cols) {
                          m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
                          for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
                        },
                        [&](const std::string& n, VectorF& v, std::size_t size) {
                          v.resize(static_cast<Eigen::Index>(size));
                          if (is_layernorm(n)) {
                            const bool is_scale = n.ends_with(".weight");
                            v.setConstant(is_scale ? 1.0f : 0.0f);
                          } else {
                            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
                          }
                        }});
  return model;
}

}  // namespace tokprune
