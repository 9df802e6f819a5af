#pragma once

// On-disk model layout (one directory):
//   model.safetensors    F32 tensors, names listed in docs/model_format.md
//   encoder_config.json  EncoderConfig, keys as in EncoderConfig below
//   vocab.txt            one token per line, line index = token id
//
// Linear weights are stored [out_features, in_features], biases [out_features].

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tokprune/tensor.hpp"
#include "tokprune/tokenizer.hpp"

namespace tokprune {

inline constexpr const char* kArchiveFile = "model.safetensors";
inline constexpr const char* kConfigFile = "encoder_config.json";
inline constexpr const char* kVocabFile = "vocab.txt";

struct EncoderConfig {
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_k = 0;
  std::size_t d_ff = 0;
  std::size_t vocab_size = 0;
  std::size_t max_position = 0;
  double layernorm_eps = 1e-12;

  // Throws "config error" on any violated invariant.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// The shape MiniLM-L12 sentence encoders use.
EncoderConfig minilm_l12_config();

struct LayerWeights {
  MatrixF query_w, key_w, value_w;  // d_model x d_model, heads packed along rows
  VectorF query_b, key_b, value_b;
  MatrixF attn_out_w;  // d_model x d_model
  VectorF attn_out_b;
  VectorF attn_ln_gamma, attn_ln_beta;
  MatrixF ffn_in_w;   // d_ff x d_model
  VectorF ffn_in_b;   // d_ff
  MatrixF ffn_out_w;  // d_model x d_ff
  VectorF ffn_out_b;
  VectorF ffn_ln_gamma, ffn_ln_beta;
};

struct EncoderModel {
  EncoderConfig config;
  MatrixF token_embeddings;     // vocab_size x d_model
  MatrixF position_embeddings;  // max_position x d_model
  MatrixF segment_embeddings;   // 2 x d_model
  VectorF emb_ln_gamma, emb_ln_beta;
  std::vector<LayerWeights> layers;

  // Throws "shape error" naming the first mismatched tensor, or
  // "corrupt weights" for non-finite values.
  void validate() const;
};

struct ModelBundle {
  EncoderModel model;
  Vocab vocab;
};

EncoderConfig config_from_json(const std::string& text);
std::string config_to_json(const EncoderConfig& config);

// Archive tensor names in a fixed, documented order.
std::vector<std::string> tensor_names(const EncoderConfig& config);

EncoderModel load_model(const std::filesystem::path& model_dir);
ModelBundle load_bundle(const std::filesystem::path& model_dir);
void save_bundle(const std::filesystem::path& model_dir, const EncoderModel& model, const Vocab& vocab);

// Uniform on [-1/sqrt(d_model), 1/sqrt(d_model)] for weights, embeddings and
// linear biases; layernorm scales 1, layernorm biases 0.
EncoderModel init_random_encoder(const EncoderConfig& config, std::uint64_t seed);

}  // namespace tokprune
