#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tokprune/tensor.hpp"

namespace tokprune {

// Padded B x n x d_model activations stored as a (B*n) x d_model matrix.
// Real tokens of sentence b occupy rows [b*n, b*n + lengths[b]); padding rows
// are zero.
struct HiddenStates {
  std::size_t batch_size = 0;
  std::size_t width = 0;
  MatrixF values;
  std::vector<std::uint8_t> pad_mask;
  std::vector<std::size_t> lengths;

  std::size_t d_model() const { return static_cast<std::size_t>(values.cols()); }

  auto sentence(std::size_t b) {
    return values.middleRows(static_cast<Eigen::Index>(b * width), static_cast<Eigen::Index>(lengths[b]));
  }
  auto sentence(std::size_t b) const {
    return values.middleRows(static_cast<Eigen::Index>(b * width), static_cast<Eigen::Index>(lengths[b]));
  }

  static HiddenStates zeros(const std::vector<std::size_t>& lengths, std::size_t d_model);

  // Throws "shape error" unless mask, lengths and values agree and every
  // sentence's real tokens form a prefix of its row.
  void check_layout() const;
};

// Softmax attention probabilities of one layer. Entries touching a padded
// query or key are exactly zero.
struct AttentionScores {
  std::size_t batch_size = 0;
  std::size_t num_heads = 0;
  std::size_t width = 0;
  std::vector<float> per_head;   // B x H x n x n; empty when not captured
  std::vector<float> head_mean;  // B x n x n; empty when not captured

  float head(std::size_t b, std::size_t h, std::size_t i, std::size_t j) const {
    return per_head[((b * num_heads + h) * width + i) * width + j];
  }
  float mean(std::size_t b, std::size_t i, std::size_t j) const { return head_mean[(b * width + i) * width + j]; }
};

}  // namespace tokprune
