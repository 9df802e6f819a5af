#pragma once

// Multinomial logistic-regression head over frozen sentence embeddings.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tokprune/encoder.hpp"
#include "tokprune/tensor.hpp"

namespace tokprune {

using LabelId = std::size_t;

struct ClassifierHead {
  MatrixD weights;  // C x d_model
  VectorD biases;   // C
  std::vector<std::string> label_names;

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
};

struct TrainSettings {
  double l2_lambda = 1e-4;
  std::size_t max_iters = 500;
  double tol = 1e-6;
  std::uint64_t seed = 0;  // reserved; full-batch training does not sample

  void validate() const;
};

struct TrainLog {
  std::vector<double> losses;  // objective after every accepted step, starting at the zero init
  std::size_t iterations = 0;
  bool converged = false;
};

// Mean cross-entropy + l2_lambda/2 * ||W||^2 (biases unpenalized) and its
// gradient. Exposed for gradient checking.
struct Objective {
  double loss = 0.0;
  MatrixD grad_weights;
  VectorD grad_biases;
};
Objective softmax_objective(const MatrixD& features, std::span<const LabelId> labels, const MatrixD& weights,
                            const VectorD& biases, double l2_lambda);

// Full-batch gradient descent with Armijo backtracking from a zero init; stops
// when the gradient's max-abs entry drops below tol or after max_iters.
// Errors: class without examples or fewer than two classes -> "degenerate task";
// dimension mismatch -> "shape error".
ClassifierHead train_head(std::span<const SentenceEmbedding> embeddings, std::span<const LabelId> labels,
                          const TrainSettings& settings = {}, std::vector<std::string> label_names = {},
                          TrainLog* log = nullptr);

struct Prediction {
  LabelId label = 0;  // argmax, ties to the lower id
  VectorD probabilities;
};

Prediction predict(const ClassifierHead& head, const SentenceEmbedding& embedding);

// Errors: empty set -> "empty evaluation".
double accuracy(const ClassifierHead& head, std::span<const SentenceEmbedding> embeddings,
                std::span<const LabelId> labels);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
};

// Per-class precision/recall/F1 averaged with gold-label support weights;
// a class never predicted has precision 0.
ClassificationMetrics evaluate(const ClassifierHead& head, std::span<const SentenceEmbedding> embeddings,
                               std::span<const LabelId> labels);

// Writes <path> (JSON) and <path without extension>.safetensors next to it.
void save_head(const ClassifierHead& head, const std::filesystem::path& json_path);
ClassifierHead load_head(const std::filesystem::path& json_path);

}  // namespace tokprune
