#include "tokprune/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tokprune/error.hpp"
#include "tokprune/safetensors.hpp"

namespace tokprune {

using nlohmann::json;

void TrainSettings::validate() const {
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) fail(ErrorKind::kConfigError, "l2_lambda must be >= 0");
  if (max_iters < 1) fail(ErrorKind::kConfigError, "max_iters must be positive");
  if (!(tol > 0.0)) fail(ErrorKind::kConfigError, "tol must be positive");
}

namespace {

MatrixD stack_features(std::span<const SentenceEmbedding> embeddings) {
  const auto d = embeddings.empty() ? 0 : embeddings.front().size();
  MatrixD x(static_cast<Eigen::Index>(embeddings.size()), d);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != d) fail(ErrorKind::kShapeError, "embeddings differ in dimension");
    x.row(static_cast<Eigen::Index>(i)) = embeddings[i].cast<double>().transpose();
  }
  return x;
}

// Row-wise softmax of logits, in place; returns each row's log-sum-exp.
VectorD softmax_in_place(MatrixD& logits) {
  VectorD lse(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    const double total = row.sum();
    row /= total;
    lse[r] = m + std::log(total);
  }
  return lse;
}

// Objective value; leaves the row-wise softmax of the logits in `probs`.
double evaluate_objective(const MatrixD& x, std::span<const LabelId> labels, const MatrixD& w, const VectorD& b,
                          double l2_lambda, MatrixD& probs) {
  probs.noalias() = x * w.transpose();
  probs.rowwise() += b.transpose();
  double data_loss = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= static_cast<std::size_t>(w.rows())) fail(ErrorKind::kShapeError, "label out of range");
    data_loss -= probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r]));
  }
  data_loss += softmax_in_place(probs).sum();
  return data_loss / static_cast<double>(x.rows()) + 0.5 * l2_lambda * w.squaredNorm();
}

}  // namespace

Objective softmax_objective(const MatrixD& features, std::span<const LabelId> labels, const MatrixD& weights,
                            const VectorD& biases, double l2_lambda) {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || features.cols() != weights.cols() ||
      weights.rows() != biases.size()) {
    fail(ErrorKind::kShapeError, "objective inputs disagree in shape");
  }
  Objective obj;
  MatrixD probs;
  obj.loss = evaluate_objective(features, labels, weights, biases, l2_lambda, probs);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])) -= 1.0;
  }
  probs /= static_cast<double>(features.rows());
  obj.grad_weights = probs.transpose() * features + l2_lambda * weights;
  obj.grad_biases = probs.colwise().sum().transpose();
  return obj;
}

ClassifierHead train_head(std::span<const SentenceEmbedding> embeddings, std::span<const LabelId> labels,
                          const TrainSettings& settings, std::vector<std::string> label_names, TrainLog* log) {
  settings.validate();
  if (embeddings.size() != labels.size()) fail(ErrorKind::kShapeError, "embedding and label counts differ");
  if (embeddings.empty()) fail(ErrorKind::kDegenerateTask, "no training examples");

  std::size_t num_classes = label_names.size();
  for (LabelId y : labels) num_classes = std::max(num_classes, y + 1);
  std::vector<std::size_t> counts(num_classes, 0);
  for (LabelId y : labels) ++counts[y];
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      fail(ErrorKind::kDegenerateTask,
           "label " + (c < label_names.size() ? "'" + label_names[c] + "'" : std::to_string(c)) + " has no examples");
    }
  }
  if (num_classes < 2) fail(ErrorKind::kDegenerateTask, "need at least two classes");
  if (label_names.empty()) {
    for (std::size_t c = 0; c < num_classes; ++c) label_names.push_back(std::to_string(c));
  }

  const MatrixD x = stack_features(embeddings);
  const auto c = static_cast<Eigen::Index>(num_classes);
  MatrixD w = MatrixD::Zero(c, x.cols());
  VectorD b = VectorD::Zero(c);

  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1e-16;
  double step = 1.0;
  MatrixD scratch;
  TrainLog local;
  Objective obj = softmax_objective(x, labels, w, b, settings.l2_lambda);
  local.losses.push_back(obj.loss);

  for (std::size_t it = 0; it < settings.max_iters; ++it) {
    const double grad_inf = std::max(obj.grad_weights.cwiseAbs().maxCoeff(), obj.grad_biases.cwiseAbs().maxCoeff());
    if (grad_inf < settings.tol) {
      local.converged = true;
      break;
    }
    const double grad_sq = obj.grad_weights.squaredNorm() + obj.grad_biases.squaredNorm();
    step = std::min(step * 2.0, 1e6);
    bool accepted = false;
    while (step >= kMinStep) {
      MatrixD w_try = w - step * obj.grad_weights;
      VectorD b_try = b - step * obj.grad_biases;
      const double f_try = evaluate_objective(x, labels, w_try, b_try, settings.l2_lambda, scratch);
      if (f_try <= obj.loss - kArmijo * step * grad_sq) {
        w = std::move(w_try);
        b = std::move(b_try);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    obj = softmax_objective(x, labels, w, b, settings.l2_lambda);
    local.losses.push_back(obj.loss);
    local.iterations = it + 1;
  }
  if (log) *log = std::move(local);
  return ClassifierHead{std::move(w), std::move(b), std::move(label_names)};
}

Prediction predict(const ClassifierHead& head, const SentenceEmbedding& embedding) {
  if (static_cast<std::size_t>(embedding.size()) != head.dim()) {
    fail(ErrorKind::kShapeError, "embedding has " + std::to_string(embedding.size()) + " entries, head expects " +
                                     std::to_string(head.dim()));
  }
  VectorD logits = head.weights * embedding.cast<double>() + head.biases;
  Prediction p;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  p.label = static_cast<LabelId>(best);
  p.probabilities = (logits.array() - logits[best]).exp().matrix();
  p.probabilities /= p.probabilities.sum();
  return p;
}

double accuracy(const ClassifierHead& head, std::span<const SentenceEmbedding> embeddings,
                std::span<const LabelId> labels) {
  return evaluate(head, embeddings, labels).accuracy;
}

ClassificationMetrics evaluate(const ClassifierHead& head, std::span<const SentenceEmbedding> embeddings,
                               std::span<const LabelId> labels) {
  if (embeddings.empty()) fail(ErrorKind::kEmptyEvaluation, "no evaluation examples");
  if (embeddings.size() != labels.size()) fail(ErrorKind::kShapeError, "embedding and label counts differ");

  const std::size_t classes = head.num_classes();
  std::vector<double> tp(classes, 0), predicted(classes, 0), support(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (labels[i] >= classes) fail(ErrorKind::kLabelError, "gold label outside the head's classes");
    const LabelId guess = predict(head, embeddings[i]).label;
    ++predicted[guess];
    ++support[labels[i]];
    if (guess == labels[i]) {
      ++tp[guess];
      ++correct;
    }
  }

  ClassificationMetrics m;
  const auto total = static_cast<double>(embeddings.size());
  m.accuracy = static_cast<double>(correct) / total;
  for (std::size_t k = 0; k < classes; ++k) {
    if (support[k] == 0) continue;
    const double precision = predicted[k] > 0 ? tp[k] / predicted[k] : 0.0;
    const double recall = tp[k] / support[k];
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    const double weight = support[k] / total;
    m.weighted_precision += weight * precision;
    m.weighted_recall += weight * recall;
    m.weighted_f1 += weight * f1;
  }
  return m;
}

void save_head(const ClassifierHead& head, const std::filesystem::path& json_path) {
  auto archive_path = json_path;
  archive_path.replace_extension(".safetensors");

  safetensors::Archive archive;
  archive.tensors["weights"] = safetensors::Tensor::from_f64(
      {head.num_classes(), head.dim()},
      std::span<const double>(head.weights.data(), static_cast<std::size_t>(head.weights.size())));
  archive.tensors["biases"] = safetensors::Tensor::from_f64(
      {head.num_classes()}, std::span<const double>(head.biases.data(), static_cast<std::size_t>(head.biases.size())));
  safetensors::write_file(archive_path, archive);

  const json j = {{"num_classes", head.num_classes()},
                  {"d_model", head.dim()},
                  {"label_names", head.label_names},
                  {"archive", archive_path.filename().string()}};
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIoError, "cannot write " + json_path.string());
  out << j.dump(2) << '\n';
}

ClassifierHead load_head(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) fail(ErrorKind::kArtifactMissing, json_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormatError, json_path.string() + ": " + e.what());
  }
  if (!j.contains("archive") || !j.contains("label_names") || !j.contains("num_classes") || !j.contains("d_model")) {
    fail(ErrorKind::kFormatError, json_path.string() + " lacks head fields");
  }
  const auto archive = safetensors::read_file(json_path.parent_path() / j.at("archive").get<std::string>());
  const auto classes = j.at("num_classes").get<std::size_t>();
  const auto dim = j.at("d_model").get<std::size_t>();
  auto tensor = [&archive](const char* name, std::vector<std::size_t> shape) {
    auto it = archive.tensors.find(name);
    if (it == archive.tensors.end() || it->second.shape != shape) fail(ErrorKind::kShapeError, name);
    return it->second.to_f64();
  };
  const auto w = tensor("weights", {classes, dim});
  const auto b = tensor("biases", {classes});

  ClassifierHead head;
  head.weights = Eigen::Map<const MatrixD>(w.data(), static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  head.biases = Eigen::Map<const VectorD>(b.data(), static_cast<Eigen::Index>(classes));
  head.label_names = j.at("label_names").get<std::vector<std::string>>();
  if (head.label_names.size() != classes) fail(ErrorKind::kShapeError, "label_names length != num_classes");
  if (!head.weights.allFinite() || !head.biases.allFinite()) fail(ErrorKind::kCorruptWeights, json_path.string());
  return head;
}

}  // namespace tokprune
