#include "ebv/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ebv/error.hpp"

namespace ebv {

namespace {

Eigen::VectorXd unit_direction(const VectorRef& v, const char* what) {
  const double norm = v.norm();
  if (!(norm >= kMinEmbeddingNorm) || !std::isfinite(norm)) {
    throw DegenerateInput(std::string(what) + " has zero or non-finite norm");
  }
  return v / norm;
}

void check_dim(const ClassifierHead& head, const VectorRef& embedding) {
  if (static_cast<std::size_t>(embedding.size()) != head.dim()) {
    throw InvalidConfig("embedding has " + std::to_string(embedding.size()) +
                        " entries, head expects " + std::to_string(head.dim()));
  }
}

void check_label(const ClassifierHead& head, std::size_t label) {
  if (label >= head.num_classes()) {
    throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(head.num_classes()) + ")");
  }
}

Eigen::VectorXd softmax_of_cosines(const Eigen::VectorXd& cosines, double temperature) {
  Eigen::VectorXd logits = cosines / temperature;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

}  // namespace

ClassifierHead::ClassifierHead(FrameMatrix frame, double temperature,
                               std::optional<std::size_t> num_classes)
    : frame_(std::move(frame)),
      temperature_(temperature),
      num_classes_(num_classes.value_or(frame_.num())) {
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) {
    throw InvalidConfig("temperature must be positive");
  }
  if (num_classes_ == 0 || num_classes_ > frame_.num()) {
    throw InvalidConfig("num_classes must be in [1, " + std::to_string(frame_.num()) + "]");
  }
  if (!frame_.has_unit_rows(1e-6)) {
    throw IntegrityError("head frame rows must be unit norm");
  }
}

Eigen::VectorXd class_cosines(const ClassifierHead& head, const VectorRef& embedding) {
  check_dim(head, embedding);
  const Eigen::VectorXd v = unit_direction(embedding, "embedding");
  return head.class_rows() * v;
}

Eigen::VectorXd class_probabilities(const ClassifierHead& head, const VectorRef& embedding) {
  return softmax_of_cosines(class_cosines(head, embedding), head.temperature());
}

Eigen::VectorXd class_probabilities(const ClassifierHead& head,
                                    const Eigen::Ref<const Eigen::VectorXf>& embedding) {
  const Eigen::VectorXd promoted = embedding.cast<double>();
  return class_probabilities(head, promoted);
}

Prediction predict(const ClassifierHead& head, const VectorRef& embedding) {
  Prediction out;
  const Eigen::VectorXd cosines = class_cosines(head, embedding);
  Eigen::Index best = 0;
  // maxCoeff keeps the first maximum, which is the tie rule we want.
  out.max_cosine = cosines.maxCoeff(&best);
  out.class_index = static_cast<std::size_t>(best);
  out.probabilities = softmax_of_cosines(cosines, head.temperature());
  return out;
}

Prediction predict(const ClassifierHead& head,
                   const Eigen::Ref<const Eigen::VectorXf>& embedding) {
  const Eigen::VectorXd promoted = embedding.cast<double>();
  return predict(head, promoted);
}

double nll_loss(const ClassifierHead& head, const VectorRef& embedding, std::size_t label) {
  check_label(head, label);
  const Eigen::VectorXd logits = class_cosines(head, embedding) / head.temperature();
  const double top = logits.maxCoeff();
  const double log_sum = top + std::log((logits.array() - top).exp().sum());
  return log_sum - logits(static_cast<Eigen::Index>(label));
}

double mean_nll_loss(const ClassifierHead& head, const RowMatrix& embeddings,
                     std::span<const std::size_t> labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size() || labels.empty()) {
    throw InvalidConfig("embeddings and labels must be non-empty and the same length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::VectorXd v = embeddings.row(static_cast<Eigen::Index>(i)).transpose();
    sum += nll_loss(head, v, labels[i]);
  }
  return sum / static_cast<double>(labels.size());
}

Eigen::VectorXd loss_gradient_wrt_embedding(const ClassifierHead& head,
                                            const VectorRef& embedding, std::size_t label) {
  check_label(head, label);
  check_dim(head, embedding);
  const double norm = embedding.norm();
  const Eigen::VectorXd v_hat = unit_direction(embedding, "embedding");
  const auto rows = head.class_rows();
  Eigen::VectorXd residual =
      softmax_of_cosines(rows * v_hat, head.temperature());
  residual(static_cast<Eigen::Index>(label)) -= 1.0;
  // d/dv_hat, then through v_hat = v / |v|: (I - v_hat v_hat^T) / |v|.
  const Eigen::VectorXd g_hat = rows.transpose() * residual / head.temperature();
  return (g_hat - v_hat * v_hat.dot(g_hat)) / norm;
}

double spherical_distance(const VectorRef& a, const VectorRef& b) {
  if (a.size() != b.size()) throw InvalidConfig("vectors differ in length");
  const Eigen::VectorXd ua = unit_direction(a, "first vector");
  const Eigen::VectorXd ub = unit_direction(b, "second vector");
  return std::acos(std::clamp(ua.dot(ub), -1.0, 1.0));
}

}  // namespace ebv
