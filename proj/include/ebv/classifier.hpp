#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "ebv/frame.hpp"

namespace ebv {

inline constexpr double kDefaultTemperature = 0.07;
inline constexpr double kMinEmbeddingNorm = 1e-12;

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

// A frozen frame used as a classification layer: class k is bound to row k.
// The frame is held by value and never modified after construction.
class ClassifierHead {
 public:
  // num_classes defaults to frame.num(); it must not exceed it.
  explicit ClassifierHead(FrameMatrix frame, double temperature = kDefaultTemperature,
                          std::optional<std::size_t> num_classes = std::nullopt);

  const FrameMatrix& frame() const noexcept { return frame_; }
  double temperature() const noexcept { return temperature_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t dim() const noexcept { return frame_.dim(); }

  // Rows bound to active classes.
  auto class_rows() const {
    return frame_.rows().topRows(static_cast<Eigen::Index>(num_classes_));
  }

 private:
  FrameMatrix frame_;
  double temperature_;
  std::size_t num_classes_;
};

struct Prediction {
  std::size_t class_index = 0;
  Eigen::VectorXd probabilities;
  double max_cosine = 0.0;
};

// Cosine of the embedding against each class row.
Eigen::VectorXd class_cosines(const ClassifierHead& head, const VectorRef& embedding);

// softmax(cos / tau) with max-logit subtraction.
Eigen::VectorXd class_probabilities(const ClassifierHead& head, const VectorRef& embedding);
Eigen::VectorXd class_probabilities(const ClassifierHead& head,
                                    const Eigen::Ref<const Eigen::VectorXf>& embedding);

// Argmax of cosines; ties go to the lowest index.
Prediction predict(const ClassifierHead& head, const VectorRef& embedding);
Prediction predict(const ClassifierHead& head,
                   const Eigen::Ref<const Eigen::VectorXf>& embedding);

double nll_loss(const ClassifierHead& head, const VectorRef& embedding, std::size_t label);

// Mean per-sample loss; one embedding per row.
double mean_nll_loss(const ClassifierHead& head, const RowMatrix& embeddings,
                     std::span<const std::size_t> labels);

// d(nll)/d(embedding), through the l2 normalization. The frame gets no
// gradient.
Eigen::VectorXd loss_gradient_wrt_embedding(const ClassifierHead& head,
                                            const VectorRef& embedding, std::size_t label);

// Geodesic distance on the unit sphere, in radians.
double spherical_distance(const VectorRef& a, const VectorRef& b);

}  // namespace ebv
