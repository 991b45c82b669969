#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ebv/classifier.hpp"
#include "ebv/frame.hpp"

namespace ebv::toy {

struct DatasetSpec {
  double radius = 4.0;
  double sigma = 0.5;
  std::uint64_t seed = 0;
};

// Gaussian blobs around random directions on a sphere; 80/20 split.
struct SyntheticDataset {
  RowMatrix inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  RowMatrix class_means;
  DatasetSpec generator_spec;

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
};

SyntheticDataset make_dataset(std::size_t num_classes, std::size_t per_class,
                              std::size_t input_dim, double sigma, std::uint64_t seed,
                              double radius = 4.0);

// Nearest class mean; the Bayes rule for equal isotropic blobs.
double nearest_mean_accuracy(const SyntheticDataset& dataset, std::span<const std::size_t> split);

// input -> tanh(hidden) -> embedding.
struct Extractor {
  RowMatrix w1;  // hidden x input
  Eigen::VectorXd b1;
  RowMatrix w2;  // embed x hidden
  Eigen::VectorXd b2;

  static Extractor random(std::size_t input_dim, std::size_t hidden, std::size_t embed_dim,
                          std::uint64_t seed);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  std::size_t embed_dim() const noexcept { return static_cast<std::size_t>(w2.rows()); }

  Eigen::VectorXd embed(const VectorRef& x) const;
  bool finite() const;

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const VectorRef& params);
};

// Trainable K-way layer for the baseline arm: logits = weight * v + bias.
struct LinearHead {
  RowMatrix weight;  // classes x embed
  Eigen::VectorXd bias;

  static LinearHead random(std::size_t embed_dim, std::size_t num_classes, std::uint64_t seed);
  std::size_t predict(const VectorRef& embedding) const;
};

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.1;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::size_t hidden = 32;
  // Extractor output size; 0 takes the head's dimension.
  std::size_t embed_dim = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  double final_test_acc = 0.0;
  double temperature = 0.0;  // 0 for the baseline arm
  double lr = 0.0;
  std::size_t num_epochs = 0;
  std::uint64_t seed = 0;
};

struct EbvTraining {
  Extractor extractor;
  TrainRecord record;
};

struct BaselineTraining {
  Extractor extractor;
  LinearHead head;
  TrainRecord record;
};

struct ExtractorGradient {
  double loss = 0.0;
  Extractor grad;  // same shapes as the extractor
};

// Mean NLL over the given rows and its gradient w.r.t. every extractor
// parameter, back-propagated through the frozen head.
ExtractorGradient ebv_loss_and_gradient(const Extractor& extractor, const ClassifierHead& head,
                                        const SyntheticDataset& dataset,
                                        std::span<const std::size_t> rows);

// Throws InvalidConfig when head.dim() differs from the embedding size.
EbvTraining train_extractor(const SyntheticDataset& dataset, const ClassifierHead& head,
                            const TrainConfig& config);

// Same extractor, data order and seed; a trainable linear head on top with
// plain softmax cross-entropy. embed_dim matches the EBV arm.
BaselineTraining train_fc_baseline(const SyntheticDataset& dataset, std::size_t embed_dim,
                                   const TrainConfig& config);

double evaluate(const Extractor& extractor, const ClassifierHead& head,
                const SyntheticDataset& dataset, std::span<const std::size_t> split);
double evaluate(const Extractor& extractor, const LinearHead& head,
                const SyntheticDataset& dataset, std::span<const std::size_t> split);

// Fraction of rows whose embedding is strictly closer in angle to its own
// class vector than to every other class vector.
double own_vector_closest_fraction(const Extractor& extractor, const ClassifierHead& head,
                                   const SyntheticDataset& dataset,
                                   std::span<const std::size_t> split);

// Weights of the layer that feeds class scores: feature_dim x ebv_dim for
// the fixed-frame head versus feature_dim x num_classes for a k-way layer.
struct ParameterReport {
  std::size_t feature_dim = 0;
  std::size_t ebv_dim = 0;
  std::size_t num_classes = 0;
  std::uint64_t ebv_params = 0;
  std::uint64_t fc_params = 0;
  double reduction = 0.0;
};

ParameterReport head_parameter_report(std::size_t feature_dim, std::size_t ebv_dim,
                                      std::size_t num_classes);

}  // namespace ebv::toy
