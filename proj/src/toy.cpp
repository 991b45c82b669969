#include "ebv/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ebv/error.hpp"

namespace ebv::toy {

namespace {

RowMatrix gaussian(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

struct Forward {
  Eigen::VectorXd hidden;
  Eigen::VectorXd embedding;
};

Forward forward(const Extractor& ex, const VectorRef& x) {
  Forward f;
  f.hidden = (ex.w1 * x + ex.b1).array().tanh();
  f.embedding = ex.w2 * f.hidden + ex.b2;
  return f;
}

Extractor zeros_like(const Extractor& ex) {
  Extractor g;
  g.w1 = RowMatrix::Zero(ex.w1.rows(), ex.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(ex.b1.size());
  g.w2 = RowMatrix::Zero(ex.w2.rows(), ex.w2.cols());
  g.b2 = Eigen::VectorXd::Zero(ex.b2.size());
  return g;
}

// Adds the parameter gradient for one sample given d(loss)/d(embedding).
void backprop(const Extractor& ex, const VectorRef& x, const Forward& f,
              const Eigen::VectorXd& d_embedding, Extractor& grad) {
  grad.w2.noalias() += d_embedding * f.hidden.transpose();
  grad.b2 += d_embedding;
  const Eigen::VectorXd d_pre =
      ((ex.w2.transpose() * d_embedding).array() * (1.0 - f.hidden.array().square())).matrix();
  grad.w1.noalias() += d_pre * x.transpose();
  grad.b1 += d_pre;
}

void scale(Extractor& e, double s) {
  e.w1 *= s;
  e.b1 *= s;
  e.w2 *= s;
  e.b2 *= s;
}

void sgd_update(Extractor& ex, const Extractor& grad, double lr) {
  ex.w1 -= lr * grad.w1;
  ex.b1 -= lr * grad.b1;
  ex.w2 -= lr * grad.w2;
  ex.b2 -= lr * grad.b2;
}

Eigen::VectorXd sample(const SyntheticDataset& ds, std::size_t row) {
  return ds.inputs.row(static_cast<Eigen::Index>(row)).transpose();
}

void check_config(const SyntheticDataset& dataset, const TrainConfig& config) {
  if (dataset.train.empty()) throw InvalidConfig("dataset has no training rows");
  if (config.batch == 0) throw InvalidConfig("batch must be positive");
  if (config.hidden == 0) throw InvalidConfig("hidden width must be positive");
  if (!(config.lr > 0.0)) throw InvalidConfig("lr must be positive");
}

// Epoch loop shared by both arms. `step` takes one batch of row indices,
// updates parameters, and returns the batch mean loss.
template <typename Step, typename Eval>
TrainRecord run_epochs(const SyntheticDataset& dataset, const TrainConfig& config, Step&& step,
                       Eval&& eval) {
  TrainRecord record;
  record.lr = config.lr;
  record.num_epochs = config.epochs;
  record.seed = config.seed;

  std::mt19937_64 order_rng(config.seed ^ 0x5eedULL);
  std::vector<std::size_t> order = dataset.train;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t len = std::min(config.batch, order.size() - start);
      loss_sum += step(std::span<const std::size_t>(order.data() + start, len)) *
                  static_cast<double>(len);
    }
    EpochRecord e;
    e.epoch = epoch + 1;
    e.train_loss = loss_sum / static_cast<double>(order.size());
    e.train_acc = eval(dataset.train);
    e.test_acc = eval(dataset.test);
    record.epochs.push_back(e);
  }
  record.final_test_acc = eval(dataset.test);
  return record;
}

}  // namespace

SyntheticDataset make_dataset(std::size_t num_classes, std::size_t per_class,
                              std::size_t input_dim, double sigma, std::uint64_t seed,
                              double radius) {
  if (num_classes < 2 || per_class < 2 || input_dim == 0 || !(sigma >= 0.0)) {
    throw InvalidConfig("dataset needs >= 2 classes, >= 2 samples per class, sigma >= 0");
  }
  std::mt19937_64 rng(seed);
  SyntheticDataset ds;
  ds.num_classes = num_classes;
  ds.generator_spec = {radius, sigma, seed};

  const auto k = static_cast<Eigen::Index>(num_classes);
  const auto dim = static_cast<Eigen::Index>(input_dim);
  ds.class_means = FrameMatrix::normalized(gaussian(k, dim, 1.0, rng)).rows() * radius;

  const std::size_t total = num_classes * per_class;
  ds.inputs.resize(static_cast<Eigen::Index>(total), dim);
  ds.labels.resize(total);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t row = c * per_class + s;
      ds.labels[row] = c;
      for (Eigen::Index j = 0; j < dim; ++j) {
        ds.inputs(static_cast<Eigen::Index>(row), j) =
            ds.class_means(static_cast<Eigen::Index>(c), j) + sigma * noise(rng);
      }
    }
  }

  // Stratified split: per class, a shuffled 80% trains and the rest tests.
  const std::size_t train_per_class = std::max<std::size_t>(1, (per_class * 4) / 5);
  std::vector<std::size_t> idx(per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::iota(idx.begin(), idx.end(), c * per_class);
    std::shuffle(idx.begin(), idx.end(), rng);
    ds.train.insert(ds.train.end(), idx.begin(), idx.begin() + static_cast<long>(train_per_class));
    ds.test.insert(ds.test.end(), idx.begin() + static_cast<long>(train_per_class), idx.end());
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

double nearest_mean_accuracy(const SyntheticDataset& dataset, std::span<const std::size_t> split) {
  if (split.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t row : split) {
    const Eigen::RowVectorXd x = dataset.inputs.row(static_cast<Eigen::Index>(row));
    Eigen::Index best = 0;
    (dataset.class_means.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
    hits += static_cast<std::size_t>(best) == dataset.labels[row];
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

Extractor Extractor::random(std::size_t input_dim, std::size_t hidden, std::size_t embed_dim,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Extractor ex;
  ex.w1 = gaussian(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(input_dim),
                   1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  ex.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden));
  ex.w2 = gaussian(static_cast<Eigen::Index>(embed_dim), static_cast<Eigen::Index>(hidden),
                   1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  ex.b2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(embed_dim));
  return ex;
}

Eigen::VectorXd Extractor::embed(const VectorRef& x) const { return forward(*this, x).embedding; }

bool Extractor::finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

std::size_t Extractor::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Eigen::VectorXd Extractor::flatten() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  p << w1.reshaped<Eigen::RowMajor>(), b1, w2.reshaped<Eigen::RowMajor>(), b2;
  return p;
}

void Extractor::unflatten(const VectorRef& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count()) {
    throw InvalidConfig("parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  auto take = [&](auto& dst) {
    dst.template reshaped<Eigen::RowMajor>() = params.segment(at, dst.size());
    at += dst.size();
  };
  take(w1);
  take(b1);
  take(w2);
  take(b2);
}

LinearHead LinearHead::random(std::size_t embed_dim, std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LinearHead head;
  head.weight = gaussian(static_cast<Eigen::Index>(num_classes),
                         static_cast<Eigen::Index>(embed_dim),
                         1.0 / std::sqrt(static_cast<double>(embed_dim)), rng);
  head.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_classes));
  return head;
}

std::size_t LinearHead::predict(const VectorRef& embedding) const {
  Eigen::Index best = 0;
  (weight * embedding + bias).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

ExtractorGradient ebv_loss_and_gradient(const Extractor& extractor, const ClassifierHead& head,
                                        const SyntheticDataset& dataset,
                                        std::span<const std::size_t> rows) {
  ExtractorGradient out{0.0, zeros_like(extractor)};
  for (std::size_t row : rows) {
    const Eigen::VectorXd x = sample(dataset, row);
    const Forward f = forward(extractor, x);
    const std::size_t label = dataset.labels[row];
    out.loss += nll_loss(head, f.embedding, label);
    backprop(extractor, x, f, loss_gradient_wrt_embedding(head, f.embedding, label), out.grad);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  scale(out.grad, inv);
  return out;
}

EbvTraining train_extractor(const SyntheticDataset& dataset, const ClassifierHead& head,
                            const TrainConfig& config) {
  check_config(dataset, config);
  if (head.num_classes() < dataset.num_classes) {
    throw InvalidConfig("head has fewer classes than the dataset");
  }
  const std::size_t embed_dim = config.embed_dim == 0 ? head.dim() : config.embed_dim;
  if (embed_dim != head.dim()) {
    throw InvalidConfig("extractor embedding size " + std::to_string(embed_dim) +
                        " does not match head dimension " + std::to_string(head.dim()));
  }
  EbvTraining out{Extractor::random(dataset.input_dim(), config.hidden, embed_dim, config.seed),
                  {}};
  Extractor& ex = out.extractor;
  out.record = run_epochs(
      dataset, config,
      [&](std::span<const std::size_t> batch) {
        ExtractorGradient g = ebv_loss_and_gradient(ex, head, dataset, batch);
        sgd_update(ex, g.grad, config.lr);
        return g.loss;
      },
      [&](std::span<const std::size_t> split) { return evaluate(ex, head, dataset, split); });
  out.record.temperature = head.temperature();
  return out;
}

BaselineTraining train_fc_baseline(const SyntheticDataset& dataset, std::size_t embed_dim,
                                   const TrainConfig& config) {
  check_config(dataset, config);
  if (embed_dim == 0) throw InvalidConfig("embed_dim must be positive");
  BaselineTraining out{
      Extractor::random(dataset.input_dim(), config.hidden, embed_dim, config.seed),
      LinearHead::random(embed_dim, dataset.num_classes, config.seed ^ 0xfcULL),
      {}};
  Extractor& ex = out.extractor;
  LinearHead& lin = out.head;
  out.record = run_epochs(
      dataset, config,
      [&](std::span<const std::size_t> batch) {
        Extractor grad = zeros_like(ex);
        RowMatrix grad_w = RowMatrix::Zero(lin.weight.rows(), lin.weight.cols());
        Eigen::VectorXd grad_b = Eigen::VectorXd::Zero(lin.bias.size());
        double loss = 0.0;
        for (std::size_t row : batch) {
          const Eigen::VectorXd x = sample(dataset, row);
          const Forward f = forward(ex, x);
          Eigen::VectorXd logits = lin.weight * f.embedding + lin.bias;
          logits.array() -= logits.maxCoeff();
          Eigen::VectorXd p = logits.array().exp();
          const double z = p.sum();
          p /= z;
          const auto label = static_cast<Eigen::Index>(dataset.labels[row]);
          loss += std::log(z) - logits(label);
          p(label) -= 1.0;
          grad_w.noalias() += p * f.embedding.transpose();
          grad_b += p;
          backprop(ex, x, f, lin.weight.transpose() * p, grad);
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        scale(grad, inv);
        sgd_update(ex, grad, config.lr);
        lin.weight -= config.lr * inv * grad_w;
        lin.bias -= config.lr * inv * grad_b;
        return loss * inv;
      },
      [&](std::span<const std::size_t> split) { return evaluate(ex, lin, dataset, split); });
  return out;
}

double evaluate(const Extractor& extractor, const ClassifierHead& head,
                const SyntheticDataset& dataset, std::span<const std::size_t> split) {
  if (split.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t row : split) {
    hits += predict(head, extractor.embed(sample(dataset, row))).class_index == dataset.labels[row];
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

double evaluate(const Extractor& extractor, const LinearHead& head,
                const SyntheticDataset& dataset, std::span<const std::size_t> split) {
  if (split.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t row : split) {
    hits += head.predict(extractor.embed(sample(dataset, row))) == dataset.labels[row];
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

double own_vector_closest_fraction(const Extractor& extractor, const ClassifierHead& head,
                                   const SyntheticDataset& dataset,
                                   std::span<const std::size_t> split) {
  if (split.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t row : split) {
    const Eigen::VectorXd cosines = class_cosines(head, extractor.embed(sample(dataset, row)));
    const auto label = static_cast<Eigen::Index>(dataset.labels[row]);
    bool strict = true;
    for (Eigen::Index j = 0; j < cosines.size() && strict; ++j) {
      if (j != label && !(cosines(label) > cosines(j))) strict = false;
    }
    hits += strict;
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

ParameterReport head_parameter_report(std::size_t feature_dim, std::size_t ebv_dim,
                                      std::size_t num_classes) {
  ParameterReport r;
  r.feature_dim = feature_dim;
  r.ebv_dim = ebv_dim;
  r.num_classes = num_classes;
  r.ebv_params = static_cast<std::uint64_t>(feature_dim) * ebv_dim;
  r.fc_params = static_cast<std::uint64_t>(feature_dim) * num_classes;
  r.reduction = r.ebv_params == 0 ? 0.0
                                  : static_cast<double>(r.fc_params) / static_cast<double>(r.ebv_params);
  return r;
}

}  // namespace ebv::toy
