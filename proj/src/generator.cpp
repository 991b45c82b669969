#include "ebv/generator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "ebv/error.hpp"

namespace ebv {

namespace {

constexpr std::size_t kStallSteps = 50;
constexpr double kDecayFactor = 0.5;
constexpr double kMinLearningRate = 1e-4;
constexpr double kMaxRadialStep = 0.5;
constexpr double kCollinear = 1.0 - 1e-12;

struct SlicePartial {
  double loss = 0.0;
  RowMatrix gradient;
  bool collinear = false;
};

// Accumulates the hinge loss and gradient for pairs (i, j), i in
// [start, start + len), j > i.
void accumulate_slice(const RowMatrix& w, double alpha, Eigen::Index start, Eigen::Index len,
                      RowMatrix& scratch, SlicePartial& out) {
  const Eigen::Index tail = w.rows() - start;
  scratch.noalias() = w.middleRows(start, len) * w.bottomRows(tail).transpose();
  bool any = false;
  for (Eigen::Index r = 0; r < len; ++r) {
    // Columns 0..r are the diagonal or pairs owned by an earlier row.
    scratch.row(r).head(r + 1).setZero();
    for (Eigen::Index c = r + 1; c < tail; ++c) {
      const double v = scratch(r, c);
      const double excess = std::abs(v) - alpha;
      if (excess > 0.0) {
        out.loss += excess;
        scratch(r, c) = v > 0.0 ? 1.0 : -1.0;
        any = true;
        if (std::abs(v) >= kCollinear) out.collinear = true;
      } else {
        scratch(r, c) = 0.0;
      }
    }
  }
  if (!any) return;
  out.gradient.middleRows(start, len).noalias() += scratch * w.bottomRows(tail);
  out.gradient.bottomRows(tail).noalias() += scratch.transpose() * w.middleRows(start, len);
}

// Rows parallel to an earlier row get a gradient along the row itself
// only, so a step cannot separate them. Push the later row along a fixed
// tangent direction instead.
void separate_collinear(const RowMatrix& w, RowMatrix& gradient) {
  const Eigen::Index n = w.rows();
  const Eigen::Index d = w.cols();
  if (d < 2) return;
  for (Eigen::Index j = 1; j < n; ++j) {
    bool hit = false;
    for (Eigen::Index i = 0; i < j && !hit; ++i) {
      hit = std::abs(w.row(i).dot(w.row(j))) >= kCollinear;
    }
    if (!hit) continue;
    Eigen::Index k = j % d;
    if (w(j, k) * w(j, k) > 0.5) k = (k + 1) % d;
    Eigen::RowVectorXd t = -w(j, k) * w.row(j);
    t(k) += 1.0;
    gradient.row(j) -= t / t.norm();
  }
}

std::size_t resolve_threads(std::size_t requested, std::size_t slices) {
  std::size_t t = requested;
  if (t == 0) t = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(t, slices));
}

}  // namespace

FrameMatrix init_random_frame(const FrameConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix rows(static_cast<Eigen::Index>(config.num), static_cast<Eigen::Index>(config.dim));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    do {
      for (Eigen::Index k = 0; k < rows.cols(); ++k) rows(i, k) = normal(rng);
    } while (rows.row(i).squaredNorm() == 0.0);
  }
  return FrameMatrix::normalized(std::move(rows));
}

double hinge_coherence_loss(const FrameMatrix& frame, double alpha) {
  const RowMatrix& w = frame.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < w.rows(); ++j) {
      const double excess = std::abs(w.row(i).dot(w.row(j))) - alpha;
      if (excess > 0.0) loss += excess;
    }
  }
  return loss;
}

LossAndGradient hinge_coherence_gradient(const FrameMatrix& frame, double alpha,
                                         std::size_t slice, std::size_t threads) {
  const RowMatrix& w = frame.rows();
  const auto n = static_cast<Eigen::Index>(frame.num());
  const auto step = static_cast<Eigen::Index>(std::max<std::size_t>(1, slice));
  const auto slices = static_cast<std::size_t>((n + step - 1) / step);
  const std::size_t workers = resolve_threads(threads, std::max<std::size_t>(1, slices));

  std::vector<SlicePartial> partials(workers);
  for (auto& p : partials) p.gradient = RowMatrix::Zero(w.rows(), w.cols());

  // Deterministic mode pins slice k to worker k % workers; otherwise
  // workers pull slices from a shared counter.
  const bool fixed_order = deterministic();
  std::atomic<std::size_t> next{0};
  auto run = [&](std::size_t worker) {
    RowMatrix scratch;
    auto do_slice = [&](std::size_t k) {
      const Eigen::Index start = static_cast<Eigen::Index>(k) * step;
      accumulate_slice(w, alpha, start, std::min(step, n - start), scratch, partials[worker]);
    };
    if (fixed_order) {
      for (std::size_t k = worker; k < slices; k += workers) do_slice(k);
    } else {
      for (std::size_t k = next++; k < slices; k = next++) do_slice(k);
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run, t);
    run(0);
  }

  LossAndGradient out{partials[0].loss, std::move(partials[0].gradient),
                      partials[0].collinear};
  for (std::size_t t = 1; t < workers; ++t) {
    out.loss += partials[t].loss;
    out.gradient += partials[t].gradient;
    out.collinear = out.collinear || partials[t].collinear;
  }
  return out;
}

StepResult generation_step(const FrameMatrix& frame, const FrameConfig& config) {
  FrameMatrix unit = frame.renormalized();
  LossAndGradient lg =
      hinge_coherence_gradient(unit, config.alpha, config.slice, config.threads);
  if (lg.loss == 0.0) return {std::move(unit), 0.0};
  if (lg.collinear) separate_collinear(unit.rows(), lg.gradient);
  // Radial part of row i's gradient is sum_j |c_ij|; a step past 1 flips the
  // row through the origin.
  const double radial = unit.rows().cwiseProduct(lg.gradient).rowwise().sum().maxCoeff();
  double lr = config.effective_learning_rate();
  if (radial * lr > kMaxRadialStep) lr = kMaxRadialStep / radial;
  RowMatrix next = unit.rows() - lr * lg.gradient;
  return {FrameMatrix::unchecked(std::move(next)), lg.loss};
}

Generation generate(const FrameConfig& config, const ProgressSink& progress) {
  config.validate();
  if (!config.is_feasible()) {
    throw InfeasibleConfig(config.alpha, welch_lower_bound(config.dim, config.num));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const double threshold = config.alpha + config.effective_tol();

  FrameConfig step_config = config;
  step_config.learning_rate = config.effective_learning_rate();
  FrameMatrix current = init_random_frame(config);
  FrameMatrix best = current;
  double best_coherence = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  GenerationReport report;
  auto check = [&](const FrameMatrix& unit, std::size_t iteration, double loss) {
    const double coherence = mutual_coherence(unit);
    if (coherence < best_coherence) {
      best_coherence = coherence;
      best = unit;
    }
    report.loss_trace.push_back({iteration, loss});
    if (progress) progress(iteration, loss, coherence);
    return coherence <= threshold;
  };

  std::size_t iteration = 0;
  bool converged = false;
  while (iteration < config.max_iters) {
    StepResult step = generation_step(current, step_config);
    ++iteration;
    if (step.loss == 0.0) {
      // Zero hinge loss on the normalized rows: every pair is within alpha.
      check(step.frame, iteration, 0.0);
      converged = true;
      break;
    }
    current = std::move(step.frame);

    if (step.loss < best_loss) {
      best_loss = step.loss;
      stall = 0;
    } else if (++stall >= kStallSteps) {
      step_config.learning_rate =
          std::max(step_config.learning_rate * kDecayFactor, kMinLearningRate);
      stall = 0;
    }

    if (iteration % kCheckInterval == 0 && check(current.renormalized(), iteration, step.loss)) {
      converged = true;
      break;
    }
  }
  if (!converged && iteration % kCheckInterval != 0) {
    converged = check(current.renormalized(), iteration, best_loss);
  }

  report.iterations = iteration;
  report.converged = converged;
  report.final_coherence = best_coherence;
  report.final_learning_rate = step_config.learning_rate;
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best), std::move(report)};
}

bool verify(const FrameMatrix& frame, double alpha, double tol) {
  const RowMatrix& w = frame.rows();
  const Eigen::Index n = w.rows();
  const Eigen::Index d = w.cols();
  const double limit = alpha + tol;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) dot += w(i, k) * w(j, k);
      if (std::abs(dot) > limit) return false;
    }
  }
  return true;
}

}  // namespace ebv
