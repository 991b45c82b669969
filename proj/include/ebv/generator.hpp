#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ebv/frame.hpp"

namespace ebv {

// Passes between global coherence checks, loss samples and progress calls.
inline constexpr std::size_t kCheckInterval = 10;

struct LossSample {
  std::size_t iteration = 0;
  double loss = 0.0;
};

struct GenerationReport {
  std::size_t iterations = 0;
  double final_coherence = 1.0;
  bool converged = false;
  std::vector<LossSample> loss_trace;
  double elapsed_seconds = 0.0;
  double final_learning_rate = 0.0;
};

struct LossAndGradient {
  double loss = 0.0;
  RowMatrix gradient;
  // Some violating pair has |cos| within 1e-12 of 1.
  bool collinear = false;
};

struct StepResult {
  FrameMatrix frame;
  double loss = 0.0;
};

struct Generation {
  FrameMatrix frame;
  GenerationReport report;
};

// Called every kCheckInterval passes with (iteration, loss, coherence).
using ProgressSink = std::function<void(std::size_t, double, double)>;

// Gaussian rows, normalized. Deterministic in config.seed.
FrameMatrix init_random_frame(const FrameConfig& config);

// Sum over i < j of max(|w_i . w_j| - alpha, 0), on the rows exactly as
// stored. Plain pair loop, independent of the sliced path.
double hinge_coherence_loss(const FrameMatrix& frame, double alpha);

// Loss and its gradient with respect to the stored rows, accumulated over
// row slices of the given size. Each unordered pair contributes once.
LossAndGradient hinge_coherence_gradient(const FrameMatrix& frame, double alpha,
                                         std::size_t slice, std::size_t threads = 1);

// One pass: normalize rows, then step by -learning_rate * gradient. The
// returned rows are not renormalized; the next pass does that. Exactly
// collinear rows are additionally pushed apart along a fixed tangent.
StepResult generation_step(const FrameMatrix& frame, const FrameConfig& config);

// Throws InvalidConfig or InfeasibleConfig. Non-convergence is reported in
// the result, with the lowest-coherence frame seen.
Generation generate(const FrameConfig& config, const ProgressSink& progress = {});

// Independent brute-force check: every |w_i . w_j| <= alpha + tol.
bool verify(const FrameMatrix& frame, double alpha, double tol);

}  // namespace ebv
