#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ebv/frame.hpp"

namespace ebv {

struct CapacityQuery {
  double alpha = 0.1;
  std::size_t dim = 0;
  std::size_t attempt_budget = 3;
  // num and max_iters are overwritten per probe.
  FrameConfig probe_template;
  // Probe effort: min(iters_per_num * num, max_iters_cap) passes.
  std::size_t iters_per_num = 200;
  std::size_t max_iters_cap = 2'000'000;
  std::size_t search_ceiling = std::size_t{1} << 24;

  void validate() const;
};

struct ProbeRecord {
  std::size_t num = 0;
  bool succeeded = false;
  std::size_t attempts = 0;
  // Lowest coherence over attempts; 0 for planted orthonormal frames and
  // NaN when every attempt was rejected by the Welch bound.
  double best_coherence = 0.0;
};

struct ProbeOutcome {
  ProbeRecord record;
  // Present exactly when record.succeeded.
  std::optional<FrameMatrix> frame;

  explicit operator bool() const noexcept { return record.succeeded; }
};

struct CapacityResult {
  std::size_t max_num_found = 0;
  std::optional<std::uint64_t> analytic_upper;
  std::vector<ProbeRecord> probes;
  double total_seconds = 0.0;
  bool ceiling_limited = false;
};

using ProbeSink = std::function<void(const ProbeRecord&)>;

// Seed for attempt `attempt` at size `num`; splitmix64 over the inputs.
std::uint64_t derive_probe_seed(std::uint64_t base, std::size_t num, std::size_t attempt);

// Success is a certificate (the frame is returned); failure is only
// evidence. For num <= dim the orthonormal frame is planted directly.
ProbeOutcome probe(std::size_t num, const CapacityQuery& query);

// Bracket [dim, hi] then bisect on probe outcomes. Assumes success is
// monotone in num.
CapacityResult bisect_capacity(const CapacityQuery& query, const ProbeSink& sink = {});

// ceil(sqrt(2 num)): a dimension that can host num classes.
std::size_t sqrt2n_heuristic(std::size_t num);

}  // namespace ebv
