#include "ebv/capacity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "ebv/error.hpp"
#include "ebv/generator.hpp"

namespace ebv {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void CapacityQuery::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidConfig("alpha must lie in [0, 1)");
  if (dim == 0) throw InvalidConfig("dim must be positive");
  if (attempt_budget == 0) throw InvalidConfig("attempt_budget must be at least 1");
  if (iters_per_num == 0 || max_iters_cap == 0) {
    throw InvalidConfig("probe iteration budget must be positive");
  }
  if (search_ceiling < dim) throw InvalidConfig("search ceiling below dim");
}

std::uint64_t derive_probe_seed(std::uint64_t base, std::size_t num, std::size_t attempt) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ static_cast<std::uint64_t>(num));
  return splitmix64(h ^ static_cast<std::uint64_t>(attempt));
}

ProbeOutcome probe(std::size_t num, const CapacityQuery& query) {
  query.validate();
  ProbeOutcome out;
  out.record.num = num;
  if (num <= query.dim) {
    out.record.succeeded = true;
    out.frame = FrameMatrix::orthonormal(query.dim, num);
    return out;
  }

  FrameConfig config = query.probe_template;
  config.alpha = query.alpha;
  config.dim = query.dim;
  config.num = num;
  config.max_iters = std::min(query.iters_per_num * num, query.max_iters_cap);

  double best = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t attempt = 0; attempt < query.attempt_budget; ++attempt) {
    config.seed = derive_probe_seed(query.probe_template.seed, num, attempt);
    ++out.record.attempts;
    Generation gen;
    try {
      gen = generate(config);
    } catch (const InfeasibleConfig&) {
      break;  // same answer for every seed
    }
    const double coherence = gen.report.final_coherence;
    if (std::isnan(best) || coherence < best) best = coherence;
    if (gen.report.converged && verify(gen.frame, config.alpha, config.effective_tol())) {
      out.record.succeeded = true;
      out.record.best_coherence = coherence;
      out.frame = std::move(gen.frame);
      return out;
    }
  }
  out.record.best_coherence = best;
  return out;
}

CapacityResult bisect_capacity(const CapacityQuery& query, const ProbeSink& sink) {
  query.validate();
  const auto t0 = std::chrono::steady_clock::now();
  CapacityResult result;
  result.analytic_upper = max_num_upper_bound(query.alpha, query.dim);

  std::map<std::size_t, bool> outcomes;
  auto run = [&](std::size_t num) {
    if (auto it = outcomes.find(num); it != outcomes.end()) return it->second;
    ProbeOutcome p = probe(num, query);
    outcomes.emplace(num, p.record.succeeded);
    result.probes.push_back(p.record);
    if (sink) sink(p.record);
    return p.record.succeeded;
  };

  std::size_t lo = query.dim;
  run(lo);
  // hi is the smallest size known (or proved) to fail.
  std::size_t hi = 0;
  if (result.analytic_upper) {
    hi = static_cast<std::size_t>(
        std::min<std::uint64_t>(*result.analytic_upper, query.search_ceiling)) + 1;
  } else {
    std::size_t candidate = std::max<std::size_t>(2, 2 * query.dim);
    while (hi == 0) {
      if (candidate > query.search_ceiling) {
        result.ceiling_limited = true;
        break;
      }
      if (run(candidate)) {
        lo = candidate;
        candidate *= 2;
      } else {
        hi = candidate;
      }
    }
  }

  if (!result.ceiling_limited) {
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (run(mid)) lo = mid;
      else hi = mid;
    }
    if (lo + 1 > query.search_ceiling) {
      result.ceiling_limited = true;
    } else {
      // Upper-bound brackets are proved; probing records the failure.
      run(lo + 1);
    }
  }

  result.max_num_found = lo;
  result.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::size_t sqrt2n_heuristic(std::size_t num) {
  const std::uint64_t target = 2 * static_cast<std::uint64_t>(num);
  auto r = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(target))));
  while (r > 0 && (r - 1) * (r - 1) >= target) --r;
  while (r * r < target) ++r;
  return static_cast<std::size_t>(r);
}

}  // namespace ebv
