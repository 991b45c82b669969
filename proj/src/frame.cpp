#include "ebv/frame.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ebv/error.hpp"

namespace ebv {

namespace {

std::atomic<bool> g_deterministic{false};

constexpr Eigen::Index kBlockRows = 256;

// Visits |w_i . w_j| for every unordered pair i < j, one row block at a
// time so peak memory is kBlockRows x N.
template <typename Fn>
void for_each_upper_pair(const RowMatrix& w, Fn&& fn) {
  const Eigen::Index n = w.rows();
  RowMatrix block;
  for (Eigen::Index start = 0; start < n; start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, n - start);
    const Eigen::Index tail = n - start;
    block.noalias() = w.middleRows(start, len) * w.bottomRows(tail).transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      for (Eigen::Index c = r + 1; c < tail; ++c) {
        fn(std::abs(block(r, c)));
      }
    }
  }
}

double clamp_unit(double c) { return std::min(c, 1.0); }

}  // namespace

void set_deterministic(bool enabled) noexcept { g_deterministic.store(enabled); }
bool deterministic() noexcept { return g_deterministic.load(); }

double rad_to_deg(double radians) noexcept { return radians * 180.0 / std::numbers::pi; }

void FrameConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidConfig("alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
  if (dim == 0) throw InvalidConfig("dim must be positive");
  if (num < 2) throw InvalidConfig("num must be at least 2, got " + std::to_string(num));
  if (!(tol >= 0.0) || !std::isfinite(tol)) throw InvalidConfig("tol must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfig("learning_rate must be positive");
  }
  if (slice == 0) throw InvalidConfig("slice must be positive");
  if (max_iters == 0) throw InvalidConfig("max_iters must be positive");
}

double FrameConfig::effective_learning_rate() const {
  return learning_rate > 0.0 ? learning_rate : default_learning_rate(num);
}

double FrameConfig::effective_tol() const { return tol > 0.0 ? tol : default_tolerance(alpha); }

double default_learning_rate(std::size_t num) noexcept {
  return std::min(0.1, 10.0 / static_cast<double>(std::max<std::size_t>(num, 1)));
}

double default_tolerance(double alpha) noexcept {
  return alpha > 0.0 ? std::min(5e-3, alpha) : 5e-3;
}

bool FrameConfig::is_feasible() const {
  return num <= dim || alpha >= welch_lower_bound(dim, num);
}

FrameMatrix FrameMatrix::normalized(RowMatrix rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DegenerateInput("row " + std::to_string(i) + " has zero or non-finite norm");
    }
    rows.row(i) /= norm;
  }
  return FrameMatrix(std::move(rows));
}

FrameMatrix FrameMatrix::from_unit_rows(RowMatrix rows, double tolerance) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (!(std::abs(norm - 1.0) <= tolerance)) {
      throw IntegrityError("row " + std::to_string(i) + " has norm " +
                           std::to_string(norm) + ", expected 1");
    }
  }
  return FrameMatrix(std::move(rows));
}

FrameMatrix FrameMatrix::unchecked(RowMatrix rows) { return FrameMatrix(std::move(rows)); }

FrameMatrix FrameMatrix::orthonormal(std::size_t dim, std::size_t num) {
  if (num > dim) {
    throw InvalidConfig("orthonormal frame needs num <= dim");
  }
  RowMatrix rows = RowMatrix::Identity(static_cast<Eigen::Index>(num),
                                       static_cast<Eigen::Index>(dim));
  return FrameMatrix(std::move(rows));
}

bool FrameMatrix::has_unit_rows(double tolerance) const {
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (!(std::abs(rows_.row(i).norm() - 1.0) <= tolerance)) return false;
  }
  return true;
}

double welch_lower_bound(std::size_t dim, std::size_t num) {
  if (num <= dim) return 0.0;
  const double d = static_cast<double>(dim);
  const double n = static_cast<double>(num);
  return std::sqrt((n - d) / (d * (n - 1.0)));
}

std::optional<std::uint64_t> max_num_upper_bound(double alpha, std::size_t dim) {
  const double d = static_cast<double>(dim);
  const double denom = 1.0 - alpha * alpha * d;
  if (!(denom > 0.0)) return std::nullopt;
  const double bound = 1.0 + (d - 1.0) / denom;
  // A value within rounding of an integer from below is that integer.
  return static_cast<std::uint64_t>(std::floor(bound + 1e-9));
}

bool grassmannian_feasibility(std::size_t dim, std::size_t num) {
  const std::uint64_t d = dim;
  const std::uint64_t n = num;
  const std::uint64_t first = d * (d + 1) / 2;
  const std::uint64_t second = n > d ? (n - d) * (n - d + 1) / 2 : 0;
  return n < std::min(first, second);
}

RowMatrix gram_abs(const FrameMatrix& frame) {
  const RowMatrix& w = frame.rows();
  const Eigen::Index n = w.rows();
  RowMatrix gram(n, n);
  for (Eigen::Index start = 0; start < n; start += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, n - start);
    gram.middleRows(start, len).noalias() = w.middleRows(start, len) * w.transpose();
  }
  return gram.cwiseAbs();
}

double mutual_coherence(const FrameMatrix& frame) {
  double best = 0.0;
  for_each_upper_pair(frame.rows(), [&](double c) { best = std::max(best, c); });
  return best;
}

double min_pairwise_angle_deg(const FrameMatrix& frame) {
  return rad_to_deg(std::acos(clamp_unit(mutual_coherence(frame))));
}

double avg_deviation_angle_deg(const FrameMatrix& frame) {
  // |arccos(c) - pi/2| == arcsin(|c|), which is exact under sign flips.
  double sum = 0.0;
  std::size_t pairs = 0;
  for_each_upper_pair(frame.rows(), [&](double c) {
    sum += std::asin(clamp_unit(c));
    ++pairs;
  });
  if (pairs == 0) return 0.0;
  return rad_to_deg(sum / static_cast<double>(pairs));
}

FrameStats frame_stats(const FrameMatrix& frame, double alpha, double tol) {
  FrameStats stats;
  stats.coherence = mutual_coherence(frame);
  stats.min_angle_deg = rad_to_deg(std::acos(clamp_unit(stats.coherence)));
  stats.avg_deviation_deg = avg_deviation_angle_deg(frame);
  stats.welch_bound = welch_lower_bound(frame.dim(), frame.num());
  stats.satisfies_alpha = stats.coherence <= alpha + tol;
  return stats;
}

FrameMatrix subset(const FrameMatrix& frame, std::span<const std::size_t> indices) {
  if (indices.size() < 2) {
    throw InvalidSelection("subset needs at least two indices");
  }
  std::vector<bool> seen(frame.num(), false);
  RowMatrix rows(static_cast<Eigen::Index>(indices.size()),
                 static_cast<Eigen::Index>(frame.dim()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t idx = indices[k];
    if (idx >= frame.num()) {
      throw InvalidSelection("index " + std::to_string(idx) + " out of range for " +
                             std::to_string(frame.num()) + " rows");
    }
    if (seen[idx]) {
      throw InvalidSelection("duplicate index " + std::to_string(idx));
    }
    seen[idx] = true;
    rows.row(static_cast<Eigen::Index>(k)) = frame.row(idx);
  }
  return FrameMatrix::unchecked(std::move(rows));
}

InfeasibleConfig::InfeasibleConfig(double alpha, double welch_bound)
    : Error("alpha " + std::to_string(alpha) + " is below the Welch bound " +
            std::to_string(welch_bound)),
      alpha_(alpha),
      welch_bound_(welch_bound) {}

}  // namespace ebv
