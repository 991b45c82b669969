#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace ebv {

// One basis vector per row (N x d). Serialized files use the same layout.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kUnitNormTolerance = 1e-9;

// Process-wide switch: when set, every parallel reduction uses a fixed
// accumulation order so repeated runs are bit-identical.
void set_deterministic(bool enabled) noexcept;
bool deterministic() noexcept;

struct FrameConfig {
  double alpha = 0.1;
  std::size_t dim = 0;
  std::size_t num = 0;
  std::uint64_t seed = 0;
  // 0 selects default_learning_rate(num).
  double learning_rate = 0.0;
  std::size_t slice = 256;
  std::size_t max_iters = 100000;
  // 0 selects default_tolerance(alpha).
  double tol = 0.0;
  // 0 = use hardware concurrency.
  std::size_t threads = 0;

  // Throws InvalidConfig on any field outside its domain. Feasibility
  // against the Welch bound is checked separately (see is_feasible).
  void validate() const;
  bool is_feasible() const;

  double effective_learning_rate() const;
  double effective_tol() const;
};

// min(0.1, 10 / num). The summed hinge gradient grows with num; larger
// steps flip rows through the origin and collapse the frame.
double default_learning_rate(std::size_t num) noexcept;
// min(5e-3, alpha), or 5e-3 at alpha = 0.
double default_tolerance(double alpha) noexcept;

class FrameMatrix {
 public:
  FrameMatrix() = default;

  // Scales every row to unit length. Throws DegenerateInput on a zero row.
  static FrameMatrix normalized(RowMatrix rows);
  // Takes rows as-is after checking |norm - 1| <= tolerance for each row.
  static FrameMatrix from_unit_rows(RowMatrix rows,
                                    double tolerance = kUnitNormTolerance);
  // No validation. Used for optimizer iterates whose rows drift off the
  // sphere between normalization passes.
  static FrameMatrix unchecked(RowMatrix rows);
  // First `num` standard basis vectors of R^dim (num <= dim).
  static FrameMatrix orthonormal(std::size_t dim, std::size_t num);
  static FrameMatrix identity(std::size_t n) { return orthonormal(n, n); }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t num() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
  const RowMatrix& rows() const noexcept { return rows_; }
  auto row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)); }

  bool has_unit_rows(double tolerance = kUnitNormTolerance) const;
  FrameMatrix renormalized() const { return normalized(rows_); }

  friend bool operator==(const FrameMatrix& a, const FrameMatrix& b) {
    return a.rows_.rows() == b.rows_.rows() && a.rows_.cols() == b.rows_.cols() &&
           a.rows_ == b.rows_;
  }

 private:
  explicit FrameMatrix(RowMatrix rows) : rows_(std::move(rows)) {}

  RowMatrix rows_;
};

struct FrameStats {
  double coherence = 0.0;
  double min_angle_deg = 90.0;
  double avg_deviation_deg = 0.0;
  double welch_bound = 0.0;
  bool satisfies_alpha = false;
};

// sqrt((N - d) / (d (N - 1))) for N > d, else 0.
double welch_lower_bound(std::size_t dim, std::size_t num);

// floor(1 + (d - 1) / (1 - alpha^2 d)); empty when 1 - alpha^2 d <= 0.
std::optional<std::uint64_t> max_num_upper_bound(double alpha, std::size_t dim);

// N < min(d(d+1)/2, (N-d)(N-d+1)/2), second term clamped to 0 for N <= d.
bool grassmannian_feasibility(std::size_t dim, std::size_t num);

// |w_i . w_j| for all pairs, computed in row blocks.
RowMatrix gram_abs(const FrameMatrix& frame);

double mutual_coherence(const FrameMatrix& frame);
double min_pairwise_angle_deg(const FrameMatrix& frame);
// Mean over unordered pairs of |arccos(w_i . w_j) - 90 deg|.
double avg_deviation_angle_deg(const FrameMatrix& frame);

FrameStats frame_stats(const FrameMatrix& frame, double alpha, double tol);

// Throws InvalidSelection on out-of-range, duplicate, or fewer than two indices.
FrameMatrix subset(const FrameMatrix& frame, std::span<const std::size_t> indices);

double rad_to_deg(double radians) noexcept;

}  // namespace ebv
