#include "ebv/frame_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <set>
#include <type_traits>
#include <utility>

#include "ebv/error.hpp"

namespace ebv::io {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

void put_f64(std::vector<std::uint8_t>& out, double value) {
  put_le(out, std::bit_cast<std::uint64_t>(value));
}

double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

std::string errno_text() { return std::strerror(errno); }

// Paths currently open for writing by this process.
class WriteRegistry {
 public:
  bool acquire(const std::string& key) {
    std::lock_guard lock(mu_);
    return open_.insert(key).second;
  }
  void release(const std::string& key) {
    std::lock_guard lock(mu_);
    open_.erase(key);
  }

 private:
  std::mutex mu_;
  std::set<std::string> open_;
};

WriteRegistry& registry() {
  static WriteRegistry r;
  return r;
}

class WriteLease {
 public:
  explicit WriteLease(std::string key) : key_(std::move(key)) {
    if (!registry().acquire(key_)) {
      throw IoError(key_ + ": already open for writing");
    }
  }
  ~WriteLease() { registry().release(key_); }
  WriteLease(const WriteLease&) = delete;
  WriteLease& operator=(const WriteLease&) = delete;

 private:
  std::string key_;
};

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const FrameMatrix& frame, const FrameMeta& meta) {
  if (frame.dim() > std::numeric_limits<std::uint32_t>::max() ||
      frame.num() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidConfig("frame too large for the v1 file format");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 8 * frame.num() * frame.dim());
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(frame.dim()));
  put_le(out, static_cast<std::uint32_t>(frame.num()));
  put_f64(out, meta.alpha);
  put_le(out, meta.seed);
  const RowMatrix& w = frame.rows();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) put_f64(out, w(i, j));
  }
  return out;
}

LoadedFrame decode_frame(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("file too short for header: expected at least " +
                      std::to_string(kHeaderBytes) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("unsupported format: bad magic");
  }
  const auto version = get_le<std::uint16_t>(bytes.data() + 8);
  if (version != kVersion) {
    throw FormatError("unsupported format version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(bytes.data() + 10);
  const auto num = get_le<std::uint32_t>(bytes.data() + 14);
  LoadedFrame out;
  out.meta.alpha = get_f64(bytes.data() + 18);
  out.meta.seed = get_le<std::uint64_t>(bytes.data() + 26);

  const std::uint64_t expected =
      kHeaderBytes + std::uint64_t{8} * std::uint64_t{dim} * std::uint64_t{num};
  if (bytes.size() != expected) {
    throw FormatError("payload size mismatch: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  if (dim == 0 || num == 0) throw FormatError("empty frame");

  RowMatrix rows(static_cast<Eigen::Index>(num), static_cast<Eigen::Index>(dim));
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j, p += 8) rows(i, j) = get_f64(p);
  }
  // Rows are kept bit-for-bit; only checked.
  FrameMatrix::from_unit_rows(rows, kLoadNormTolerance);
  out.frame = FrameMatrix::unchecked(std::move(rows));
  return out;
}

void save_frame(const FrameMatrix& frame, const FrameMeta& meta,
                const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_frame(frame, meta);
  const std::string key = std::filesystem::absolute(path).lexically_normal().string();
  WriteLease lease(key);

  Fd fd(::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
  if (fd.get() < 0) throw IoError(path.string() + ": open failed: " + errno_text());
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd.get(), bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(path.string() + ": write failed: " + errno_text());
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd.get()) != 0) throw IoError(path.string() + ": fsync failed: " + errno_text());
  if (::close(fd.release()) != 0) throw IoError(path.string() + ": close failed: " + errno_text());
}

LoadedFrame load_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string() + ": read failed");
  try {
    return decode_frame(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

}  // namespace ebv::io
