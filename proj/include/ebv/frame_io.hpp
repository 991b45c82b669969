#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ebv/frame.hpp"

namespace ebv::io {

// Frame file layout, all fields little-endian, no padding:
//
//   offset  size  field
//        0     8  magic "EBVFRAME"
//        8     2  version (u16, = 1)
//       10     4  dim (u32)
//       14     4  num (u32)
//       18     8  alpha (f64)
//       26     8  seed (u64)
//       34  8*N*d payload, f64 row-major, one basis vector per row
//
// The mathematical convention W in R^{d x N} is the transpose of the
// payload.
inline constexpr char kMagic[8] = {'E', 'B', 'V', 'F', 'R', 'A', 'M', 'E'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 34;
inline constexpr double kLoadNormTolerance = 1e-6;

struct FrameMeta {
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

struct LoadedFrame {
  FrameMatrix frame;
  FrameMeta meta;
};

std::vector<std::uint8_t> encode_frame(const FrameMatrix& frame, const FrameMeta& meta);

// Throws FormatError (magic, version, size) or IntegrityError (row norms).
LoadedFrame decode_frame(const std::vector<std::uint8_t>& bytes);

// Writes and fsyncs. Throws IoError naming the path; also when another
// write to the same path is in progress in this process.
void save_frame(const FrameMatrix& frame, const FrameMeta& meta,
                const std::filesystem::path& path);

LoadedFrame load_frame(const std::filesystem::path& path);

}  // namespace ebv::io
