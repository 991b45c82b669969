#include <gtest/gtest.h>

#include <atomic>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <thread>

#include "ebv/error.hpp"
#include "ebv/frame_io.hpp"
#include "test_support.hpp"

using namespace ebv;
using namespace ebv::io;
namespace fs = std::filesystem;
namespace t = ebv::testing;

namespace {

class FrameFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ebv_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  static std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  static void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }

  fs::path dir_;
};

template <typename T>
T read_le(const std::vector<std::uint8_t>& b, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{b[offset + i]} << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(v);
  } else {
    return static_cast<T>(v);
  }
}

}  // namespace

TEST_F(FrameFileTest, IdentityRoundTrip) {
  const FrameMatrix f = FrameMatrix::identity(4);
  save_frame(f, {0.0, 5}, path("id.ebv"));
  const LoadedFrame loaded = load_frame(path("id.ebv"));
  EXPECT_EQ(loaded.frame, f);
  EXPECT_EQ(loaded.meta.alpha, 0.0);
  EXPECT_EQ(loaded.meta.seed, 5u);
}

TEST_F(FrameFileTest, HeaderLayout) {
  std::mt19937_64 rng(1);
  const FrameMatrix f = t::random_frame(1000, 100, rng);
  save_frame(f, {0.14, 0xdeadbeefcafeULL}, path("big.ebv"));
  const std::vector<std::uint8_t> b = read_bytes(path("big.ebv"));
  ASSERT_EQ(b.size(), 34u + 8u * 1000u * 100u);
  EXPECT_EQ(std::memcmp(b.data(), "EBVFRAME", 8), 0);
  EXPECT_EQ(read_le<std::uint16_t>(b, 8), 1u);
  EXPECT_EQ(read_le<std::uint32_t>(b, 10), 100u);
  EXPECT_EQ(read_le<std::uint32_t>(b, 14), 1000u);
  EXPECT_EQ(read_le<double>(b, 18), 0.14);
  EXPECT_EQ(read_le<std::uint64_t>(b, 26), 0xdeadbeefcafeULL);
  // Row-major payload: row 1 starts after the 100 entries of row 0.
  EXPECT_EQ(read_le<double>(b, 34), f.rows()(0, 0));
  EXPECT_EQ(read_le<double>(b, 34 + 8 * 100), f.rows()(1, 0));
  EXPECT_EQ(read_le<double>(b, 34 + 8 * 101), f.rows()(1, 1));
}

TEST_F(FrameFileTest, TruncatedPayloadNamesSizes) {
  save_frame(FrameMatrix::identity(4), {0.0, 0}, path("t.ebv"));
  std::vector<std::uint8_t> b = read_bytes(path("t.ebv"));
  b.resize(b.size() - 8);
  write_bytes(path("t.ebv"), b);
  try {
    load_frame(path("t.ebv"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 162"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 154"), std::string::npos) << msg;
    EXPECT_NE(msg.find("t.ebv"), std::string::npos) << msg;
  }
}

TEST_F(FrameFileTest, ShortHeaderBadMagicBadVersion) {
  const std::vector<std::uint8_t> good = encode_frame(FrameMatrix::identity(2), {0.0, 0});
  EXPECT_THROW(decode_frame(std::vector<std::uint8_t>(good.begin(), good.begin() + 20)),
               FormatError);
  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_frame(magic), FormatError);
  std::vector<std::uint8_t> version = good;
  version[8] = 2;
  EXPECT_THROW(decode_frame(version), FormatError);
  std::vector<std::uint8_t> extra = good;
  extra.push_back(0);
  EXPECT_THROW(decode_frame(extra), FormatError);
}

TEST_F(FrameFileTest, NormViolationIsIntegrityError) {
  std::vector<std::uint8_t> b = encode_frame(FrameMatrix::identity(3), {0.0, 0});
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(1.01);
  for (int i = 0; i < 8; ++i) b[34 + i] = static_cast<std::uint8_t>(bits >> (8 * i));
  write_bytes(path("bad.ebv"), b);
  try {
    load_frame(path("bad.ebv"));
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.ebv"), std::string::npos);
  }
}

TEST_F(FrameFileTest, SmallNormDriftIsAcceptedAndKept) {
  RowMatrix rows(2, 2);
  rows << 1.0 + 5e-7, 0.0, 0.0, 1.0;
  const FrameMatrix f = FrameMatrix::unchecked(rows);
  const LoadedFrame loaded = decode_frame(encode_frame(f, {0.1, 1}));
  EXPECT_EQ(loaded.frame.rows()(0, 0), 1.0 + 5e-7);
}

TEST_F(FrameFileTest, MissingFileIsIoError) {
  EXPECT_THROW(load_frame(path("nope.ebv")), IoError);
  EXPECT_THROW(save_frame(FrameMatrix::identity(2), {}, path("no/such/dir/x.ebv")), IoError);
}

TEST_F(FrameFileTest, FiftyRandomFramesRoundTripBitExactly) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = 1 + rng() % 40;
    const std::size_t n = 1 + rng() % 60;
    const FrameMatrix f = t::random_frame(n, d, rng);
    const FrameMeta meta{static_cast<double>(rng() % 1000) / 1000.0, rng()};
    const fs::path p = path("r" + std::to_string(i) + ".ebv");
    save_frame(f, meta, p);
    const std::vector<std::uint8_t> first = read_bytes(p);
    const LoadedFrame loaded = load_frame(p);
    ASSERT_EQ(loaded.frame, f);
    ASSERT_EQ(loaded.meta.seed, meta.seed);
    ASSERT_EQ(std::bit_cast<std::uint64_t>(loaded.meta.alpha),
              std::bit_cast<std::uint64_t>(meta.alpha));
    save_frame(loaded.frame, loaded.meta, p);
    ASSERT_EQ(read_bytes(p), first);
  }
}

TEST_F(FrameFileTest, ConcurrentWriteToSamePathIsRefused) {
  // A large frame keeps the first writer busy long enough to overlap.
  std::mt19937_64 rng(3);
  const FrameMatrix f = t::random_frame(2000, 500, rng);
  const fs::path p = path("shared.ebv");
  std::atomic<int> refused{0};
  std::atomic<int> ok{0};
  {
    std::vector<std::jthread> writers;
    for (int i = 0; i < 4; ++i) {
      writers.emplace_back([&] {
        try {
          save_frame(f, {0.1, 1}, p);
          ++ok;
        } catch (const IoError&) {
          ++refused;
        }
      });
    }
  }
  EXPECT_GE(ok.load(), 1);
  EXPECT_EQ(ok + refused, 4);
  EXPECT_EQ(load_frame(p).frame, f);
  // The lease is released afterwards.
  EXPECT_NO_THROW(save_frame(f, {0.1, 1}, p));
}
