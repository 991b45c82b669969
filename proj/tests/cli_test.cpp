#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <json.hpp>
#include <sstream>

#include "ebv/cli.hpp"
#include "ebv/frame_io.hpp"

namespace fs = std::filesystem;
using ebv::cli::run_cli;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.find('\t') == std::string::npos) {
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return kv;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ebv_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, BoundsWithoutAlpha) {
  const CliResult r = cli({"bounds", "--dim", "50", "--num", "99"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto kv = key_values(r.out);
  EXPECT_NEAR(std::stod(kv["welch_lower_bound"]), 0.1, 1e-12);
  EXPECT_EQ(kv["max_num_upper_bound"], "n/a");
  EXPECT_EQ(kv["grassmannian_feasibility"], "true");
  EXPECT_EQ(kv["sqrt2n_heuristic"], "15");
  EXPECT_EQ(kv.count("alpha_feasible"), 0u);
}

TEST_F(CliTest, BoundsWithAlpha) {
  auto kv = key_values(cli({"bounds", "--dim", "50", "--num", "99", "--alpha", "0.1"}).out);
  EXPECT_EQ(kv["max_num_upper_bound"], "99");
  EXPECT_EQ(kv["alpha_feasible"], "true");
  kv = key_values(cli({"bounds", "--dim", "100", "--num", "1000", "--alpha", "0.1"}).out);
  EXPECT_EQ(kv["max_num_upper_bound"], "unbounded");
  EXPECT_EQ(kv["grassmannian_feasibility"], "true");
  EXPECT_EQ(kv["sqrt2n_heuristic"], "45");
  kv = key_values(cli({"bounds", "--dim", "100", "--num", "1000", "--alpha", "0.05"}).out);
  EXPECT_EQ(kv["alpha_feasible"], "false");
}

TEST_F(CliTest, GenerateThenStats) {
  const std::string f = path("f.ebv");
  const CliResult g = cli({"generate", "--dim", "8", "--num", "8", "--alpha", "0.001", "--quiet", "--out", f});
  ASSERT_EQ(g.code, 0) << g.err;
  auto kv = key_values(g.out);
  EXPECT_EQ(kv["converged"], "true");
  EXPECT_EQ(kv["out"], f);
  EXPECT_TRUE(g.err.empty()) << g.err;

  const CliResult s = cli({"stats", "--in", f});
  ASSERT_EQ(s.code, 0) << s.err;
  kv = key_values(s.out);
  EXPECT_GE(std::stod(kv["min_angle_deg"]), 89.88);
  EXPECT_EQ(kv["alpha"], "0.001");
  EXPECT_EQ(kv["satisfies_alpha"], "true");
  EXPECT_EQ(kv["dim"], "8");
  EXPECT_EQ(kv["num"], "8");
}

TEST_F(CliTest, GenerateProgressGoesToStderr) {
  const CliResult g = cli({"generate", "--dim", "6", "--num", "20", "--alpha", "0.4", "--max-iters", "30",
                     "--tol", "1e-9", "--out", path("p.ebv")});
  EXPECT_NE(g.err.find("iter=10 loss="), std::string::npos) << g.err;
  EXPECT_EQ(g.out.find("iter="), std::string::npos);
}

TEST_F(CliTest, StatsJsonIsFlatObject) {
  const std::string f = path("j.ebv");
  ebv::io::save_frame(ebv::FrameMatrix::identity(3), {0.0, 1}, f);
  const CliResult s = cli({"stats", "--in", f, "--json", "--alpha", "0.2", "--tol", "0.01"});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto j = nlohmann::json::parse(s.out);
  ASSERT_TRUE(j.is_object());
  for (const auto& item : j.items()) EXPECT_FALSE(item.value().is_structured()) << item.key();
  EXPECT_EQ(j["coherence"].get<double>(), 0.0);
  EXPECT_EQ(j["min_angle_deg"].get<double>(), 90.0);
  EXPECT_EQ(j["alpha"].get<double>(), 0.2);
  EXPECT_EQ(j["tol"].get<double>(), 0.01);
  EXPECT_EQ(j["satisfies_alpha"].get<bool>(), true);
}

TEST_F(CliTest, StatsOnCorruptedFile) {
  const std::string f = path("c.ebv");
  std::vector<std::uint8_t> b = ebv::io::encode_frame(ebv::FrameMatrix::identity(3), {0.0, 0});
  b[34 + 8 * 4 + 7] ^= 0x10;  // row 1, exponent byte of the 1.0
  std::ofstream(f, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
  const CliResult s = cli({"stats", "--in", f});
  EXPECT_EQ(s.code, 65);
  EXPECT_NE(s.err.find("integrity"), std::string::npos) << s.err;

  std::ofstream(path("junk.ebv")) << "not a frame file at all, just some text........";
  const CliResult j = cli({"stats", "--in", path("junk.ebv")});
  EXPECT_EQ(j.code, 65);
  EXPECT_NE(j.err.find("unsupported format"), std::string::npos) << j.err;
}

TEST_F(CliTest, StatsOnMissingFile) {
  EXPECT_EQ(cli({"stats", "--in", path("missing.ebv")}).code, 74);
}

TEST_F(CliTest, InfeasibleAlpha) {
  const std::string f = path("inf.ebv");
  const CliResult r = cli({"generate", "--dim", "100", "--num", "1000", "--alpha", "0.05", "--out", f});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("0.0949"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(f));
}

TEST_F(CliTest, NotConvergedWritesBestFrame) {
  const std::string f = path("nc.ebv");
  const CliResult r = cli({"generate", "--dim", "10", "--num", "40", "--alpha", "0.3", "--max-iters", "3",
                     "--quiet", "--out", f});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(key_values(r.out)["converged"], "false");
  ASSERT_TRUE(fs::exists(f));
  EXPECT_EQ(ebv::io::load_frame(f).frame.num(), 40u);
}

TEST_F(CliTest, UsageErrors) {
  CliResult r = cli({"generate", "--dim", "8", "--num", "8", "--alpha", "0.1", "--bogus", "--out", path("x")});
  EXPECT_EQ(r.code, 64);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--dim"), std::string::npos) << "usage text expected";

  r = cli({"generate", "--dim", "abc", "--num", "8", "--alpha", "0.1", "--out", path("x")});
  EXPECT_EQ(r.code, 64);
  EXPECT_NE(r.err.find("abc"), std::string::npos) << r.err;

  EXPECT_EQ(cli({"generate", "--dim", "8", "--num", "8", "--alpha", "1.5", "--out", path("x")}).code, 64);
  EXPECT_EQ(cli({"generate", "--dim", "0", "--num", "8", "--alpha", "0.1", "--out", path("x")}).code, 64);
  EXPECT_EQ(cli({"frobnicate"}).code, 64);
  EXPECT_EQ(cli({}).code, 64);
  EXPECT_EQ(cli({"bounds", "--dim", "4"}).code, 64);
}

TEST_F(CliTest, Help) {
  const CliResult r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("generate"), std::string::npos);
  EXPECT_EQ(cli({"capacity", "--help"}).code, 0);
}

TEST_F(CliTest, CapacityTable) {
  const CliResult r = cli({"capacity", "--dim", "3", "--alpha", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "num\tsucceeded\tattempts\tbest_coherence");
  std::string row;
  int rows = 0;
  while (std::getline(in, row)) {
    EXPECT_EQ(std::count(row.begin(), row.end(), '\t'), 3) << row;
    ++rows;
  }
  EXPECT_GE(rows, 2);
  EXPECT_EQ(r.out.find('\r'), std::string::npos);
  EXPECT_EQ(key_values(r.err)["max_num_found"], "3");

  const std::string t = path("cap.tsv");
  const CliResult f = cli({"capacity", "--dim", "3", "--alpha", "0", "--out", t});
  ASSERT_EQ(f.code, 0);
  EXPECT_EQ(key_values(f.out)["max_num_found"], "3");
  EXPECT_EQ(read_file(t), r.out);
}

TEST_F(CliTest, DemoTrain) {
  const CliResult r = cli({"demo-train", "--classes", "4", "--generate-frame", "--epochs", "3",
                     "--per-class", "20", "--baseline", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("arm\tepoch\ttrain_loss\ttrain_acc\ttest_acc\n", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("ebv\t3\t"), std::string::npos);
  EXPECT_NE(r.out.find("fc\t3\t"), std::string::npos);
  auto kv = key_values(r.out);
  EXPECT_TRUE(kv.count("ebv_test_acc"));
  EXPECT_TRUE(kv.count("fc_test_acc"));
  EXPECT_TRUE(kv.count("test_acc_delta"));
  EXPECT_TRUE(kv.count("own_vector_closest_train"));
  EXPECT_EQ(kv["ebv_dim"], "4");
}

TEST_F(CliTest, DemoTrainFromFrameFile) {
  const std::string f = path("head.ebv");
  ebv::io::save_frame(ebv::FrameMatrix::identity(5), {0.0, 0}, f);
  const CliResult r = cli({"demo-train", "--classes", "3", "--frame", f, "--epochs", "2", "--per-class",
                     "10", "--table", path("t.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(path("t.tsv")).rfind("arm\tepoch", 0), 0u);
  EXPECT_EQ(key_values(r.out)["ebv_dim"], "5");

  EXPECT_EQ(cli({"demo-train", "--classes", "6", "--frame", f, "--epochs", "1"}).code, 64);
  EXPECT_EQ(cli({"demo-train", "--classes", "3", "--frame", f, "--generate-frame"}).code, 64);
  EXPECT_EQ(cli({"demo-train", "--classes", "3"}).code, 64);
}

TEST_F(CliTest, ParameterReport) {
  const CliResult r = cli({"demo-train", "--report-only", "--classes", "1000", "--dim", "100",
                     "--hidden", "512"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto kv = key_values(r.out);
  EXPECT_EQ(kv["ebv_head_params"], "51200");
  EXPECT_EQ(kv["fc_head_params"], "512000");
  EXPECT_EQ(kv["param_reduction"], "10");
}

TEST_F(CliTest, DeterministicGenerateIsReproducible) {
  auto strip = [](std::string s) {
    std::string outl;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("elapsed_seconds=", 0) == 0 || line.rfind("out=", 0) == 0) continue;
      outl += line + "\n";
    }
    return outl;
  };
  const std::vector<std::string> base{"generate", "--dim", "12", "--num", "60", "--alpha", "0.4",
                                      "--seed", "9", "--threads", "3", "--slice", "8",
                                      "--deterministic", "--quiet", "--out"};
  std::vector<std::string> a = base, b = base;
  a.push_back(path("a.ebv"));
  b.push_back(path("b.ebv"));
  const CliResult ra = cli(a);
  const CliResult rb = cli(b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  EXPECT_EQ(strip(ra.out), strip(rb.out));
  EXPECT_EQ(read_file(path("a.ebv")), read_file(path("b.ebv")));
}

TEST_F(CliTest, BinaryExitCodes) {
  auto status = [](const std::string& args) {
    const std::string cmd = std::string(EBV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("bounds --dim 50 --num 99"), 0);
  EXPECT_EQ(status("generate --dim 4 --num 4 --alpha 0.01 --quiet --out " + path("ok.ebv")), 0);
  EXPECT_EQ(status("generate --dim 10 --num 40 --alpha 0.3 --max-iters 2 --quiet --out " +
                   path("nc.ebv")),
            2);
  EXPECT_EQ(status("generate --dim 4 --num 8 --alpha 0.1 --out " + path("inf.ebv")), 3);
  EXPECT_EQ(status("generate --nope"), 64);
  std::ofstream(path("bad.ebv")) << "EBVFRAME";
  EXPECT_EQ(status("stats --in " + path("bad.ebv")), 65);
  EXPECT_EQ(status("stats --in " + path("absent.ebv")), 74);
}
