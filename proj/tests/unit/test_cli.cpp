#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ipdf/ipdf.hpp"

using namespace ipdf;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + IPDF_CLI_PATH + "\" " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ipdf_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GridGenWritesLevelOne) {
  const auto r = run_cli("grid gen --level 1 --out " + path("g.so3g"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto set = read_rotation_set(path("g.so3g"));
  EXPECT_EQ(set.level, 1);
  EXPECT_EQ(set.rotations.size(), 576u);
}

TEST_F(Cli, SynthIsByteIdenticalAcrossRuns) {
  const std::string args = "synth --kind cube --n 50 --noise 0.01 --seed 7 --out ";
  ASSERT_EQ(run_cli(args + path("a.jsonl")).exit_code, 0);
  ASSERT_EQ(run_cli(args + path("b.jsonl")).exit_code, 0);
  const std::string a = slurp(path("a.jsonl"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("b.jsonl")));
  EXPECT_EQ(read_dataset(path("a.jsonl")).size(), 50u);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli("grid gen --level 1 --out " + path("g") + " --bogus").exit_code, 1);
  EXPECT_EQ(run_cli("grid gen --out " + path("g")).exit_code, 1);
  EXPECT_EQ(run_cli("frobnicate").exit_code, 1);
}

TEST_F(Cli, DataErrorsExitTwoAndNameThePath) {
  std::ofstream(path("bad.ckpt")) << "NOPE and more bytes";
  ASSERT_EQ(run_cli("synth --kind cube --n 3 --out " + path("d.jsonl")).exit_code, 0);
  const auto r = run_cli("eval --ckpt " + path("bad.ckpt") + " --data " + path("d.jsonl") + " --grid-level 1 --report " +
                         path("r.json"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find(path("bad.ckpt")), std::string::npos) << r.output;
  EXPECT_EQ(run_cli("grid gen --level 9 --out " + path("g")).exit_code, 2);
  EXPECT_EQ(run_cli("synth --kind dodecahedron --n 3 --out " + path("x")).exit_code, 2);
}

TEST_F(Cli, EvalOfZeroInitModelIsUniform) {
  ASSERT_EQ(run_cli("synth --kind cube --n 6 --seed 3 --out " + path("d.jsonl")).exit_code, 0);
  ModelConfig c;
  c.descriptor_dim = kDefaultDescriptorDim;
  c.hidden_width = 32;
  c.hidden_layers = 2;
  save_checkpoint(path("zero.ckpt"), ImplicitDensityModel(c));
  const auto r = run_cli("eval --ckpt " + path("zero.ckpt") + " --data " + path("d.jsonl") +
                         " --grid-level 2 --topk 2 --report " + path("r.json"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto report = nlohmann::json::parse(slurp(path("r.json")));
  EXPECT_NEAR(report.at("avg_log_likelihood").get<double>(), -std::log(kPi * kPi), 1e-9);
  EXPECT_TRUE(report.at("topk").contains("2"));
  EXPECT_TRUE(fs::exists(path("r.csv")));
}

TEST_F(Cli, PredictVizAndBenchPipeline) {
  ASSERT_EQ(run_cli("synth --kind cube --n 1 --seed 4 --out " + path("d.jsonl")).exit_code, 0);
  ModelConfig c;
  c.descriptor_dim = kDefaultDescriptorDim;
  c.hidden_width = 16;
  c.hidden_layers = 1;
  ImplicitDensityModel m(c);
  m.parameters().w_out.setConstant(0.3);
  save_checkpoint(path("m.ckpt"), m);
  auto r = run_cli("predict --ckpt " + path("m.ckpt") + " --descriptor " + path("d.jsonl") +
                   " --grid-level 1 --ascent-steps 5 --dist-out " + path("p.so3d") + " --out " + path("p.jsonl"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::ifstream pin(path("p.jsonl"));
  std::string first;
  std::getline(pin, first);
  EXPECT_TRUE(nlohmann::json::parse(first).contains("quaternion"));
  EXPECT_EQ(read_distribution(path("p.so3d")).size(), 576u);

  ASSERT_EQ(run_cli("grid gen --level 1 --out " + path("g.so3g")).exit_code, 0);
  r = run_cli("viz --dist " + path("p.so3d") + " --grid " + path("g.so3g") + " --out " + path("p.svg") + " --axis x");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(slurp(path("p.svg")).find("<svg"), std::string::npos);

  r = run_cli("bench --ckpt " + path("m.ckpt") + " --levels 0,1 --repetitions 3 --csv " + path("t.csv"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(slurp(path("t.csv")).rfind("level,cells,median_seconds,fps\n0,72,", 0), 0u);
}
