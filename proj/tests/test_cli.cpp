// Copyright 2026 The nmrq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nmrq/circuits.hpp"
#include "nmrq/engine.hpp"
#include "test_support.hpp"

namespace nmrq {
namespace {

using nlohmann::json;

struct Outcome {
  int code = -1;
  std::string out;
};

/// Runs the CLI with `args`, capturing stdout; stderr is discarded.
Outcome cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + NMRQ_CLI_PATH + "' " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir(std::string("cli-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  std::string data() const { return "--data-dir '" + dir_.string() + "'"; }
  std::filesystem::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("teleport").code, 1);
  EXPECT_EQ(cli("simulate --no-such-flag").code, 1);
  EXPECT_EQ(cli("simulate").code, 1);
  EXPECT_EQ(cli("simulate --builtin nope").code, 1);
  EXPECT_EQ(cli("simulate '" + (dir_ / "missing.json").string() + "'").code, 1);
  EXPECT_EQ(cli("hhl --mode fast").code, 1);
  EXPECT_EQ(cli("spectra --builtin ghz --qubit 4 --ideal-pulses " + data()).code, 1);
  EXPECT_EQ(cli("pps --cycles 0").code, 1);
  EXPECT_EQ(cli("grape-synth SWAP12").code, 1);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(CliTest, SimulateBuiltin) {
  const auto o = cli("simulate --builtin ghz");
  ASSERT_EQ(o.code, 0);
  const auto job = json::parse(o.out);
  EXPECT_EQ(job.at("status"), "done");
  const auto p = job.at("result").at("probabilities").get<std::vector<double>>();
  ASSERT_EQ(p.size(), 8u);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[7], 0.5, 1e-12);
}

TEST_F(CliTest, SimulateCircuitFileToOutFile) {
  Circuit c;
  c.add(GateKind::X, {1}).add(GateKind::CNOT, {1, 3});
  c.measure = {true, false, true};
  write_file(dir_ / "c.json", json(c).dump());
  const auto out = dir_ / "result.json";
  const auto o = cli("simulate '" + (dir_ / "c.json").string() + "' --out '" + out.string() + "'");
  ASSERT_EQ(o.code, 0);
  EXPECT_TRUE(o.out.empty());
  const auto p = json::parse(slurp(out)).at("result").at("probabilities").get<std::vector<double>>();
  ASSERT_EQ(p.size(), 4u);
  EXPECT_NEAR(p[3], 1.0, 1e-12);
}

TEST_F(CliTest, MalformedCircuitIsUsageError) {
  write_file(dir_ / "bad.json", R"({"gates": [{"kind": "CNOTT", "qubits": [1, 2]}]})");
  EXPECT_EQ(cli("simulate '" + (dir_ / "bad.json").string() + "'").code, 1);
  write_file(dir_ / "broken.json", "{");
  EXPECT_EQ(cli("simulate '" + (dir_ / "broken.json").string() + "'").code, 1);
}

TEST_F(CliTest, RunWithIdealPulses) {
  const auto o = cli("run --builtin ghz --ideal-pulses " + data());
  ASSERT_EQ(o.code, 0);
  const auto job = json::parse(o.out);
  EXPECT_EQ(job.at("mode"), "emulate");
  const auto p = job.at("result").at("probabilities").get<std::vector<double>>();
  EXPECT_GE(p[0], 0.4);
  EXPECT_GE(p[7], 0.4);
}

TEST_F(CliTest, PpsReport) {
  const auto o = cli("pps");
  ASSERT_EQ(o.code, 0);
  const auto r = json::parse(o.out);
  EXPECT_EQ(r.size(), 5u);
  for (const char* k : {"eta", "uniformity", "populations", "cycles", "delay_s"}) EXPECT_TRUE(r.contains(k)) << k;
  EXPECT_EQ(r.at("populations").size(), 8u);
  EXPECT_LE(r.at("uniformity").get<double>(), 0.05);

  const auto fixed = json::parse(cli("pps --cycles 1 --delay 1e-9").out);
  EXPECT_EQ(fixed.at("cycles"), 1);
  EXPECT_DOUBLE_EQ(fixed.at("delay_s").get<double>(), 1e-9);
}

TEST_F(CliTest, HhlSimulate) {
  const auto o = cli("hhl --mode simulate");
  ASSERT_EQ(o.code, 0);
  const auto r = json::parse(o.out);
  const auto ref = hhl_reference(demo_hhl_problem());
  EXPECT_EQ(r.at("mode"), "simulate");
  EXPECT_NEAR(r.at("reference").at("x")[0].get<double>(), ref.x[0], 1e-12);
  EXPECT_TRUE(r.contains("solution"));
}

TEST_F(CliTest, HhlEmulateRepetitions) {
  const auto o = cli("hhl --mode emulate --repetitions 2 --ideal-pulses " + data());
  ASSERT_EQ(o.code, 0);
  const auto r = json::parse(o.out);
  EXPECT_EQ(r.at("mode"), "emulate");
  EXPECT_EQ(r.at("runs").size(), 2u);
  EXPECT_TRUE(r.contains("mean"));
}

TEST_F(CliTest, SpectraCsv) {
  const auto o = cli("spectra --builtin ghz --qubit 2 --ideal-pulses " + data());
  ASSERT_EQ(o.code, 0);
  std::istringstream in(o.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frequency_hz,real,imag");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2);
    ++rows;
  }
  EXPECT_GT(rows, 100);
}

TEST_F(CliTest, GrapeSynthWritesWaveformAndSidecar) {
  const auto out = dir_ / "X1.json";
  const auto o = cli("grape-synth X1 --seed 3 --out '" + out.string() + "'");
  ASSERT_EQ(o.code, 0);
  const auto w = json::parse(slurp(out)).get<Waveform>();
  EXPECT_FALSE(w.segments.empty());
  const auto meta = json::parse(slurp(dir_ / "X1.meta.json"));
  EXPECT_EQ(meta.size(), 4u);
  EXPECT_EQ(meta.at("gate"), "X1");
  EXPECT_EQ(meta.at("seed"), 3);
  EXPECT_GE(meta.at("fidelity").get<double>(), 0.999);
  EXPECT_GE(meta.at("iterations").get<int>(), 0);
}

TEST_F(CliTest, ProfileFlagAndConfigFile) {
  write_file(dir_ / "spec.json", json(default_molecule()).dump());
  EXPECT_EQ(cli("--profile '" + (dir_ / "spec.json").string() + "' simulate --builtin ghz").code, 0);
  EXPECT_EQ(cli("--profile '" + (dir_ / "none.json").string() + "' simulate --builtin ghz").code, 1);
  auto bad = default_molecule();
  bad.t2_s = -1.0;
  write_file(dir_ / "bad.json", json(bad).dump());
  EXPECT_EQ(cli("--profile '" + (dir_ / "bad.json").string() + "' pps").code, 1);

  // The config file supplies defaults; an explicit flag wins.
  write_file(dir_ / "cfg.ini", "profile=\"" + (dir_ / "none.json").string() + "\"\n");
  const std::string cfg = "--config '" + (dir_ / "cfg.ini").string() + "' ";
  EXPECT_EQ(cli(cfg + "simulate --builtin ghz").code, 1);
  EXPECT_EQ(cli(cfg + "--profile '" + (dir_ / "spec.json").string() + "' simulate --builtin ghz").code, 0);
}

TEST(DataDir, EnvironmentVariableSetsTheDefault) {
  ::setenv(kDataDirEnv, "/tmp/nmrq-env-check", 1);
  EXPECT_EQ(default_data_dir(), std::filesystem::path("/tmp/nmrq-env-check"));
  EXPECT_EQ(EngineConfig{}.data_dir, std::filesystem::path("/tmp/nmrq-env-check"));
  ::unsetenv(kDataDirEnv);
  EXPECT_NE(default_data_dir(), std::filesystem::path("/tmp/nmrq-env-check"));
}

}  // namespace
}  // namespace nmrq
