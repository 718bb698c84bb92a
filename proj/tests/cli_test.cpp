// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amc/attacks/attacks.hpp"
#include "amc/signals/dataset.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("amc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun amc(const std::string& args) const {
    const std::string cmd = "cd \"" + dir_.string() + "\" && \"" AMC_BIN "\" " + args + " 2>&1";
    CliRun r{0, {}};
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  void make_data(const std::string& out = "data", std::uint64_t seed = 3) const {
    ASSERT_EQ(amc("gen-data --seed " + std::to_string(seed) + " --records 160 --schemes BPSK,QPSK,QAM16,GFSK --out " + out)
                  .code,
              0);
  }

  fs::path dir_;
};

TEST_F(CliTest, ParamsReproducesPresetCounts) {
  EXPECT_EQ(amc("params --preset teacher").out, "801675\n");
  EXPECT_EQ(amc("params --preset student").out, "230699\n");
  EXPECT_EQ(amc("params --preset model1").out, "102603\n");
}

TEST_F(CliTest, UnknownFlagIsAConfigError) { EXPECT_EQ(amc("params --bogus 1").code, 2); }

TEST_F(CliTest, UnknownConfigKeyIsAConfigError) {
  std::ofstream(dir_ / "c.json") << R"({"records": 10, "colour": "red"})";
  EXPECT_EQ(amc("gen-data --config c.json --out d").code, 2);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  std::ofstream(dir_ / "c.json") << R"({"records": 10, "seed": 4})";
  ASSERT_EQ(amc("gen-data --config c.json --records 24 --out d").code, 0);
  const auto ds = amc::signals::load_container((dir_ / "d/dataset.amc").string());
  EXPECT_EQ(ds.size(), 24u);
  const auto echo = nlohmann::json::parse(slurp(dir_ / "d/config.json"));
  EXPECT_EQ(echo["seed"], 4);
  EXPECT_EQ(echo["records"], 24);
}

TEST_F(CliTest, GenDataIsDeterministicPerSeed) {
  make_data("a", 3);
  make_data("b", 3);
  make_data("c", 4);
  EXPECT_EQ(slurp(dir_ / "a/dataset.amc"), slurp(dir_ / "b/dataset.amc"));
  EXPECT_NE(slurp(dir_ / "a/dataset.amc"), slurp(dir_ / "c/dataset.amc"));
}

TEST_F(CliTest, ConvertVerifyAcceptsValidAndRejectsCorrupt) {
  make_data();
  const auto ok = amc("convert-verify data/dataset.amc");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("records: 160"), std::string::npos);
  EXPECT_EQ(lines(ok.out).back(), "OK");

  std::ofstream(dir_ / "bad.amc", std::ios::binary) << "not a container";
  const auto bad = amc("convert-verify bad.amc");
  EXPECT_EQ(bad.code, 3);
  EXPECT_EQ(bad.out.rfind("INVALID", 0), 0u);
}

TEST_F(CliTest, TeacherRecipeWithoutTeacherIsAConfigError) {
  make_data();
  EXPECT_EQ(amc("train --data data/dataset.amc --recipe atard --epochs 1 --out t").code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "t/final.ckpt"));
}

TEST_F(CliTest, TrainWritesCheckpointsAndLossLog) {
  make_data();
  ASSERT_EQ(amc("train --data data/dataset.amc --recipe nt --epochs 2 --out t").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "t/epoch_001.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "t/epoch_002.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "t/final.ckpt"));
  EXPECT_EQ(amc("params --checkpoint t/final.ckpt").out, amc("params --preset student --classes 4").out);
  const auto log = lines(slurp(dir_ / "t/loss_log.csv"));
  EXPECT_GT(log.size(), 2u);
}

TEST_F(CliTest, AttackRowsMeetTheBudgetExactly) {
  make_data();
  ASSERT_EQ(amc("train --data data/dataset.amc --recipe nt --epochs 1 --out t").code, 0);
  ASSERT_EQ(amc("attack --data data/dataset.amc --model t/final.ckpt --kind pgd --pnr-db -10 --records 10 --out a").code,
            0);
  const auto ds = amc::signals::load_container((dir_ / "data/dataset.amc").string());
  const auto rows = lines(slurp(dir_ / "a/attacks.csv"));
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "record_index,pnr_db,attack,steps_used,perturbation_norm,success,predicted_label");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::istringstream in(rows[r]);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(in, field, ',')) f.push_back(field);
    ASSERT_EQ(f.size(), 7u);
    const auto& rec = ds.records.at(std::stoul(f[0]));
    double x0sq = 0.0;
    for (float v : rec.iq) x0sq += double(v) * v;
    const double eps = std::sqrt(0.1 * x0sq / (std::pow(10.0, rec.snr_db / 10.0) + 1.0));
    EXPECT_NEAR(std::stod(f[4]), eps, 1e-5 * eps) << rows[r];
  }
  const auto adv = amc::signals::load_container((dir_ / "a/adversarial.amc").string());
  EXPECT_EQ(adv.size(), 10u);
}

TEST_F(CliTest, EvalReportsOneColumnPerSeed) {
  make_data();
  ASSERT_EQ(amc("train --data data/dataset.amc --recipe nt --epochs 1 --out t").code, 0);
  ASSERT_EQ(amc("eval --seed 2 --data data/dataset.amc --model s=t/final.ckpt --attack fgm --pnr-grid -20 -10 "
                "--records 20 --seeds 5 --out e")
                .code,
            0);
  const auto csv = lines(slurp(dir_ / "e/s_fgm.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[0],
            "pnr_db,accuracy_mean,accuracy_seed_2,accuracy_seed_3,accuracy_seed_4,accuracy_seed_5,accuracy_seed_6,"
            "n_records");
  const auto summary = nlohmann::json::parse(slurp(dir_ / "e/summary.json"));
  EXPECT_EQ(summary["seeds"].size(), 5u);
  EXPECT_FALSE(summary["config_echo"].contains("out"));
}

TEST_F(CliTest, FinalCheckpointTakesItsDirectoryName) {
  make_data();
  ASSERT_EQ(amc("train --data data/dataset.amc --recipe nt --epochs 1 --out mymodel").code, 0);
  ASSERT_EQ(amc("smoothness --data data/dataset.amc --model mymodel/final.ckpt --records 10 --out s").code, 0);
  const auto summary = nlohmann::json::parse(slurp(dir_ / "s/summary.json"));
  EXPECT_NE(summary.dump().find("mymodel"), std::string::npos);
}

TEST_F(CliTest, MissingDataFileFails) {
  EXPECT_NE(amc("train --data nowhere.amc --recipe nt --epochs 1 --out t").code, 0);
}

}  // namespace
