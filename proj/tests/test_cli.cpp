#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "matchlearn/cli.hpp"
#include "matchlearn/io.hpp"
#include "test_util.hpp"

using namespace matchlearn;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "matchlearn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::stringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

void expect_diagnostic(const CliRun& r, int code) {
  EXPECT_EQ(r.code, code) << r.err;
  ASSERT_FALSE(r.err.empty());
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << "diagnostic must be one line";
  const auto j = json::parse(r.err);
  EXPECT_TRUE(j.contains("error"));
  EXPECT_TRUE(j.contains("message"));
}

std::string write_file(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(Cli, NuForOneToOne) {
  const auto r = run({"nu", "--scheme", "oto", "--d1", "100", "--d2", "750"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("nu").get<double>(), 0.0013333333333333333, 1e-18);
  EXPECT_EQ(j.at("mc_se").get<double>(), 0.0);
}

TEST(Cli, NuForTwoSidedReportsMonteCarloError) {
  const auto r = run({"nu", "--scheme", "tside", "--d1", "10", "--d2", "40", "--c-r", "0.5", "--c-s", "0.5",
                      "--mc", "20000", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(json::parse(r.out).at("mc_se").get<double>(), 0.0);
}

TEST(Cli, UsageErrorsExitWithTwo) {
  expect_diagnostic(run({}), 2);
  expect_diagnostic(run({"frobnicate"}), 2);
  expect_diagnostic(run({"nu", "--scheme", "xyz", "--d1", "1", "--d2", "2"}), 2);
  expect_diagnostic(run({"nu", "--scheme", "otm", "--d1", "10", "--d2", "20", "--K", "3"}), 2);
}

TEST(Cli, MalformedConfigExitsWithTwo) {
  const auto dir = testutil::tmp_dir("cli_bad_config");
  expect_diagnostic(run({"simulate", write_file(dir + "/c.json", "{not json")}), 2);
  expect_diagnostic(run({"simulate", write_file(dir + "/d.json", R"({"eta": 4})")}), 2);
  expect_diagnostic(run({"simulate", dir + "/missing.json"}), 2);
}

TEST(Cli, MalformedBatchExitsWithFour) {
  const auto dir = testutil::tmp_dir("cli_bad_batch");
  const auto cfg = write_file(dir + "/c.json", R"({"r": 1, "m": 2})");
  const auto batch = write_file(dir + "/b.jsonl", "{\"d1\": 2}\n");
  expect_diagnostic(run({"infer", batch, cfg, "--q", "entry:0,0"}), 4);
  expect_diagnostic(run({"estimate", dir + "/nope.jsonl", cfg}), 4);
}

TEST(Cli, NumericalFailureExitsWithThree) {
  const auto dir = testutil::tmp_dir("cli_numerical");
  ObservationBatch b;
  b.scheme = OneToOne{};
  b.d1 = 2;
  b.d2 = 3;
  for (int t = 0; t < 8; ++t) b.records.push_back({Matching(2, 3, {{0, t % 3}, {1, (t + 1) % 3}}), {0.0, 0.0}});
  write_batch_file(dir + "/zero.jsonl", b);
  const auto cfg = write_file(dir + "/c.json", R"({"r": 1, "m": 2})");
  const auto r = run({"infer", dir + "/zero.jsonl", cfg, "--q", "entry:0,0"});
  expect_diagnostic(r, 3);
  EXPECT_EQ(json::parse(r.err).at("error"), "degenerate_init");
}

TEST(Cli, SampleThenInferNoiseless) {
  const auto dir = testutil::tmp_dir("cli_noiseless");
  const auto cfg = write_file(dir + "/c.json", R"({"d1": 20, "d2": 40, "r": 2, "T": 20000, "m": 20,
      "eta": 0.9, "sigma": 0.0, "seed": 5, "outputs": ")" + dir + R"("})");
  const auto s = run({"sample", cfg});
  ASSERT_EQ(s.code, 0) << s.err;
  const Matrix M = read_matrix_csv(dir + "/M.csv");
  const auto r = run({"infer", dir + "/batch.jsonl", cfg, "--q", "entry:0,0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("point").get<double>(), M(0, 0), 1e-5);
  EXPECT_EQ(j.at("provenance").at("seed"), 5);
  EXPECT_EQ(j.at("provenance").at("scheme").at("type"), "oto");
  EXPECT_EQ(j.at("provenance").at("T"), 20000);
  EXPECT_NEAR(j.at("provenance").at("nu").get<double>(), 1.0 / 40, 1e-18);
}

TEST(Cli, EstimatePolicyAndInferOnNoisyBatch) {
  const auto dir = testutil::tmp_dir("cli_noisy");
  const auto cfg = write_file(dir + "/c.json", R"({"d1": 10, "d2": 30, "r": 2, "T": 400, "m": 4,
      "scheme": {"type": "otm", "K": 2, "p0": 0.8}, "seed": 9, "outputs": ")" + dir + R"("})");
  ASSERT_EQ(run({"sample", cfg}).code, 0);
  const auto e = run({"estimate", dir + "/batch.jsonl", cfg, "--truth", dir + "/M.csv"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(read_matrix_csv(dir + "/M_init.csv").rows(), 10);
  EXPECT_EQ(read_matrix_rank(dir + "/M_init.csv"), 2);
  EXPECT_TRUE(std::filesystem::exists(dir + "/trace.csv"));

  const auto p = run({"policy", dir + "/batch.jsonl", cfg});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto pj = json::parse(p.out);
  const Matching m = matching_from_json(pj.at("matching"));
  EXPECT_EQ(capacity_violation(m, OneToOne{}), "");
  EXPECT_EQ(pj.at("total_reward_estimate"), pj.at("inference").at("point"));

  write_file(dir + "/q.json", matching_to_json(m).dump());
  const auto i = run({"infer", dir + "/batch.jsonl", cfg, "--q", dir + "/q.json", "--direction", "greater",
                      "--v0", "1.5"});
  ASSERT_EQ(i.code, 0) << i.err;
  const auto ij = json::parse(i.out);
  EXPECT_EQ(ij.at("point"), pj.at("inference").at("point"));
  EXPECT_EQ(ij.at("direction"), "greater");
  EXPECT_EQ(ij.at("v0"), 1.5);
  EXPECT_LE(ij.at("ci_low").get<double>(), ij.at("ci_high").get<double>());
  const double p_value = ij.at("p_value").get<double>();
  std::vector<double> expected;
  for (double level : {0.10, 0.05, 0.01})
    if (p_value <= level) expected.push_back(level);
  EXPECT_EQ(ij.at("reject_at").get<std::vector<double>>(), expected);
}

TEST(Cli, SimulateWritesOutputs) {
  const auto dir = testutil::tmp_dir("cli_simulate");
  const auto cfg = write_file(dir + "/c.json", R"({"d1": 8, "d2": 24, "r": 1, "T": 200, "m": 4,
      "replications": 3, "q": ["entry:0,0", "oto_difference"]})");
  const auto r = run({"simulate", cfg, "--out", dir + "/out"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("per_q").size(), 2u);
  for (const char* f : {"summary.json", "standardized_stats.csv", "coverage.csv", "histogram.csv", "trace_rep0.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir + "/out/" + f)) << f;
}
