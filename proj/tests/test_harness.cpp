#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/harness.hpp"
#include "matchlearn/io.hpp"
#include "matchlearn/normal.hpp"
#include "matchlearn/policy.hpp"
#include "test_util.hpp"

using namespace matchlearn;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig c;
  c.d1 = 10;
  c.d2 = 30;
  c.r = 2;
  c.T = 200;
  c.m = 4;
  c.replications = 12;
  c.seed = 77;
  c.q = {parse_q_spec("entry:0,0"), parse_q_spec("random_oto")};
  return c;
}

}  // namespace

TEST(QSpec, ParsesEveryForm) {
  auto e = parse_q_spec("entry:3,4");
  EXPECT_EQ(e.kind, QSpec::Kind::entry);
  EXPECT_EQ(e.i, 3);
  EXPECT_EQ(e.j, 4);
  EXPECT_EQ(parse_q_spec("random_oto").kind, QSpec::Kind::random_oto);
  EXPECT_EQ(parse_q_spec("oto_difference").kind, QSpec::Kind::oto_difference);
  const auto otm = parse_q_spec("random_otm:3,0.8");
  EXPECT_EQ(otm.K, 3);
  EXPECT_DOUBLE_EQ(otm.p0, 0.8);
  EXPECT_EQ(parse_q_spec("random_otm").K, 0);
  EXPECT_EQ(parse_q_spec("optimal").kind, QSpec::Kind::optimal);
  EXPECT_EQ(parse_q_spec("file:/tmp/q.json").path, "/tmp/q.json");
  for (const char* s : {"entry:3,4", "random_oto", "oto_difference", "random_otm:3,0.8", "random_otm",
                        "optimal", "file:q.json"})
    EXPECT_EQ(parse_q_spec(s).label(), s);
  EXPECT_EQ(parse_q_spec("random_otm:3,0.1").label(), "random_otm:3,0.1");
}

TEST(QSpec, RejectsMalformed) {
  for (const char* s : {"entry", "entry:1", "entry:a,b", "entry:1,2x", "random_oto:1", "bogus", "file:"})
    EXPECT_THROW(parse_q_spec(s), ArgumentError) << s;
}

TEST(MaterializeQ, ShapesOfEachKind) {
  Rng rng(1);
  const int d1 = 6, d2 = 18;
  EXPECT_EQ(materialize_q(parse_q_spec("entry:2,5"), d1, d2, OneToOne{}, rng),
            LinearForm::single_entry(d1, d2, 2, 5));
  const auto oto = materialize_q(parse_q_spec("random_oto"), d1, d2, OneToOne{}, rng);
  EXPECT_EQ(oto.l1_norm(), d1);
  const auto diff = materialize_q(parse_q_spec("oto_difference"), d1, d2, OneToOne{}, rng);
  double total = 0.0;
  for (const auto& e : diff.entries()) total += e.w;
  EXPECT_EQ(total, 0.0);
  EXPECT_LE(diff.nnz(), 2u * d1);
  const auto otm = materialize_q(parse_q_spec("random_otm"), d1, d2, OneToMany{3, 0.8}, rng);
  EXPECT_LE(otm.l1_norm(), 3.0 * d1);
  EXPECT_THROW(materialize_q(parse_q_spec("random_otm"), d1, d2, OneToOne{}, rng), ArgumentError);
  EXPECT_THROW(materialize_q(parse_q_spec("optimal"), d1, d2, OneToOne{}, rng), ArgumentError);
  const Matrix ref = Matrix::Identity(d1, d2);
  EXPECT_EQ(materialize_q(parse_q_spec("optimal"), d1, d2, OneToOne{}, rng, &ref),
            matching_to_linear_form(optimal_one_to_one(ref)));
}

TEST(MaterializeQ, ReadsMatchingAndLinearFormFiles) {
  const auto dir = testutil::tmp_dir("qfiles");
  const Matching m(2, 3, {{0, 1}, {1, 2}});
  std::ofstream(dir + "/m.json") << matching_to_json(m).dump();
  const auto Q = LinearForm::from_triplets(2, 3, {{0, 0, 2.0}});
  std::ofstream(dir + "/q.json") << linear_form_to_json(Q);
  Rng rng(2);
  EXPECT_EQ(materialize_q(parse_q_spec("file:" + dir + "/m.json"), 2, 3, OneToOne{}, rng),
            matching_to_linear_form(m));
  EXPECT_EQ(materialize_q(parse_q_spec("file:" + dir + "/q.json"), 2, 3, OneToOne{}, rng), Q);
  EXPECT_THROW(materialize_q(parse_q_spec("file:" + dir + "/m.json"), 3, 3, OneToOne{}, rng), DataFormatError);
  EXPECT_THROW(materialize_q(parse_q_spec("file:" + dir + "/none.json"), 2, 3, OneToOne{}, rng), DataFormatError);
}

TEST(RunConfigJson, DefaultsAndRoundTrip) {
  const RunConfig d = parse_run_config(json::object());
  EXPECT_EQ(d, RunConfig{});
  RunConfig c = small_config();
  c.scheme = TwoSided{0.7, 0.75, 0.3, 0.3, 0.25};
  c.regenerate_matrix = true;
  const json canon = run_config_to_json(c);
  EXPECT_EQ(parse_run_config(canon), c);
  EXPECT_EQ(run_config_to_json(parse_run_config(canon)).dump(), canon.dump());
}

TEST(RunConfigJson, TheoryPresetForM) {
  const auto c = parse_run_config(json{{"d2", 150}, {"m", "theory"}});
  EXPECT_EQ(c.m, static_cast<int>(std::ceil(std::log(150.0))));
  EXPECT_THROW(parse_run_config(json{{"m", "lots"}}), ArgumentError);
}

TEST(RunConfigJson, AggregatesEveryProblem) {
  const json bad{{"d1", 10}, {"d2", 5}, {"eta", 1.5}, {"alpha", 0.0}, {"q", "entry:x"}, {"mode", "other"},
                {"replicatons", 5}};
  try {
    parse_run_config(bad);
    FAIL();
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    EXPECT_EQ(e.code(), "config");
    for (const char* part : {"dims", "eta", "alpha", "q spec", "mode", "unknown field 'replicatons'"})
      EXPECT_NE(msg.find(part), std::string::npos) << part << " missing from: " << msg;
  }
  EXPECT_THROW(parse_run_config(json{{"d1", "ten"}}), ArgumentError);
  EXPECT_THROW(parse_run_config(json{{"scheme", {{"type", "otm"}, {"K", 5}, {"p0", 0.5}}}, {"d1", 50}, {"d2", 100}}),
               ArgumentError);
  EXPECT_THROW(parse_run_config(json{{"q", "entry:60,0"}}), ArgumentError);
  EXPECT_THROW(parse_run_config(json::array()), ArgumentError);
}

TEST(KsStatistic, QuantileGridIsNearlyPerfect) {
  const int n = 1000;
  std::vector<double> x;
  for (int k = 1; k <= n; ++k) x.push_back(normal_quantile((k - 0.5) / n));
  EXPECT_LE(ks_statistic(x), 0.0005 + 0.5 / n);
}

TEST(KsStatistic, DegenerateAndUniformSamples) {
  EXPECT_NEAR(ks_statistic(std::vector<double>(100, 0.0)), 0.5, 1e-15);
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(1000);
  for (auto& v : x) v = u(rng);
  EXPECT_GE(ks_statistic(x), 0.3);
  EXPECT_THROW(ks_statistic(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(ks_statistic(std::vector<double>{1.0, INFINITY}), ArgumentError);
}

TEST(CoverageRate, Basics) {
  EXPECT_EQ(coverage_rate(std::vector<Interval>(5, {2.0, 2.0}), 2.0), 1.0);
  EXPECT_EQ(coverage_rate(std::vector<Interval>(5, {3.0, 4.0}), 2.0), 0.0);
  EXPECT_EQ(coverage_rate(std::vector<Interval>{{0, 1}, {2, 3}}, 1.0), 0.5);
  EXPECT_THROW(coverage_rate(std::vector<Interval>{}, 0.0), ArgumentError);
}

TEST(Histogram, BinsHalfOpenRange) {
  const auto h = histogram(std::vector<double>{-4.0, -3.9, 0.0, 3.99, 4.0, 10.0}, 8, -4.0, 4.0);
  ASSERT_EQ(h.size(), 8u);
  EXPECT_EQ(h[0], 2);
  EXPECT_EQ(h[4], 1);
  EXPECT_EQ(h[7], 1);
  int total = 0;
  for (int c : h) total += c;
  EXPECT_EQ(total, 4);
}

TEST(ResolveWorkers, EnvironmentOverrides) {
  ::setenv("MATCHLEARN_WORKERS", "3", 1);
  EXPECT_EQ(resolve_workers(0), 3);
  EXPECT_EQ(resolve_workers(5), 3);
  ::unsetenv("MATCHLEARN_WORKERS");
  EXPECT_EQ(resolve_workers(5), 5);
  EXPECT_GE(resolve_workers(0), 1);
}

TEST(RunSimulation, ZeroReplicationsIsEmpty) {
  RunConfig c = small_config();
  c.replications = 0;
  const auto s = run_simulation(c);
  EXPECT_TRUE(s.completed.empty());
  EXPECT_TRUE(s.failures.empty());
  EXPECT_EQ(s.per_q.size(), 2u);
  EXPECT_TRUE(s.per_q[0].standardized_stats.empty());
}

TEST(RunSimulation, ReplicationRecordsLineUp) {
  const auto s = run_simulation(small_config());
  EXPECT_EQ(s.completed.size() + s.failures.size(), 12u);
  ASSERT_EQ(s.per_q.size(), 2u);
  for (const auto& q : s.per_q) {
    EXPECT_EQ(q.standardized_stats.size(), s.completed.size());
    EXPECT_EQ(q.intervals.size(), s.completed.size());
    EXPECT_GE(q.coverage, 0.0);
    EXPECT_LE(q.coverage, 1.0);
    for (std::size_t k = 0; k < q.points.size(); ++k)
      EXPECT_NEAR(q.standardized_stats[k], (q.points[k] - q.truths[k]) / q.ses[k], 1e-12);
  }
  EXPECT_EQ(s.traces.size(), s.completed.size());
  EXPECT_DOUBLE_EQ(s.nu, 1.0 / 30);
}

TEST(RunSimulation, WorkerCountDoesNotChangeResults) {
  RunConfig a = small_config(), b = small_config();
  a.workers = 1;
  b.workers = 3;
  const auto sa = run_simulation(a), sb = run_simulation(b);
  EXPECT_EQ(sa.completed, sb.completed);
  for (std::size_t k = 0; k < sa.per_q.size(); ++k) {
    EXPECT_EQ(sa.per_q[k].standardized_stats, sb.per_q[k].standardized_stats);
    EXPECT_EQ(sa.per_q[k].ks_distance, sb.per_q[k].ks_distance);
  }
}

TEST(RunSimulation, SameSeedGivesByteIdenticalOutputs) {
  const auto d1 = testutil::tmp_dir("sim_a"), d2 = testutil::tmp_dir("sim_b");
  RunConfig c = small_config();
  c.scheme = TwoSided{};
  c.q = {parse_q_spec("oto_difference")};
  write_outputs(c, run_simulation(c), d1);
  write_outputs(c, run_simulation(c), d2);
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(d1)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(std::filesystem::path(d2) / entry.path().filename()))
        << entry.path().filename();
  }
  EXPECT_GE(files, 5);
}

TEST(RunSimulation, OutputFilesHaveExpectedShape) {
  const auto dir = testutil::tmp_dir("sim_shape");
  RunConfig c = small_config();
  c.replications = 4;
  const auto s = run_simulation(c);
  write_outputs(c, s, dir);
  const auto summary = json::parse(slurp(dir + "/summary.json"));
  EXPECT_EQ(summary.at("replications_completed"), s.completed.size());
  EXPECT_EQ(summary.at("per_q").size(), 2u);
  EXPECT_EQ(summary.at("config"), run_config_to_json(c));
  std::ifstream hist(dir + "/histogram.csv");
  int lines = 0;
  for (std::string line; std::getline(hist, line);) ++lines;
  EXPECT_EQ(lines, 1 + 2 * 50);
  for (int rep : s.completed)
    EXPECT_TRUE(std::filesystem::exists(dir + "/trace_rep" + std::to_string(rep) + ".csv"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/coverage.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/standardized_stats.csv"));
  const std::string trace = slurp(dir + "/trace_rep0.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "batch,rel_max_err_sq,g_sigma_min,g_sigma_max,grad_norm");

  std::istringstream cov(slurp(dir + "/coverage.csv"));
  std::string header, first, second;
  std::getline(cov, header);
  std::getline(cov, first);
  std::getline(cov, second);
  EXPECT_EQ(header, "q,n,coverage,alpha");
  std::ostringstream want;
  want << "\"entry:0,0\"," << s.completed.size() << ',' << format_double(s.per_q[0].coverage) << ",0.05";
  EXPECT_EQ(first, want.str());
  EXPECT_EQ(second.rfind("random_oto,", 0), 0u);
}

TEST(RunSimulation, EstimateModeKeepsTracesOnly) {
  RunConfig c = small_config();
  c.mode = "estimate";
  c.replications = 3;
  const auto s = run_simulation(c);
  EXPECT_TRUE(s.per_q.empty());
  ASSERT_EQ(s.traces.size(), 3u);
  EXPECT_EQ(s.traces[0].rows.size(), 4u);
  EXPECT_TRUE(std::isfinite(s.traces[0].rows.back().rel_max_err_sq));
}

TEST(RunSimulation, PolicyModeCountsRecovery) {
  RunConfig c = small_config();
  c.q = {parse_q_spec("optimal")};
  c.replications = 4;
  c.T = 1000;
  const auto s = run_simulation(c);
  EXPECT_TRUE(s.policy_mode);
  EXPECT_GE(s.recovery_count, 0);
  EXPECT_LE(s.recovery_count, 4);
}

TEST(RunSimulation, TooManyFailuresIsARunLevelError) {
  RunConfig c;
  c.d1 = 3;
  c.d2 = 3;
  c.r = 3;
  c.T = 4;
  c.m = 1;
  c.replications = 5;
  try {
    run_simulation(c);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.code(), "too_many_failures");
  }
}
