#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <omp.h>

#include "matchlearn/kernels.hpp"
#include "matchlearn/samplers.hpp"

using namespace matchlearn;
namespace k = matchlearn::kernels;

namespace {

ObservationBatch make_batch(const MatchingScheme& scheme, int d1, int d2, int T, std::uint64_t seed) {
  Rng rng(seed);
  const auto M = generate_low_rank(d1, d2, 2, 10.0, rng);
  return observe(M, scheme, T, 1.0, rng);
}

class ThreadCount : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

}  // namespace

TEST_P(ThreadCount, AccumulateIsBitIdenticalToSerial) {
  const auto batch = make_batch(OneToMany{3, 0.8}, 37, 120, 300, 1);
  const auto a = k::accumulate_serial(batch.records, 37, 120);
  const auto b = k::accumulate(batch.records, 37, 120);
  EXPECT_EQ(a.reward_sum, b.reward_sum);
  EXPECT_EQ(a.count, b.count);
}

TEST_P(ThreadCount, ResidualsAreBitIdenticalToSerial) {
  const auto batch = make_batch(TwoSided{}, 20, 60, 200, 2);
  const Matrix A = Matrix::Random(20, 60);
  const auto a = k::record_mean_sq_residual_serial(batch.records, A);
  const auto b = k::record_mean_sq_residual(batch.records, A);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (std::isnan(a[t])) EXPECT_TRUE(std::isnan(b[t]));
    else EXPECT_EQ(a[t], b[t]);
  }
}

TEST_P(ThreadCount, ResidualSumIsBitIdenticalToSerial) {
  const auto batch = make_batch(OneToOne{}, 23, 70, 250, 3);
  const Matrix A = Matrix::Random(23, 70);
  EXPECT_EQ(k::residual_sum_serial(batch.records, A), k::residual_sum(batch.records, A));
}

TEST_P(ThreadCount, NormalEquationsAgreeWithSerial) {
  const auto batch = make_batch(OneToOne{}, 50, 150, 400, 3);
  const auto sums = k::accumulate_serial(batch.records, 50, 150);
  Rng rng(4);
  const auto M = generate_low_rank(50, 150, 3, 1.0, rng);
  const auto a = k::core_normal_equations_serial(sums, M.U(), M.V());
  const auto b = k::core_normal_equations(sums, M.U(), M.V());
  EXPECT_LE((a.gram - b.gram).cwiseAbs().maxCoeff(), 1e-12 * a.gram.cwiseAbs().maxCoeff());
  EXPECT_LE((a.rhs - b.rhs).cwiseAbs().maxCoeff(), 1e-12 * a.rhs.cwiseAbs().maxCoeff());
}

TEST_P(ThreadCount, NormalEquationsDoNotDependOnThreadCount) {
  const auto batch = make_batch(OneToOne{}, 50, 150, 400, 5);
  const auto sums = k::accumulate(batch.records, 50, 150);
  Rng rng(6);
  const auto M = generate_low_rank(50, 150, 2, 1.0, rng);
  const auto here = k::core_normal_equations(sums, M.U(), M.V());
  omp_set_num_threads(1);
  const auto single = k::core_normal_equations(sums, M.U(), M.V());
  EXPECT_EQ(here.gram, single.gram);
  EXPECT_EQ(here.rhs, single.rhs);
}

INSTANTIATE_TEST_SUITE_P(Threads, ThreadCount, ::testing::Values(1, 2, 3, 4));

TEST(Kernels, AccumulateCountsAndSums) {
  ObservationBatch batch;
  batch.d1 = 2;
  batch.d2 = 3;
  batch.records.push_back({Matching(2, 3, {{0, 1}, {1, 2}}), {1.0, 2.0}});
  batch.records.push_back({Matching(2, 3, {{0, 1}, {1, 0}}), {3.0, 4.0}});
  const auto s = k::accumulate(batch.records, 2, 3);
  EXPECT_EQ(s.count(0, 1), 2.0);
  EXPECT_EQ(s.reward_sum(0, 1), 4.0);
  EXPECT_EQ(s.reward_sum(1, 0), 4.0);
  EXPECT_EQ(s.count(0, 0), 0.0);
}

TEST(Kernels, ResidualSumMatchesHandComputation) {
  std::vector<Observation> recs;
  recs.push_back({Matching(2, 3, {{0, 1}, {1, 2}}), {1.0, 2.0}});
  recs.push_back({Matching(2, 3, {{0, 1}, {1, 0}}), {3.0, 4.0}});
  const Matrix A = Matrix::Constant(2, 3, 0.5);
  const Matrix R = k::residual_sum(recs, A);
  EXPECT_EQ(R(0, 1), 3.0);
  EXPECT_EQ(R(1, 2), 1.5);
  EXPECT_EQ(R(1, 0), 3.5);
  EXPECT_EQ(R(0, 0), 0.0);
}

TEST(Kernels, EmptyRecordResidualIsNaN) {
  std::vector<Observation> recs{{Matching(2, 2, {}), {}}};
  EXPECT_TRUE(std::isnan(k::record_mean_sq_residual(recs, Matrix::Zero(2, 2))[0]));
}

TEST(Kernels, PairwiseSumIsAccurate) {
  std::vector<double> v(100000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + i);
  long double exact = 0.0L;
  for (double x : v) exact += x;
  EXPECT_NEAR(k::pairwise_sum(v), static_cast<double>(exact), 1e-12);
  EXPECT_EQ(k::pairwise_sum({}), 0.0);
}
