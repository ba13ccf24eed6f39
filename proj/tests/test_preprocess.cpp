#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uwbpose/preprocess.hpp"

using namespace uwbpose;

namespace {

const RejectionParams kParams{5, 0.5, 0.1};

// Anchors with ids, one tag at the body origin plus one offset tag.
std::shared_ptr<const Deployment> bench_deployment() {
  return std::make_shared<const Deployment>(
      std::vector<Vec2>{{0, 0}, {8, 0}, {8, 5}, {0, 5}}, std::vector<Vec2>{{0.3, 0}, {-0.3, 0.2}},
      Eigen::MatrixXd::Constant(2, 4, 0.05), Eigen::MatrixXd{},
      std::vector<std::string>{"a1", "a2", "a3", "a4"}, std::vector<std::string>{"t1", "t2"});
}

Pose2 moving_pose(double t) {
  return Pose2(0.3 * t, Vec2(4 + 2 * std::cos(0.2 * t), 2.5 + 1.5 * std::sin(0.3 * t)));
}

GroundTruthLog truth_log(double duration, double rate) {
  std::vector<GroundTruthRecord> recs;
  for (int k = 0; k <= static_cast<int>(duration * rate); ++k) {
    const double t = k / rate;
    recs.push_back({t, moving_pose(t)});
  }
  return GroundTruthLog(std::move(recs));
}

// Ranges from the interpolated truth so calibration sees exactly the injected map.
RangeLog biased_log(const Deployment& dep, const GroundTruthLog& truth, double duration,
                    double slope, double intercept, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  RangeLog log;
  log.frequency = 100;
  for (int k = 0; k <= static_cast<int>(duration * 100); ++k) {
    const double t = k / 100.0;
    const Pose2 pose = *truth.interpolate(t);
    for (std::size_t i = 0; i < dep.tag_count(); ++i) {
      for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
        const double g = predicted_range(dep, pose, i, m);
        log.records.push_back({t, dep.anchor_ids()[m], dep.tag_ids()[i],
                               (1 + slope) * g + intercept + noise * z(rng)});
      }
    }
  }
  return log;
}

}  // namespace

TEST(FlagOutliers, SingleSpikeOnConstantStream) {
  std::vector<double> d(50, 0.0);
  d[20] = 1.0;
  const auto flags = flag_outliers(d, kParams, 100);
  for (std::size_t t = 0; t < d.size(); ++t) EXPECT_EQ(flags[t], t == 20) << t;
}

TEST(FlagOutliers, MaximalSpeedRampNotFlagged) {
  std::vector<double> d;
  for (int t = 0; t < 1000; ++t) d.push_back(0.5 / 100 * t);
  for (bool f : flag_outliers(d, kParams, 100)) EXPECT_FALSE(f);
}

TEST(FlagOutliers, FirstWindowNeverFlagged) {
  std::vector<double> d{0, 9, 9, 9, 9, 9, 9};
  const auto flags = flag_outliers(d, kParams, 100);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_FALSE(flags[t]);
  EXPECT_TRUE(flags[5]);
}

TEST(FlagOutliers, RandomWalkWithSpikesMatchesDirectInequality) {
  std::mt19937_64 rng(81);
  std::normal_distribution<double> step(0.0, 0.003);
  std::bernoulli_distribution spike(0.02);
  std::vector<double> d{5.0};
  for (int t = 1; t < 20000; ++t) d.push_back(d.back() + step(rng));
  for (auto& v : d) {
    if (spike(rng)) v += 0.5;
  }
  EXPECT_EQ(flag_outliers(d, kParams, 100), oracle::outlier_flags(d, 5, 0.5, 100, 0.1));
}

TEST(FlagOutliers, Causal) {
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> d;
  for (int t = 0; t < 300; ++t) d.push_back(u(rng));
  const auto before = flag_outliers(d, kParams, 100);
  for (std::size_t t = 150; t < d.size(); ++t) d[t] = 100 * u(rng);
  const auto after = flag_outliers(d, kParams, 100);
  for (std::size_t t = 0; t < 150; ++t) EXPECT_EQ(before[t], after[t]);
}

TEST(FlagOutliers, RejectsBadParameters) {
  std::vector<double> d(10, 1.0);
  EXPECT_THROW(flag_outliers(d, {0, 0.5, 0.1}, 100), Error);
  EXPECT_THROW(flag_outliers(d, {5, 0.0, 0.1}, 100), Error);
  EXPECT_THROW(flag_outliers(d, kParams, 0), Error);
}

TEST(FillFlagged, LinearBetweenNeighboursAndHeldAtEnds) {
  const std::vector<double> t{0, 1, 2, 3, 4, 5};
  const std::vector<double> v{1, 2, 99, 99, 5, 99};
  const std::vector<bool> f{false, false, true, true, false, true};
  const auto out = fill_flagged(t, v, f);
  EXPECT_DOUBLE_EQ(out[2], 3.0);
  EXPECT_DOUBLE_EQ(out[3], 4.0);
  EXPECT_DOUBLE_EQ(out[5], 5.0);
  EXPECT_DOUBLE_EQ(out[0], 1.0);
}

TEST(RejectOutliers, PerStreamInLogOrder) {
  RangeLog log;
  log.frequency = 100;
  for (int k = 0; k < 40; ++k) {
    log.records.push_back({k / 100.0, "a1", "t1", k == 30 ? 4.0 : 2.0});
    log.records.push_back({k / 100.0, "a2", "t1", 3.0});
  }
  const auto res = reject_outliers(log, kParams);
  for (std::size_t j = 0; j < log.records.size(); ++j) {
    const bool is_spike = log.records[j].anchor == "a1" && log.records[j].range == 4.0;
    EXPECT_EQ(res.rejected[j], is_spike);
    if (is_spike) EXPECT_DOUBLE_EQ(res.log.records[j].range, 2.0);
  }
}

TEST(SplitStreams, DecreasingTimestampsRejected) {
  RangeLog log;
  log.records = {{0.1, "a", "t", 1}, {0.05, "a", "t", 1}};
  EXPECT_THROW(split_streams(log), Error);
}

TEST(LinearBias, DebiasRebiasIdentity) {
  const LinearBias b{0.02, 0.05};
  for (double d : {0.0, 0.3, 7.5, 120.0}) {
    EXPECT_NEAR(b.rebias(b.debias(d)), d, 1e-12);
    EXPECT_NEAR(b.debias(b.rebias(d)), d, 1e-12);
  }
}

TEST(GroundTruth, InterpolatesOnShortestArc) {
  const GroundTruthLog log({{0.0, Pose2(6.2, Vec2(0, 0))}, {1.0, Pose2(0.1, Vec2(2, 4))}});
  const auto mid = log.interpolate(0.5);
  ASSERT_TRUE(mid);
  const double expected = std::fmod(6.2 + 0.5 * (0.1 + 2 * std::numbers::pi - 6.2), 2 * std::numbers::pi);
  EXPECT_NEAR(mid->theta(), expected, 1e-12);
  EXPECT_LT((mid->t() - Vec2(1, 2)).norm(), 1e-15);
  EXPECT_FALSE(log.interpolate(1.5));
  EXPECT_THROW(GroundTruthLog({{1.0, Pose2()}, {1.0, Pose2()}}), Error);
}

TEST(CalibrateBias, NoiselessRecoveryExact) {
  const auto dep = bench_deployment();
  const auto truth = truth_log(20, 50);
  std::mt19937_64 rng(83);
  const auto log = biased_log(*dep, truth, 20, 0.02, 0.05, 0.0, rng);
  const BiasModel model = calibrate_bias(log, truth, *dep);
  EXPECT_NEAR(model.pooled.slope, 0.02, 1e-9);
  EXPECT_NEAR(model.pooled.intercept, 0.05, 1e-9);
  EXPECT_EQ(model.sigma, kMinSigma);
  const BiasModel per = calibrate_bias(log, truth, *dep, BiasGranularity::per_pair);
  ASSERT_EQ(per.per_pair.size(), 8u);
  for (const auto& [key, b] : per.per_pair) {
    EXPECT_NEAR(b.slope, 0.02, 1e-9);
    EXPECT_NEAR(b.intercept, 0.05, 1e-9);
  }
}

TEST(CalibrateBias, NoisyRecoveryWithinThreeStandardErrors) {
  const auto dep = bench_deployment();
  const auto truth = truth_log(20, 50);
  std::mt19937_64 rng(84);
  RangeLog log = biased_log(*dep, truth, 20, 0.02, 0.05, 0.05, rng);
  log.records.resize(10000);
  const BiasModel model = calibrate_bias(log, truth, *dep);
  EXPECT_EQ(model.samples, 10000u);
  EXPECT_LT(std::abs(model.pooled.slope - 0.02), 3 * model.slope_stderr);
  EXPECT_LT(std::abs(model.pooled.intercept - 0.05), 3 * model.intercept_stderr);
  EXPECT_NEAR(model.sigma, 0.05, 0.005);
}

TEST(CalibrateBias, DisjointTimeRangesRejected) {
  const auto dep = bench_deployment();
  const auto truth = truth_log(5, 50);
  std::mt19937_64 rng(85);
  RangeLog log = biased_log(*dep, truth, 5, 0.0, 0.0, 0.0, rng);
  for (auto& r : log.records) r.t += 100.0;
  try {
    calibrate_bias(log, truth, *dep);
    FAIL() << "expected insufficient data";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_data);
  }
}

TEST(CalibrateBias, UnknownIdsAreSchemaErrors) {
  const auto dep = bench_deployment();
  const auto truth = truth_log(5, 50);
  RangeLog log;
  log.records.push_back({1.0, "zz", "t1", 3.0});
  EXPECT_THROW(calibrate_bias(log, truth, *dep), Error);
}

TEST(EstimateSigma, ConstantTwoStreamsAndConcentration) {
  RangeLog flat;
  for (int k = 0; k < 50; ++k) flat.records.push_back({k / 100.0, "a", "t", 2.0});
  EXPECT_EQ(estimate_sigma(flat, 0, 1).pooled, 0.0);

  std::mt19937_64 rng(86);
  std::normal_distribution<double> z;
  RangeLog big;
  for (int k = 0; k < 100000; ++k) big.records.push_back({k / 100.0, "a", "t", 5 + 0.03 * z(rng)});
  EXPECT_NEAR(estimate_sigma(big, 0, 1e9).pooled, 0.03, 0.02 * 0.03);

  // Two streams with exact sample deviations 0.03 and 0.04.
  RangeLog two;
  for (int k = 0; k < 40; ++k) {
    const double sign = k % 2 ? 1.0 : -1.0;
    two.records.push_back({k / 100.0, "a", "t", 1 + sign * 0.03 * std::sqrt(39.0 / 40.0)});
    two.records.push_back({k / 100.0, "b", "t", 1 + sign * 0.04 * std::sqrt(39.0 / 40.0)});
  }
  const auto est = estimate_sigma(two, 0, 1);
  EXPECT_NEAR(est.per_stream.at({"a", "t"}), 0.03, 1e-12);
  EXPECT_NEAR(est.pooled, std::sqrt((0.03 * 0.03 + 0.04 * 0.04) / 2), 1e-12);

  RangeLog few;
  for (int k = 0; k < 10; ++k) few.records.push_back({k / 100.0, "a", "t", 2.0});
  EXPECT_THROW(estimate_sigma(few, 0, 1), Error);
}

TEST(AlignAndBatch, SynchronousIdentityPassesRangesThrough) {
  const auto dep = bench_deployment();
  RangeLog log;
  for (int k = 0; k < 10; ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t m = 0; m < 4; ++m) {
        log.records.push_back({k / 100.0, dep->anchor_ids()[m], dep->tag_ids()[i],
                               1.0 + k + 0.1 * static_cast<double>(i * 4 + m)});
      }
    }
  }
  const auto epochs = align_and_batch(log, BiasModel::identity(), dep);
  ASSERT_EQ(epochs.size(), 10u);
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    EXPECT_EQ(epochs[k].batch.size(), 8u);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t m = 0; m < 4; ++m) {
        EXPECT_EQ(epochs[k].batch.range(i, m, 0), 1.0 + static_cast<double>(k) + 0.1 * static_cast<double>(i * 4 + m));
      }
    }
  }
}

TEST(AlignAndBatch, BiasInvertedExactly) {
  const auto dep = bench_deployment();
  const LinearBias b{0.02, 0.05};
  BiasModel model = BiasModel::identity();
  model.pooled = b;
  RangeLog log;
  for (int k = 0; k < 5; ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t m = 0; m < 4; ++m) {
        log.records.push_back({k / 100.0, dep->anchor_ids()[m], dep->tag_ids()[i],
                               b.rebias(3.0 + static_cast<double>(m))});
      }
    }
  }
  for (const auto& e : align_and_batch(log, model, dep)) {
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(e.batch.range(1, m, 0), 3.0 + static_cast<double>(m), 1e-9);
  }
}

TEST(AlignAndBatch, DelayedStreamInterpolatedAndGapsDropped) {
  const auto dep = std::make_shared<const Deployment>(
      std::vector<Vec2>{{0, 0}, {8, 0}, {8, 5}}, std::vector<Vec2>{{0.3, 0}, {-0.3, 0.2}},
      Eigen::MatrixXd::Constant(2, 3, 0.05), Eigen::MatrixXd{},
      std::vector<std::string>{"a1", "a2", "a3"}, std::vector<std::string>{"t1", "t2"});
  RangeLog log;
  for (int k = 0; k <= 40; ++k) {
    const double t = k / 100.0;
    for (const char* tag : {"t1", "t2"}) {
      for (const char* anchor : {"a1", "a2"}) log.records.push_back({t, anchor, tag, 2.0 + t});
      // a3 runs half a period late and misses samples 20..29 for t2.
      const bool gap = std::string(tag) == "t2" && k >= 20 && k < 30;
      if (!gap) log.records.push_back({t + 0.005, "a3", tag, 4.0 + 10 * (t + 0.005) * (t + 0.005)});
    }
  }
  const auto epochs = align_and_batch(log, BiasModel::identity(), dep);
  ASSERT_FALSE(epochs.empty());
  EXPECT_NEAR(epochs.front().t, 0.005, 1e-12);
  for (const auto& e : epochs) {
    const double t = e.t;
    EXPECT_TRUE(t < 0.195 + 1e-9 || t > 0.305 - 1e-9) << t;
    // a1 samples at k/100 bracket t; linear interpolation of 2 + t is exact.
    EXPECT_NEAR(e.batch.range(0, 0, 0), 2.0 + t, 1e-12);
    EXPECT_NEAR(e.batch.range(0, 2, 0), 4.0 + 10 * t * t, 1e-12);
  }
  EXPECT_LT(epochs.size(), 40u);
}
