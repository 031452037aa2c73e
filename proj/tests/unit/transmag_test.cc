#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "instavo/transmag.h"
#include "test_support.h"

namespace instavo {
namespace {

using testing::RandomUnit;

const CameraModel kCam = CameraModel::Spherical(200.0, 640, 480);

std::vector<DepthFeature> Features(const Rotation& r, const Vec3& t, int n, std::mt19937_64& rng,
                                   double depth_scale = 1.0) {
  std::vector<double> depths;
  const auto pairs = testing::NoiselessPairs(r, t, n, rng, &depths);
  std::vector<DepthFeature> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.push_back({pairs[i].f, pairs[i].f_prime, depths[i] * depth_scale, 1.0});
  }
  return out;
}

TEST(RobustCost, HuberShape) {
  const RobustCost huber;
  EXPECT_DOUBLE_EQ(huber.Rho(1.0), 1.0);
  EXPECT_DOUBLE_EQ(huber.Rho(4.0), 4.0);
  EXPECT_DOUBLE_EQ(huber.Rho(16.0), 2.0 * 2.0 * 4.0 - 4.0);
  EXPECT_DOUBLE_EQ(huber.ResidualScale(1.0), 1.0);
  EXPECT_NEAR(huber.ResidualScale(16.0) * huber.ResidualScale(16.0) * 16.0, huber.Rho(16.0),
              1e-12);
}

TEST(MagnitudeInitialGuess, Cases) {
  const UnitDirection u = UnitDirection::FromVector(Vec3(0.3, 0.1, 1.0));
  const UnitDirection near = UnitDirection::FromVector(Vec3(0.31, 0.1, 1.0));
  EXPECT_EQ(MagnitudeInitialGuess(0.3, u, near, true), 0.0);
  EXPECT_DOUBLE_EQ(MagnitudeInitialGuess(0.3, u, near, false), 0.3);
  EXPECT_DOUBLE_EQ(MagnitudeInitialGuess(0.3, u, near.Flipped(), false), -0.3);
}

TEST(EstimateMagnitude, RecoversExactMagnitude) {
  std::mt19937_64 rng(31);
  const Rotation r = So3Exp(Vec3(0.05, -0.1, 0.02));
  const Vec3 u = RandomUnit(rng);
  const auto features = Features(r, u * 0.4, 80, rng);
  const MagnitudeResult res = EstimateMagnitude(features, r, UnitDirection::FromVector(u), 0.0,
                                                kCam, RobustCost{}, LMConfig{});
  EXPECT_EQ(res.status, MagnitudeStatus::kConverged);
  EXPECT_NEAR(res.s, 0.4, 1e-6);
  EXPECT_LT(res.median_reproj_px, 1e-6);
  for (bool o : res.outlier_mask) EXPECT_FALSE(o);
}

TEST(EstimateMagnitude, ZeroBaselineWithFarPoints) {
  std::mt19937_64 rng(32);
  const Rotation r = So3Exp(Vec3(0.05, -0.1, 0.02));
  auto features = Features(r, Vec3::Zero(), 80, rng);
  for (DepthFeature& f : features) f.depth *= 20.0;
  const MagnitudeResult res =
      EstimateMagnitude(features, r, UnitDirection::FromVector(RandomUnit(rng)), 0.2, kCam,
                        RobustCost{}, LMConfig{});
  EXPECT_LT(std::abs(res.s), 0.01);
}

TEST(EstimateMagnitude, ScaleFollowsAssumedDepth) {
  std::mt19937_64 rng(33);
  const Rotation r = So3Exp(Vec3(0.0, 0.1, 0.0));
  const Vec3 u = Vec3(1.0, 0.2, 0.1).normalized();
  // Every landmark at range 4 along its bearing.
  std::vector<DepthFeature> features;
  for (int i = 0; i < 60; ++i) {
    const Vec3 f = (Vec3(0, 0, 1) + 0.4 * RandomUnit(rng)).normalized();
    const Vec3 p = 4.0 * f;
    features.push_back({Bearing::FromVector(f), Bearing::FromVector(r * p + u * 0.5), 1.0, 1.0});
  }
  const MagnitudeResult res = EstimateMagnitude(features, r, UnitDirection::FromVector(u), 0.0,
                                                kCam, RobustCost{}, LMConfig{});
  EXPECT_NEAR(res.s, 0.5 / 4.0, 1e-6);
}

TEST(EstimateMagnitude, EmptyIsTooFewFeatures) {
  const MagnitudeResult res =
      EstimateMagnitude({}, Rotation(), UnitDirection(), 0.0, kCam, RobustCost{}, LMConfig{});
  EXPECT_EQ(res.status, MagnitudeStatus::kTooFewFeatures);
}

TEST(MagnitudeOutliers, ThresholdAtOneAndAHalfPixels) {
  const Vec3 p(0.0, 0.0, 2.0);
  const Bearing f = Bearing::FromVector(p);
  const Bearing exact = Bearing::FromVector(p);
  // 2 px off on the tangent plane at the optical axis.
  const Bearing off = Bearing::FromVector(Vec3(2.0 / 200.0, 0.0, 1.0));
  const std::vector<DepthFeature> features = {{f, exact, 2.0, 1.0}, {f, off, 2.0, 1.0}};
  const std::vector<bool> mask =
      MagnitudeOutliers(features, Rotation(), UnitDirection(), 0.0, kCam, kMagnitudeOutlierPx);
  ASSERT_EQ(mask.size(), 2u);
  EXPECT_FALSE(mask[0]);
  EXPECT_TRUE(mask[1]);
  EXPECT_TRUE(MagnitudeOutliers({}, Rotation(), UnitDirection(), 0.0, kCam, 1.5).empty());
}

TEST(ReprojectionErrors, InfiniteWhenBehindCamera) {
  const std::vector<DepthFeature> features = {
      {Bearing::FromVector(Vec3::UnitZ()), Bearing::FromVector(Vec3::UnitZ()), 1.0, 1.0}};
  const auto errors = ReprojectionErrorsPx(features, Rotation(), Vec3(0, 0, -5), kCam);
  EXPECT_TRUE(std::isinf(errors[0]));
}

}  // namespace
}  // namespace instavo
