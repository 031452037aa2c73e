#include "instavo/transmag.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace instavo {

namespace {

// Normalized error assigned to points that cannot be projected, so the cost
// stays finite while strongly penalizing the configuration.
constexpr double kUnprojectablePenalty = 1e4;

}  // namespace

double RobustCost::Rho(double z) const {
  const double d2 = delta * delta;
  if (z <= d2) return z;
  return 2.0 * delta * std::sqrt(z) - d2;
}

double RobustCost::ResidualScale(double z) const {
  if (z <= delta * delta) return 1.0;
  return std::sqrt(Rho(z) / z);
}

std::string_view ToString(MagnitudeStatus status) {
  switch (status) {
    case MagnitudeStatus::kConverged: return "Converged";
    case MagnitudeStatus::kTooFewFeatures: return "TooFewFeatures";
    case MagnitudeStatus::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

double MagnitudeInitialGuess(double prev_s, const UnitDirection& prev_u,
                             const UnitDirection& new_u,
                             bool keyframe_is_previous_frame) {
  if (keyframe_is_previous_frame) return 0.0;
  return new_u.vector().dot(prev_u.vector()) < 0.0 ? -prev_s : prev_s;
}

Eigen::VectorXd RobustReprojectionResiduals(std::span<const DepthFeature> features,
                                            const Rotation& rotation,
                                            const Vec3& translation,
                                            const CameraModel& cam,
                                            const RobustCost& robust) {
  Eigen::VectorXd out(2 * features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const DepthFeature& ft = features[i];
    const Vec3 p = rotation * (ft.f.vector() * ft.depth) + translation;
    const std::optional<Vec2> err = ReprojectionError(cam, p, ft.f_prime);
    Vec2 e = err ? Vec2(*err / ft.sigma) : Vec2(kUnprojectablePenalty, kUnprojectablePenalty);
    e *= robust.ResidualScale(e.squaredNorm());
    out.segment<2>(2 * i) = e;
  }
  return out;
}

double RobustReprojectionCost(std::span<const DepthFeature> features,
                              const Rotation& rotation, const Vec3& translation,
                              const CameraModel& cam, const RobustCost& robust) {
  return RobustReprojectionResiduals(features, rotation, translation, cam, robust)
      .squaredNorm();
}

std::vector<double> ReprojectionErrorsPx(std::span<const DepthFeature> features,
                                         const Rotation& rotation,
                                         const Vec3& translation,
                                         const CameraModel& cam) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const DepthFeature& ft : features) {
    const Vec3 p = rotation * (ft.f.vector() * ft.depth) + translation;
    const std::optional<Vec2> err = ReprojectionError(cam, p, ft.f_prime);
    out.push_back(err ? err->norm() : std::numeric_limits<double>::infinity());
  }
  return out;
}

std::vector<bool> MagnitudeOutliers(std::span<const DepthFeature> features,
                                    const Rotation& rotation,
                                    const UnitDirection& direction, double s,
                                    const CameraModel& cam, double threshold_px) {
  const std::vector<double> errors =
      ReprojectionErrorsPx(features, rotation, direction.vector() * s, cam);
  std::vector<bool> mask(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) mask[i] = errors[i] > threshold_px;
  return mask;
}

MagnitudeResult EstimateMagnitude(std::span<const DepthFeature> features,
                                  const Rotation& rotation,
                                  const UnitDirection& direction, double s0,
                                  const CameraModel& cam, const RobustCost& robust,
                                  const LMConfig& lm, double outlier_threshold_px) {
  MagnitudeResult out;
  out.s = s0;
  if (features.empty()) {
    out.status = MagnitudeStatus::kTooFewFeatures;
    return out;
  }
  const Vec3 u = direction.vector();
  LMProblem<double> problem;
  problem.tangent_dim = 1;
  problem.residual = [&](const double& s) -> Eigen::VectorXd {
    return RobustReprojectionResiduals(features, rotation, u * s, cam, robust);
  };
  problem.retract = [](const double& s, const Eigen::VectorXd& d) { return s + d[0]; };
  const LMResult<double> res = LevenbergMarquardt(lm).Minimize(problem, s0);

  out.s = res.point;
  out.final_cost = res.status.final_cost;
  out.lm = res.status;
  out.status = res.status.reason == LMTermination::kNumericalFailure
                   ? MagnitudeStatus::kNumericalFailure
                   : MagnitudeStatus::kConverged;
  std::vector<double> errors = ReprojectionErrorsPx(features, rotation, u * out.s, cam);
  out.outlier_mask.resize(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    out.outlier_mask[i] = errors[i] > outlier_threshold_px;
  }
  const auto mid = errors.begin() + errors.size() / 2;
  std::nth_element(errors.begin(), mid, errors.end());
  out.median_reproj_px = *mid;
  return out;
}

}  // namespace instavo
