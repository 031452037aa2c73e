#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "instavo/geometry.h"
#include "instavo/optim.h"

namespace instavo {

// A correspondence whose keyframe depth is known (or assumed).
struct DepthFeature {
  Bearing f;
  Bearing f_prime;
  double depth = 1.0;  // along f, in scene units
  double sigma = 1.0;  // pixels
};

// Robust kernel g() applied to the squared, sigma-normalized pixel error
// z = |e|^2 / sigma^2. Huber: z for z <= delta^2, else 2 delta sqrt(z) - delta^2.
struct RobustCost {
  enum class Kind { kHuber };
  Kind kind = Kind::kHuber;
  double delta = 2.0;

  double Rho(double squared_error) const;
  // sqrt(rho(z) / z), the factor that maps a raw residual to a robustified one.
  double ResidualScale(double squared_error) const;
};

inline constexpr double kMagnitudeOutlierPx = 1.5;

enum class MagnitudeStatus { kConverged, kTooFewFeatures, kNumericalFailure };
std::string_view ToString(MagnitudeStatus status);

struct MagnitudeResult {
  double s = 0.0;
  double final_cost = 0.0;
  std::vector<bool> outlier_mask;
  // Median pixel reprojection error at s.
  double median_reproj_px = 0.0;
  MagnitudeStatus status = MagnitudeStatus::kTooFewFeatures;
  LMStatus lm;
};

// 0 right after a keyframe insertion at the previous frame; otherwise the
// previous magnitude, negated when the direction flipped sign (u_n . u_{n-1} < 0).
double MagnitudeInitialGuess(double prev_s, const UnitDirection& prev_u,
                             const UnitDirection& new_u,
                             bool keyframe_is_previous_frame);

// Stacked 2-vectors per feature whose squared norms are the robust costs
// g(|pi(R f d + t) - pi(f')|^2 / sigma^2). Shared with the 6-DoF baseline.
Eigen::VectorXd RobustReprojectionResiduals(std::span<const DepthFeature> features,
                                            const Rotation& rotation,
                                            const Vec3& translation,
                                            const CameraModel& cam,
                                            const RobustCost& robust);

double RobustReprojectionCost(std::span<const DepthFeature> features,
                              const Rotation& rotation, const Vec3& translation,
                              const CameraModel& cam, const RobustCost& robust);

// Per-feature pixel reprojection error norm; +inf when not projectable.
std::vector<double> ReprojectionErrorsPx(std::span<const DepthFeature> features,
                                         const Rotation& rotation,
                                         const Vec3& translation,
                                         const CameraModel& cam);

// One-dimensional LM on s with (R, u) held fixed.
MagnitudeResult EstimateMagnitude(std::span<const DepthFeature> features,
                                  const Rotation& rotation,
                                  const UnitDirection& direction, double s0,
                                  const CameraModel& cam, const RobustCost& robust,
                                  const LMConfig& lm,
                                  double outlier_threshold_px = kMagnitudeOutlierPx);

// True where the reprojection error exceeds threshold_px.
std::vector<bool> MagnitudeOutliers(std::span<const DepthFeature> features,
                                    const Rotation& rotation,
                                    const UnitDirection& direction, double s,
                                    const CameraModel& cam, double threshold_px);

}  // namespace instavo
