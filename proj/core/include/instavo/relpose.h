#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "instavo/geometry.h"
#include "instavo/optim.h"

namespace instavo {

// Keyframe bearing f and current-frame bearing f' of one correspondence.
struct BearingPair {
  Bearing f;
  Bearing f_prime;
};

using Vec27 = Eigen::Matrix<double, 27, 1>;
using Mat27 = Eigen::Matrix<double, 27, 27>;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// The lifted pose x = vec(vec(R) u^T) = kron(u, vec(R)), column-major.
Vec27 LiftedPose(const Rotation& rotation, const Vec3& u);

// C = sum_i c_i c_i^T, where c_i^T x = u . ((R f_i) x f'_i) for every (R, u).
// The functional x^T C x is therefore the sum of squared epipolar-normal
// projections onto u. C depends on the bearings only.
class DataMatrix {
 public:
  DataMatrix() : matrix_(Mat27::Zero()) {}

  // Throws std::invalid_argument on an empty span.
  static DataMatrix Build(std::span<const BearingPair> pairs);
  // Per-pair vector c_i.
  static Vec27 PairVector(const BearingPair& pair);

  const Mat27& matrix() const { return matrix_; }
  int n_pairs() const { return n_pairs_; }
  double trace() const { return matrix_.trace(); }

  DataMatrix& operator+=(const DataMatrix& other);

 private:
  Mat27 matrix_;
  int n_pairs_ = 0;
};

inline DataMatrix BuildDataMatrix(std::span<const BearingPair> pairs) {
  return DataMatrix::Build(pairs);
}

// M(R) = sum_i m_i m_i^T with m_i = (R f_i) x f'_i.
// Throws std::invalid_argument on an empty span.
Mat3 EpipolarNormalCovariance(const Rotation& rotation,
                              std::span<const BearingPair> pairs);

struct DirectionEstimate {
  UnitDirection direction;
  double min_eigenvalue = 0.0;
  // lambda_2 - lambda_1; compared against 1e-9 * trace(M).
  double eigen_gap = 0.0;
  bool degenerate = false;
};

// Eigenvector of the smallest eigenvalue of M. Either sign is valid.
DirectionEstimate TranslationFromRotation(const Mat3& m);

struct SolverWeights {
  // Weight W on the functional row of the residual. The squared residual
  // therefore carries W^2 on the squared functional.
  double functional_weight = 50.0;
};

double FunctionalValue(const DataMatrix& c, const Rotation& rotation,
                       const UnitDirection& direction);

// Derivatives of x^T C x along (theta_1..3, beta_1..2) at the zero tangent,
// using R(theta) = R exp([theta]x) and u(beta) = R_u exp((beta, 0)) e_z.
Vec5 FunctionalGradient(const DataMatrix& c, const Rotation& rotation,
                        const UnitDirection& direction);

// (dF/dtheta_1..3, dF/dbeta_1..2, W F).
Vec6 ResidualVector(const DataMatrix& c, const Rotation& rotation,
                    const UnitDirection& direction, const SolverWeights& weights);

// Tangent coordinates of the 5-DoF chart.
struct Tangent5 {
  Vec3 theta = Vec3::Zero();
  Vec2 beta = Vec2::Zero();
};

struct RelPoseState {
  Rotation rotation;
  UnitDirection direction;

  RelPoseState Retract(const Tangent5& delta) const {
    return {rotation.Retract(delta.theta), direction.Retract(delta.beta)};
  }
};

// Fewest pairs that constrain the five degrees of freedom.
inline constexpr int kMinPairs = 5;

struct RefineResult {
  Rotation rotation;
  UnitDirection direction;
  double functional = 0.0;
  LMStatus status;
};

// Levenberg-Marquardt on the 6-row residual. The residual Jacobian is taken
// by central differences in the tangent chart. Requires at least 5 pairs.
RefineResult RefineRelativePose(std::span<const BearingPair> pairs,
                                const Rotation& r0, const UnitDirection& u0,
                                const SolverWeights& weights, const LMConfig& lm);
RefineResult RefineRelativePose(const DataMatrix& c, const Rotation& r0,
                                const UnitDirection& u0,
                                const SolverWeights& weights, const LMConfig& lm);

struct RansacConfig {
  // Threshold on the squared Sampson distance in normalized coordinates.
  double sampson_inlier_threshold = 2.5e-4;
  int subsample_size = 10;
  int ransac_iterations = 5;
  int refine_iterations = 7;
  int min_inliers = 10;

  void Validate() const;
};

enum class RelPoseStatus { kConverged, kDegenerate, kTooFewInliers };
std::string_view ToString(RelPoseStatus status);

struct RelPoseResult {
  Rotation rotation;
  UnitDirection direction;
  std::vector<bool> inlier_mask;
  int num_inliers = 0;
  double final_functional = 0.0;
  RelPoseStatus status = RelPoseStatus::kTooFewInliers;
};

// Hypothesize-and-verify around LM refinement:
//  1. `ransac_iterations` rounds: subsample the current inliers, seed u from
//     the minimum eigenvector of M(R_best) on the subsample, refine on it and
//     classify all pairs by squared Sampson distance.
//  2. `refine_iterations` rounds on the full inlier set, stopping once
//     neither the inlier count grows nor the cost drops.
// Hypotheses rank by inlier count, then by mean functional over inliers.
// Throws std::invalid_argument when pairs.size() < subsample_size.
RelPoseResult RansacRelativePose(std::span<const BearingPair> pairs,
                                 const Rotation& prior,
                                 const SolverWeights& weights,
                                 const RansacConfig& config, const LMConfig& lm,
                                 std::mt19937_64& rng);

// Prior used when neither an external rotation nor a previous estimate is
// trustworthy: each axis perturbed uniformly within +-max_deg.
Rotation PerturbRotation(const Rotation& rotation, double max_deg,
                         std::mt19937_64& rng);

}  // namespace instavo
