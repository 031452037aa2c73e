#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "instavo/dataset.h"
#include "instavo/geometry.h"
#include "instavo/optim.h"
#include "instavo/pipeline.h"
#include "instavo/relpose.h"
#include "instavo/transmag.h"

namespace instavo {

enum class MotionProfile {
  // Independent random rotation axis and translation direction.
  kGeneric,
  // Camera orbits a point in front of it, turning while it translates.
  kOrbit,
  // Rotation about a fixed camera center.
  kPureRotation,
  // Lateral translation at constant orientation.
  kTranslationOnly,
};

struct SceneConfig {
  int n_landmarks = 200;
  double min_depth = 1.0;
  double max_depth = 6.0;
  int n_frames = 37;
  double total_rotation_deg = 25.0;
  double total_translation_m = 1.0;
  double pixel_sigma = 0.75;
  CameraModel camera = CameraModel::Spherical(200.0, 640, 480);
  double outlier_rate = 0.0;
  std::uint64_t seed = 42;
  MotionProfile motion = MotionProfile::kGeneric;
  // Amplitude of the smooth random deviation from constant velocity,
  // relative to the totals. Endpoints are unaffected.
  double trajectory_jitter = 0.05;

  void Validate() const;
};

// Narrow-FOV pinhole, close depths, short baseline: two-view records where
// the relative-pose problem is poorly conditioned and sensitive to the
// initial guess and the solver weight.
SceneConfig LowParallaxRecordConfig();

struct Scene {
  SceneConfig config;
  // Landmarks in the frame-0 camera, which is also the world frame.
  std::vector<Vec3> landmarks;
  // World-to-camera transforms; poses[0] is the identity.
  std::vector<Pose> poses;

  bool Visible(int frame, int landmark) const;
  std::vector<int> VisibleLandmarks(int frame) const;
};

// Deterministic for a given config (including seed).
Scene GenerateScene(const SceneConfig& config);

// Keyframe-to-frame correspondences for landmarks visible in both frames.
struct SyntheticPairs {
  std::vector<BearingPair> pairs;
  std::vector<int> landmark_ids;
  // True range along the keyframe bearing.
  std::vector<double> depths;
  std::vector<bool> is_outlier;
};

// Noisy bearing of `landmark` in `frame`: Gaussian pixel noise in the
// tangent plane of the true bearing, mapped back to the sphere. The noise
// draw depends only on (seed, frame, landmark).
Bearing NoisyBearing(const Scene& scene, int frame, int landmark, double pixel_sigma,
                     std::uint64_t seed);

// A fraction `outlier_rate` (rounded to the nearest count) of the pairs gets
// f' replaced by a uniformly random bearing inside the image.
SyntheticPairs SynthObservations(const Scene& scene, int frame_index,
                                 double pixel_sigma, double outlier_rate,
                                 std::uint64_t seed, int keyframe_index = 0);

struct GuessConfig {
  double gamma = 0.0;
  void Validate() const;
};

// exp(log(R_gt) * (1 - gamma)).
Rotation PerturbedGuess(const Rotation& r_gt, const GuessConfig& guess);

struct BaselineResult {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();
  LMStatus status;
};

// Pose-only bundle adjustment over so(3) x R^3 with robust reprojection
// cost; depths are held fixed. Requires at least 6 features.
BaselineResult Baseline6Dof(std::span<const DepthFeature> features,
                            const Rotation& r0, const Vec3& t0,
                            const CameraModel& cam, const RobustCost& robust,
                            const LMConfig& lm);

struct WhiskerStats {
  double p5 = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p95 = 0.0;
};

// Linear interpolation between order statistics at rank p (n - 1).
double Percentile(std::vector<double> values, double p);
WhiskerStats Whisker(std::vector<double> values);
double Median(std::vector<double> values);

struct TrialResult {
  // Absolute per-frame errors: degrees, and scene units after scale alignment.
  std::vector<double> rot_err_deg;
  std::vector<double> trans_err;
  // The same errors as percent of the maximal pairwise displacement.
  std::vector<double> rot_err_pct_per_frame;
  std::vector<double> trans_err_pct_per_frame;
  // Maximal error over frames as percent of the maximal displacement.
  double rot_err_pct = 0.0;
  double trans_err_pct = 0.0;
  double max_rot_displacement_deg = 0.0;
  double max_trans_displacement = 0.0;
  // Least-squares scale applied to the estimated camera centers.
  double scale = 1.0;
};

// Compares world-to-camera trajectories. Translation is compared on camera
// centers after a single least-squares scale. Throws std::invalid_argument
// on a length mismatch.
TrialResult TrajectoryErrorMetrics(std::span<const Pose> estimated,
                                   std::span<const Pose> ground_truth);

// Angle between directions, ignoring sign, in degrees.
double DirectionErrorDeg(const Vec3& estimated, const Vec3& truth);

enum class DepthMode { kConstant, kKnown };
enum class EstimatorKind { kFivePlusOne, kSixDof };
std::string_view ToString(DepthMode mode);
std::string_view ToString(EstimatorKind kind);

struct TrialSetup {
  DepthMode depth_mode = DepthMode::kConstant;
  double constant_depth = 0.75;
  SolverWeights weights;
  LMConfig lm;
  RobustCost robust;
};

// Estimates every frame against frame 0, seeding each frame with the
// previous estimate. Returns world-to-camera poses, frame 0 at identity.
std::vector<Pose> RunKeyframeTrial(const Scene& scene, EstimatorKind estimator,
                                   const TrialSetup& setup);

struct RelPoseTrialResult {
  double rot_err_deg = 0.0;
  double dir_err_deg = 0.0;
  double guess_rot_err_deg = 0.0;
  double guess_dir_err_deg = 0.0;
  LMStatus status;
};

// Two-view estimate on one record: rotation guess from gamma, direction
// guess from the minimum eigenvector of M(R_guess), then LM refinement.
RelPoseTrialResult RunRelPoseTrial(const CorrespondenceRecord& record, double gamma,
                                   const SolverWeights& weights, const LMConfig& lm);

// Records built from independent synthetic scenes (one per record), pairing
// frame 0 with a frame drawn from the second half of the trajectory.
std::vector<CorrespondenceRecord> SynthesizeRecords(const SceneConfig& base, int count,
                                                    bool noiseless,
                                                    std::string_view sequence_name);

// Streams scene observations frame by frame.
class SceneObservationProvider : public ObservationProvider {
 public:
  SceneObservationProvider(const Scene& scene, double pixel_sigma, std::uint64_t seed,
                           bool provide_rotation_prior = false);

  std::optional<FrameObservations> Next() override;

 private:
  const Scene& scene_;
  double pixel_sigma_;
  std::uint64_t seed_;
  bool provide_prior_;
  int next_frame_ = 0;
};

// SplitMix64 step, used to derive independent per-trial seeds.
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t salt);

}  // namespace instavo
