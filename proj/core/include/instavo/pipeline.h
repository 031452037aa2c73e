#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "instavo/geometry.h"
#include "instavo/optim.h"
#include "instavo/relpose.h"
#include "instavo/transmag.h"

namespace instavo {

using TrackId = std::int64_t;

struct TrackObservation {
  TrackId track_id = 0;
  Bearing bearing;
};

struct FrameObservations {
  int frame_index = 0;
  std::vector<TrackObservation> observations;
  // Optional rotation from the previous frame to this one (e.g. integrated
  // gyro), mapping previous-camera coordinates into current-camera ones.
  std::optional<Rotation> rotation_prior;
};

// Pull-based source of tracked features. Frame indices are monotone; an
// empty optional ends the stream.
class ObservationProvider {
 public:
  virtual ~ObservationProvider() = default;
  virtual std::optional<FrameObservations> Next() = 0;
};

enum class DepthState { kUnknown, kAssumed, kTriangulated };
std::string_view ToString(DepthState state);

struct FeatureTrack {
  TrackId id = 0;
  std::optional<Bearing> keyframe_bearing;
  Bearing current_bearing;
  int current_frame = -1;
  // Observation preceding current_bearing, if any.
  std::optional<Bearing> previous_bearing;
  int previous_frame = -1;

  DepthState depth_state = DepthState::kUnknown;
  double depth = 0.0;           // along keyframe_bearing
  double inverse_depth_var = 0.0;
  double best_parallax_deg = 0.0;
  double sigma_px = 1.0;
  int frames_since_observed = 0;
  int age = 0;
};

struct Keyframe {
  int frame_index = 0;
  // World-to-keyframe-camera transform.
  Pose world_pose;
};

struct VoConfig {
  CameraModel camera = CameraModel::Spherical(200.0, 640, 480);
  double constant_depth = 0.75;
  double min_parallax_deg = 1.0;
  int min_triangulated_for_release = 10;
  int track_retention_frames = 150;
  int min_inliers_keyframe = 30;
  int min_overlap_keyframe = 10;
  // Median reprojection error of the magnitude estimator that forces a
  // keyframe once the constant-depth bootstrap has ended.
  double max_magnitude_reproj_px = 3.0;
  double magnitude_outlier_px = kMagnitudeOutlierPx;
  double sigma_px = 1.0;
  // Per-axis uniform perturbation applied to the previous rotation when no
  // external prior is supplied.
  double prior_perturbation_deg = 0.5;
  RansacConfig ransac;
  LMConfig lm;
  SolverWeights weights;
  RobustCost robust;
  std::uint64_t seed = 1;

  void Validate() const;
};

struct FrameDiagnostics {
  int frame_index = 0;
  int keyframe_index = 0;
  bool tracking_lost = false;
  bool keyframe_inserted = false;
  // Estimation failed even against a keyframe at the previous frame: the
  // translation magnitude, or the whole pose, was carried over.
  bool coasted = false;
  bool constant_depth_active = true;
  RelPoseStatus relpose_status = RelPoseStatus::kConverged;
  MagnitudeStatus magnitude_status = MagnitudeStatus::kConverged;
  int correspondences = 0;
  int inliers = 0;
  int magnitude_features = 0;
  int removed_tracks = 0;
  int n_unknown = 0;
  int n_assumed = 0;
  int n_triangulated = 0;
  RelativePose relative;  // keyframe to current frame
};

struct FrameResult {
  Pose pose;  // world to current camera
  FrameDiagnostics diagnostics;
};

// Frame-by-frame monocular odometry: 5-DoF relative pose against the
// current keyframe, then the translation magnitude from features with
// (assumed or triangulated) depth. Single owner; frames are processed in order.
class VisualOdometry {
 public:
  explicit VisualOdometry(const VoConfig& config);

  FrameResult ProcessFrame(const FrameObservations& frame);
  FrameResult ProcessFrame(std::span<const TrackObservation> observations,
                           const std::optional<Rotation>& rotation_prior);

  // True when the estimate calls for a new keyframe: too few RANSAC inliers,
  // too few features with depth, a failed estimator, or (after the
  // constant-depth bootstrap) a high reprojection error.
  bool KeyframeDecision(const RelPoseResult& relpose, const MagnitudeResult& magnitude) const;

  // Triangulates or refines depths of tracks observed in the current frame
  // against the keyframe, then drops tracks unobserved for longer than the
  // retention window.
  void UpdateDepths(const RelativePose& keyframe_to_current);

  const VoConfig& config() const { return config_; }
  const Keyframe& keyframe() const { return keyframe_; }
  const std::vector<Pose>& trajectory() const { return trajectory_; }
  const std::unordered_map<TrackId, FeatureTrack>& tracks() const { return tracks_; }
  bool constant_depth_active() const { return constant_depth_active_; }
  int frames_processed() const { return static_cast<int>(trajectory_.size()); }
  int CountDepthState(DepthState state) const;

 private:
  struct Estimate {
    bool ok = false;
    bool lost = false;
    RelPoseResult relpose;
    MagnitudeResult magnitude;
    RelativePose relative;
    std::vector<TrackId> pair_ids;
    std::vector<TrackId> magnitude_ids;
    int correspondences = 0;
  };

  void Ingest(std::span<const TrackObservation> observations);
  void InitializeFirstFrame();
  Estimate EstimateAgainstKeyframe(const std::optional<Rotation>& rotation_prior);
  void InsertKeyframeAtPreviousFrame();
  int RemoveOutliers(const Estimate& estimate);
  std::optional<Bearing> BearingAt(const FeatureTrack& track, int frame) const;
  void FillCensus(FrameDiagnostics& diag) const;
  // Releases the constant-depth bootstrap once enough depths are measured and
  // re-engages it when they run out.
  void UpdateDepthMode();

  VoConfig config_;
  std::mt19937_64 rng_;
  std::unordered_map<TrackId, FeatureTrack> tracks_;
  Keyframe keyframe_;
  std::vector<Pose> trajectory_;
  int current_frame_ = -1;
  bool constant_depth_active_ = true;
  // Last accepted keyframe-to-frame estimate.
  RelativePose last_relative_;
};

}  // namespace instavo
