#include "instavo/pipeline.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace instavo {

std::string_view ToString(DepthState state) {
  switch (state) {
    case DepthState::kUnknown: return "Unknown";
    case DepthState::kAssumed: return "Assumed";
    case DepthState::kTriangulated: return "Triangulated";
  }
  return "Unknown";
}

void VoConfig::Validate() const {
  camera.Validate();
  if (!(constant_depth > 0.0) || !(min_parallax_deg > 0.0) || !(sigma_px > 0.0) ||
      !(max_magnitude_reproj_px > 0.0) || !(magnitude_outlier_px > 0.0) ||
      !(prior_perturbation_deg >= 0.0)) {
    throw std::invalid_argument("VoConfig: lengths, angles and thresholds must be positive");
  }
  if (min_triangulated_for_release < 1 || track_retention_frames < 1 ||
      min_inliers_keyframe < 1 || min_overlap_keyframe < 1) {
    throw std::invalid_argument("VoConfig: counts must be positive");
  }
  ransac.Validate();
  lm.Validate();
}

VisualOdometry::VisualOdometry(const VoConfig& config) : config_(config), rng_(config.seed) {
  config_.Validate();
}

int VisualOdometry::CountDepthState(DepthState state) const {
  return static_cast<int>(std::count_if(tracks_.begin(), tracks_.end(), [&](const auto& kv) {
    return kv.second.depth_state == state;
  }));
}

std::optional<Bearing> VisualOdometry::BearingAt(const FeatureTrack& track, int frame) const {
  if (track.current_frame == frame) return track.current_bearing;
  if (track.previous_frame == frame) return track.previous_bearing;
  return std::nullopt;
}

void VisualOdometry::Ingest(std::span<const TrackObservation> observations) {
  for (auto& [id, track] : tracks_) {
    ++track.frames_since_observed;
    ++track.age;
  }
  for (const TrackObservation& obs : observations) {
    auto [it, inserted] = tracks_.try_emplace(obs.track_id);
    FeatureTrack& track = it->second;
    if (inserted) {
      track.id = obs.track_id;
      track.sigma_px = config_.sigma_px;
      track.age = 0;
    } else if (track.current_frame >= 0) {
      track.previous_bearing = track.current_bearing;
      track.previous_frame = track.current_frame;
    }
    track.current_bearing = obs.bearing;
    track.current_frame = current_frame_;
    track.frames_since_observed = 0;
  }
}

void VisualOdometry::InitializeFirstFrame() {
  keyframe_ = {current_frame_, Pose{}};
  for (auto& [id, track] : tracks_) {
    if (track.current_frame != current_frame_) continue;
    track.keyframe_bearing = track.current_bearing;
    track.depth_state = DepthState::kAssumed;
    track.depth = config_.constant_depth;
  }
  last_relative_ = RelativePose{};
}

void VisualOdometry::InsertKeyframeAtPreviousFrame() {
  const int prev = current_frame_ - 1;
  const Pose& prev_pose = trajectory_.at(prev);
  // Old keyframe camera to previous camera.
  const Pose kf_to_prev = prev_pose * keyframe_.world_pose.inverse();

  for (auto& [id, track] : tracks_) {
    const std::optional<Bearing> at_prev = BearingAt(track, prev);
    if (track.depth_state == DepthState::kTriangulated && track.keyframe_bearing) {
      const Vec3 p = kf_to_prev * (track.keyframe_bearing->vector() * track.depth);
      if (p.norm() > 0.0) {
        const double scale = track.depth / p.norm();
        track.keyframe_bearing = at_prev ? *at_prev : Bearing::FromVector(p);
        track.depth = p.norm();
        // Variance of the inverse depth follows rho' = rho * depth / |p|.
        track.inverse_depth_var *= scale * scale;
      } else {
        track.keyframe_bearing.reset();
        track.depth_state = DepthState::kUnknown;
      }
    } else {
      track.keyframe_bearing = at_prev;
      if (constant_depth_active_ && at_prev) {
        track.depth_state = DepthState::kAssumed;
        track.depth = config_.constant_depth;
      } else if (!constant_depth_active_) {
        track.depth_state = DepthState::kUnknown;
      }
    }
    track.best_parallax_deg = 0.0;
  }
  keyframe_ = {prev, prev_pose};
  last_relative_ = RelativePose{Rotation(), last_relative_.direction, 0.0};
}

VisualOdometry::Estimate VisualOdometry::EstimateAgainstKeyframe(
    const std::optional<Rotation>& rotation_prior) {
  Estimate est;
  std::vector<BearingPair> pairs;
  for (const auto& [id, track] : tracks_) {
    if (track.current_frame != current_frame_ || !track.keyframe_bearing) continue;
    pairs.push_back({*track.keyframe_bearing, track.current_bearing});
    est.pair_ids.push_back(id);
  }
  // Deterministic ordering independent of hash-map iteration.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return est.pair_ids[a] < est.pair_ids[b]; });
  {
    std::vector<BearingPair> sorted_pairs;
    std::vector<TrackId> sorted_ids;
    for (std::size_t i : order) {
      sorted_pairs.push_back(pairs[i]);
      sorted_ids.push_back(est.pair_ids[i]);
    }
    pairs.swap(sorted_pairs);
    est.pair_ids.swap(sorted_ids);
  }
  est.correspondences = static_cast<int>(pairs.size());
  if (pairs.size() < 5) {
    est.lost = true;
    return est;
  }

  // Keyframe-to-previous rotation, advanced by the external prior if any.
  const Rotation previous = last_relative_.rotation;
  const Rotation prior = rotation_prior
                             ? *rotation_prior * previous
                             : PerturbRotation(previous, config_.prior_perturbation_deg, rng_);

  if (pairs.size() >= static_cast<std::size_t>(config_.ransac.subsample_size)) {
    est.relpose =
        RansacRelativePose(pairs, prior, config_.weights, config_.ransac, config_.lm, rng_);
  } else {
    const UnitDirection u0 =
        TranslationFromRotation(EpipolarNormalCovariance(prior, pairs)).direction;
    const RefineResult refined =
        RefineRelativePose(pairs, prior, u0, config_.weights, config_.lm);
    est.relpose.rotation = refined.rotation;
    est.relpose.direction = refined.direction;
    est.relpose.inlier_mask.assign(pairs.size(), true);
    est.relpose.num_inliers = static_cast<int>(pairs.size());
    est.relpose.final_functional = refined.functional;
    est.relpose.status = static_cast<int>(pairs.size()) < config_.ransac.min_inliers
                             ? RelPoseStatus::kTooFewInliers
                             : RelPoseStatus::kConverged;
  }

  std::vector<DepthFeature> features;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!est.relpose.inlier_mask[i]) continue;
    const FeatureTrack& track = tracks_.at(est.pair_ids[i]);
    double depth = 0.0;
    if (constant_depth_active_) {
      if (track.depth_state == DepthState::kUnknown) continue;
      depth = config_.constant_depth;
    } else {
      if (track.depth_state != DepthState::kTriangulated) continue;
      depth = track.depth;
    }
    features.push_back({pairs[i].f, pairs[i].f_prime, depth, track.sigma_px});
    est.magnitude_ids.push_back(est.pair_ids[i]);
  }

  const bool kf_is_previous = keyframe_.frame_index == current_frame_ - 1;
  const double s0 = MagnitudeInitialGuess(last_relative_.magnitude, last_relative_.direction,
                                          est.relpose.direction, kf_is_previous);
  est.magnitude = EstimateMagnitude(features, est.relpose.rotation, est.relpose.direction, s0,
                                    config_.camera, config_.robust, config_.lm,
                                    config_.magnitude_outlier_px);
  est.relative = {est.relpose.rotation, est.relpose.direction, est.magnitude.s};
  est.ok = est.relpose.status != RelPoseStatus::kTooFewInliers &&
           est.magnitude.status == MagnitudeStatus::kConverged;
  return est;
}

bool VisualOdometry::KeyframeDecision(const RelPoseResult& relpose,
                                      const MagnitudeResult& magnitude) const {
  if (relpose.status == RelPoseStatus::kTooFewInliers) return true;
  if (relpose.num_inliers < config_.min_inliers_keyframe) return true;
  if (magnitude.status != MagnitudeStatus::kConverged) return true;
  if (static_cast<int>(magnitude.outlier_mask.size()) < config_.min_overlap_keyframe) return true;
  if (!constant_depth_active_ && magnitude.median_reproj_px > config_.max_magnitude_reproj_px) {
    return true;
  }
  return false;
}

int VisualOdometry::RemoveOutliers(const Estimate& est) {
  int removed = 0;
  for (std::size_t i = 0; i < est.pair_ids.size(); ++i) {
    if (!est.relpose.inlier_mask[i]) removed += static_cast<int>(tracks_.erase(est.pair_ids[i]));
  }
  // Reprojection outliers only mean something once depths are measured.
  if (!constant_depth_active_) {
    for (std::size_t i = 0; i < est.magnitude_ids.size(); ++i) {
      if (est.magnitude.outlier_mask[i]) {
        removed += static_cast<int>(tracks_.erase(est.magnitude_ids[i]));
      }
    }
  }
  return removed;
}

void VisualOdometry::UpdateDepths(const RelativePose& keyframe_to_current) {
  const Rotation& r = keyframe_to_current.rotation;
  const Vec3 t = keyframe_to_current.translation();
  const double sigma_angle = 1.0 / std::max(config_.camera.fx, config_.camera.fy);

  for (auto& [id, track] : tracks_) {
    if (track.current_frame != current_frame_ || !track.keyframe_bearing) continue;
    const double parallax = ParallaxAngleDeg(r, *track.keyframe_bearing, track.current_bearing);
    if (parallax < config_.min_parallax_deg || parallax <= track.best_parallax_deg) continue;
    double depth = 0.0;
    try {
      depth = TriangulateTwoView(r, t, *track.keyframe_bearing, track.current_bearing);
    } catch (const GeometryError&) {
      continue;
    }
    const double rho = 1.0 / depth;
    const double rho_std = rho * track.sigma_px * sigma_angle / (parallax * kDegToRad);
    const double var = rho_std * rho_std;
    if (track.depth_state == DepthState::kTriangulated && track.inverse_depth_var > 0.0) {
      const double w_old = 1.0 / track.inverse_depth_var;
      const double w_new = 1.0 / var;
      const double fused = (w_old / track.depth + w_new * rho) / (w_old + w_new);
      track.depth = 1.0 / fused;
      track.inverse_depth_var = 1.0 / (w_old + w_new);
    } else {
      track.depth = depth;
      track.inverse_depth_var = var;
    }
    track.depth_state = DepthState::kTriangulated;
    track.best_parallax_deg = parallax;
  }

  std::erase_if(tracks_, [&](const auto& kv) {
    return kv.second.frames_since_observed > config_.track_retention_frames;
  });
}

void VisualOdometry::FillCensus(FrameDiagnostics& diag) const {
  diag.n_unknown = CountDepthState(DepthState::kUnknown);
  diag.n_assumed = CountDepthState(DepthState::kAssumed);
  diag.n_triangulated = CountDepthState(DepthState::kTriangulated);
  diag.constant_depth_active = constant_depth_active_;
  diag.keyframe_index = keyframe_.frame_index;
}

FrameResult VisualOdometry::ProcessFrame(const FrameObservations& frame) {
  return ProcessFrame(frame.observations, frame.rotation_prior);
}

FrameResult VisualOdometry::ProcessFrame(std::span<const TrackObservation> observations,
                                         const std::optional<Rotation>& rotation_prior) {
  ++current_frame_;
  Ingest(observations);
  FrameResult result;
  FrameDiagnostics& diag = result.diagnostics;
  diag.frame_index = current_frame_;

  if (current_frame_ == 0) {
    InitializeFirstFrame();
    trajectory_.push_back(Pose{});
    diag.keyframe_inserted = true;
    FillCensus(diag);
    return result;
  }

  Estimate est = EstimateAgainstKeyframe(rotation_prior);
  bool need_keyframe = est.lost || KeyframeDecision(est.relpose, est.magnitude);
  const bool kf_is_previous = keyframe_.frame_index == current_frame_ - 1;
  if (need_keyframe && !kf_is_previous) {
    InsertKeyframeAtPreviousFrame();
    UpdateDepthMode();
    diag.keyframe_inserted = true;
    est = EstimateAgainstKeyframe(rotation_prior);
  }

  diag.correspondences = est.correspondences;
  const Pose& previous_pose = trajectory_.back();
  const bool rotation_only = !est.lost && !est.ok &&
                             est.relpose.status != RelPoseStatus::kTooFewInliers;
  if (rotation_only) {
    // Direction and rotation are sound; keep the magnitude guess.
    est.magnitude.s = MagnitudeInitialGuess(last_relative_.magnitude, last_relative_.direction,
                                            est.relpose.direction,
                                            keyframe_.frame_index == current_frame_ - 1);
    est.relative = {est.relpose.rotation, est.relpose.direction, est.magnitude.s};
    diag.coasted = true;
  }
  if (est.lost || (!est.ok && !rotation_only)) {
    // Hold the previous pose (advanced by the external rotation, if any).
    diag.tracking_lost = est.lost;
    diag.coasted = true;
    Pose held = previous_pose;
    if (rotation_prior) held = Pose{*rotation_prior, Vec3::Zero()} * previous_pose;
    if (!est.lost) {
      diag.relpose_status = est.relpose.status;
      diag.magnitude_status = est.magnitude.status;
      diag.inliers = est.relpose.num_inliers;
    }
    const Pose rel = held * keyframe_.world_pose.inverse();
    last_relative_ = RelativePose{rel.rotation, last_relative_.direction,
                                  last_relative_.magnitude};
    trajectory_.push_back(held);
    result.pose = held;
    FillCensus(diag);
    return result;
  }

  result.pose = est.relative.ToPose() * keyframe_.world_pose;
  trajectory_.push_back(result.pose);
  diag.relpose_status = est.relpose.status;
  diag.magnitude_status = est.magnitude.status;
  diag.inliers = est.relpose.num_inliers;
  diag.magnitude_features = static_cast<int>(est.magnitude_ids.size());
  diag.relative = est.relative;

  if (rotation_only) {
    last_relative_ = est.relative;
    FillCensus(diag);
    return result;
  }
  diag.removed_tracks = RemoveOutliers(est);
  UpdateDepths(est.relative);
  last_relative_ = est.relative;

  UpdateDepthMode();
  FillCensus(diag);
  return result;
}

void VisualOdometry::UpdateDepthMode() {
  const int triangulated = CountDepthState(DepthState::kTriangulated);
  if (constant_depth_active_ && triangulated >= config_.min_triangulated_for_release) {
    constant_depth_active_ = false;
    for (auto& [id, track] : tracks_) {
      if (track.depth_state == DepthState::kAssumed) track.depth_state = DepthState::kUnknown;
    }
  } else if (!constant_depth_active_ && triangulated < config_.min_triangulated_for_release) {
    // Too few measured depths left: fall back to the constant-depth bootstrap.
    constant_depth_active_ = true;
    for (auto& [id, track] : tracks_) {
      if (track.depth_state == DepthState::kUnknown && track.keyframe_bearing) {
        track.depth_state = DepthState::kAssumed;
        track.depth = config_.constant_depth;
      }
    }
  }
}

}  // namespace instavo
