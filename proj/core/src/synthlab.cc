#include "instavo/synthlab.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace instavo {

namespace {

Vec3 UnprojectPixel(const CameraModel& cam, const Vec2& px) {
  return Vec3((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0).normalized();
}

Vec3 RandomUnitInPlaneXY(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  const double a = angle(rng);
  return Vec3(std::cos(a), std::sin(a), 0.0);
}

Vec3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Vec3 RandomBox(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return Vec3(u(rng), u(rng), u(rng));
}

double FeatureSigma(double pixel_sigma) { return pixel_sigma > 0.0 ? pixel_sigma : 1.0; }

}  // namespace

std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SceneConfig::Validate() const {
  camera.Validate();
  if (n_landmarks < 1) throw std::invalid_argument("SceneConfig: n_landmarks must be >= 1");
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) {
    throw std::invalid_argument("SceneConfig: need 0 < min_depth < max_depth");
  }
  if (n_frames < 2) throw std::invalid_argument("SceneConfig: n_frames must be >= 2");
  if (!(total_rotation_deg >= 0.0) || !(total_rotation_deg < 180.0)) {
    throw std::invalid_argument("SceneConfig: total_rotation_deg must be in [0, 180)");
  }
  if (!(total_translation_m >= 0.0)) {
    throw std::invalid_argument("SceneConfig: total_translation_m must be >= 0");
  }
  if (!(pixel_sigma >= 0.0)) throw std::invalid_argument("SceneConfig: pixel_sigma must be >= 0");
  if (!(outlier_rate >= 0.0) || !(outlier_rate < 1.0)) {
    throw std::invalid_argument("SceneConfig: outlier_rate must be in [0, 1)");
  }
  if (!(trajectory_jitter >= 0.0)) {
    throw std::invalid_argument("SceneConfig: trajectory_jitter must be >= 0");
  }
}

SceneConfig LowParallaxRecordConfig() {
  SceneConfig config;
  config.camera = CameraModel::Pinhole(525.0, 640, 480);
  config.min_depth = 0.5;
  config.max_depth = 2.0;
  config.pixel_sigma = 1.0;
  config.total_rotation_deg = 20.0;
  config.total_translation_m = 0.08;
  return config;
}

bool Scene::Visible(int frame, int landmark) const {
  const Vec3 p = poses.at(frame) * landmarks.at(landmark);
  if (p.z() <= 0.1) return false;
  return config.camera.InImage(Project(config.camera, p));
}

std::vector<int> Scene::VisibleLandmarks(int frame) const {
  std::vector<int> out;
  for (int l = 0; l < static_cast<int>(landmarks.size()); ++l) {
    if (Visible(frame, l)) out.push_back(l);
  }
  return out;
}

Scene GenerateScene(const SceneConfig& config) {
  config.Validate();
  Scene scene;
  scene.config = config;
  std::mt19937_64 rng(config.seed);

  const CameraModel& cam = config.camera;
  std::uniform_real_distribution<double> px_x(0.0, cam.width);
  std::uniform_real_distribution<double> px_y(0.0, cam.height);
  std::uniform_real_distribution<double> range(config.min_depth, config.max_depth);
  scene.landmarks.reserve(config.n_landmarks);
  for (int i = 0; i < config.n_landmarks; ++i) {
    const Vec3 b = UnprojectPixel(cam, Vec2(px_x(rng), px_y(rng)));
    scene.landmarks.push_back(b * range(rng));
  }

  const double theta = config.total_rotation_deg * kDegToRad;
  const double length = config.total_translation_m;
  const Vec3 rot_jitter = RandomBox(rng) * config.trajectory_jitter * theta;
  const Vec3 trans_jitter = RandomBox(rng) * config.trajectory_jitter * length;

  Vec3 axis = Vec3::UnitY();
  Vec3 direction = Vec3::UnitX();
  Vec3 pivot = Vec3::Zero();
  MotionProfile motion = config.motion;
  switch (motion) {
    case MotionProfile::kGeneric:
      axis = RandomUnit(rng);
      direction = RandomUnit(rng);
      break;
    case MotionProfile::kOrbit:
      axis = RandomUnitInPlaneXY(rng);
      if (theta > 1e-9) {
        pivot = Vec3(0.0, 0.0, length / (2.0 * std::sin(theta / 2.0)));
      } else {
        direction = RandomUnitInPlaneXY(rng);
        motion = MotionProfile::kTranslationOnly;
      }
      break;
    case MotionProfile::kPureRotation:
      axis = RandomUnit(rng);
      break;
    case MotionProfile::kTranslationOnly:
      direction = RandomUnitInPlaneXY(rng);
      break;
  }

  scene.poses.reserve(config.n_frames);
  for (int k = 0; k < config.n_frames; ++k) {
    const double tau = static_cast<double>(k) / (config.n_frames - 1);
    const double bump = std::sin(kPi * tau);
    Rotation cam_to_world;
    Vec3 center = Vec3::Zero();
    switch (motion) {
      case MotionProfile::kGeneric:
        cam_to_world = Rotation::Exp(axis * theta * tau + rot_jitter * bump);
        center = direction * length * tau + trans_jitter * bump;
        break;
      case MotionProfile::kOrbit: {
        const Rotation base = Rotation::Exp(axis * theta * tau);
        cam_to_world = Rotation::Exp(axis * theta * tau + rot_jitter * bump);
        center = pivot - base * pivot + trans_jitter * bump;
        break;
      }
      case MotionProfile::kPureRotation:
        cam_to_world = Rotation::Exp(axis * theta * tau + rot_jitter * bump);
        break;
      case MotionProfile::kTranslationOnly:
        center = direction * length * tau + trans_jitter * bump;
        break;
    }
    const Rotation world_to_cam = cam_to_world.inverse();
    scene.poses.push_back({world_to_cam, -(world_to_cam * center)});
  }
  return scene;
}

Bearing NoisyBearing(const Scene& scene, int frame, int landmark, double pixel_sigma,
                     std::uint64_t seed) {
  const Vec3 b = (scene.poses.at(frame) * scene.landmarks.at(landmark)).normalized();
  if (pixel_sigma <= 0.0) return Bearing::FromVector(b);
  std::mt19937_64 rng(MixSeed(MixSeed(seed, static_cast<std::uint64_t>(frame)),
                              static_cast<std::uint64_t>(landmark)));
  std::normal_distribution<double> noise(0.0, pixel_sigma);
  const double nx = noise(rng);
  const double ny = noise(rng);
  const CameraModel& cam = scene.config.camera;
  const Vec3 local(nx / cam.fx, ny / cam.fy, 1.0);
  return Bearing::FromVector(TangentFrame(b).inverse() * local);
}

SyntheticPairs SynthObservations(const Scene& scene, int frame_index, double pixel_sigma,
                                 double outlier_rate, std::uint64_t seed, int keyframe_index) {
  if (frame_index < 0 || frame_index >= static_cast<int>(scene.poses.size()) ||
      keyframe_index < 0 || keyframe_index >= static_cast<int>(scene.poses.size())) {
    throw std::out_of_range("SynthObservations: frame index out of range");
  }
  if (!(outlier_rate >= 0.0) || !(outlier_rate < 1.0)) {
    throw std::invalid_argument("SynthObservations: outlier_rate must be in [0, 1)");
  }
  SyntheticPairs out;
  const Pose& kf = scene.poses[keyframe_index];
  for (int l = 0; l < static_cast<int>(scene.landmarks.size()); ++l) {
    if (!scene.Visible(keyframe_index, l) || !scene.Visible(frame_index, l)) continue;
    out.pairs.push_back({NoisyBearing(scene, keyframe_index, l, pixel_sigma, seed),
                         NoisyBearing(scene, frame_index, l, pixel_sigma, seed)});
    out.landmark_ids.push_back(l);
    out.depths.push_back((kf * scene.landmarks[l]).norm());
  }
  out.is_outlier.assign(out.pairs.size(), false);

  const std::size_t n_out =
      static_cast<std::size_t>(std::lround(outlier_rate * static_cast<double>(out.pairs.size())));
  if (n_out == 0) return out;
  std::mt19937_64 rng(MixSeed(MixSeed(seed, 0x6f75746cULL),
                              static_cast<std::uint64_t>(frame_index)));
  std::vector<std::size_t> order(out.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const CameraModel& cam = scene.config.camera;
  std::uniform_real_distribution<double> px_x(0.0, cam.width);
  std::uniform_real_distribution<double> px_y(0.0, cam.height);
  for (std::size_t k = 0; k < n_out; ++k) {
    const std::size_t i = order[k];
    out.pairs[i].f_prime = Bearing::FromVector(UnprojectPixel(cam, Vec2(px_x(rng), px_y(rng))));
    out.is_outlier[i] = true;
  }
  return out;
}

void GuessConfig::Validate() const {
  if (!(gamma >= 0.0) || !(gamma <= 1.0)) {
    throw std::invalid_argument("GuessConfig: gamma must be in [0, 1]");
  }
}

Rotation PerturbedGuess(const Rotation& r_gt, const GuessConfig& guess) {
  guess.Validate();
  return Rotation::Exp(r_gt.Log() * (1.0 - guess.gamma));
}

BaselineResult Baseline6Dof(std::span<const DepthFeature> features, const Rotation& r0,
                            const Vec3& t0, const CameraModel& cam, const RobustCost& robust,
                            const LMConfig& lm) {
  if (features.size() < 6) {
    throw std::invalid_argument("Baseline6Dof: requires at least 6 features");
  }
  LMProblem<Pose> problem;
  problem.tangent_dim = 6;
  problem.residual = [&](const Pose& p) -> Eigen::VectorXd {
    return RobustReprojectionResiduals(features, p.rotation, p.translation, cam, robust);
  };
  problem.retract = [](const Pose& p, const Eigen::VectorXd& d) -> Pose {
    return {p.rotation.Retract(d.head<3>()), p.translation + d.tail<3>()};
  };
  const LMResult<Pose> res = LevenbergMarquardt(lm).Minimize(problem, Pose{r0, t0});
  return {res.point.rotation, res.point.translation, res.status};
}

double Percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("Percentile: empty input");
  if (!(p >= 0.0) || !(p <= 1.0)) throw std::invalid_argument("Percentile: p must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

WhiskerStats Whisker(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("Whisker: empty input");
  return {Percentile(values, 0.05), Percentile(values, 0.25), Percentile(values, 0.50),
          Percentile(values, 0.75), Percentile(values, 0.95)};
}

double Median(std::vector<double> values) { return Percentile(std::move(values), 0.5); }

TrialResult TrajectoryErrorMetrics(std::span<const Pose> estimated,
                                   std::span<const Pose> ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw std::invalid_argument("TrajectoryErrorMetrics: trajectories differ in length");
  }
  if (estimated.empty()) throw std::invalid_argument("TrajectoryErrorMetrics: empty trajectory");
  const std::size_t n = estimated.size();
  TrialResult out;

  std::vector<Vec3> c_est(n), c_gt(n);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    c_est[k] = estimated[k].center();
    c_gt[k] = ground_truth[k].center();
    num += c_est[k].dot(c_gt[k]);
    den += c_est[k].squaredNorm();
  }
  out.scale = den > 0.0 ? num / den : 1.0;

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out.max_rot_displacement_deg =
          std::max(out.max_rot_displacement_deg,
                   ground_truth[i].rotation.AngleTo(ground_truth[j].rotation) * kRadToDeg);
      out.max_trans_displacement =
          std::max(out.max_trans_displacement, (c_gt[i] - c_gt[j]).norm());
    }
  }

  auto pct = [](double err, double disp) { return disp > 0.0 ? 100.0 * err / disp : 0.0; };
  for (std::size_t k = 0; k < n; ++k) {
    const double re = estimated[k].rotation.AngleTo(ground_truth[k].rotation) * kRadToDeg;
    const double te = (out.scale * c_est[k] - c_gt[k]).norm();
    out.rot_err_deg.push_back(re);
    out.trans_err.push_back(te);
    out.rot_err_pct_per_frame.push_back(pct(re, out.max_rot_displacement_deg));
    out.trans_err_pct_per_frame.push_back(pct(te, out.max_trans_displacement));
  }
  out.rot_err_pct = *std::max_element(out.rot_err_pct_per_frame.begin(),
                                      out.rot_err_pct_per_frame.end());
  out.trans_err_pct = *std::max_element(out.trans_err_pct_per_frame.begin(),
                                        out.trans_err_pct_per_frame.end());
  return out;
}

double DirectionErrorDeg(const Vec3& estimated, const Vec3& truth) {
  return std::atan2(estimated.cross(truth).norm(), std::abs(estimated.dot(truth))) * kRadToDeg;
}

std::string_view ToString(DepthMode mode) {
  switch (mode) {
    case DepthMode::kConstant: return "constant";
    case DepthMode::kKnown: return "known";
  }
  return "unknown";
}

std::string_view ToString(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kFivePlusOne: return "5+1dof";
    case EstimatorKind::kSixDof: return "6dof";
  }
  return "unknown";
}

std::vector<Pose> RunKeyframeTrial(const Scene& scene, EstimatorKind estimator,
                                   const TrialSetup& setup) {
  const SceneConfig& cfg = scene.config;
  const std::uint64_t obs_seed = MixSeed(cfg.seed, 1);
  std::vector<Pose> out(scene.poses.size());

  Rotation prev_r;
  Vec3 prev_t = Vec3::Zero();
  UnitDirection prev_u;
  double prev_s = 0.0;
  std::mt19937_64 rng(MixSeed(cfg.seed, 2));

  for (int k = 1; k < static_cast<int>(scene.poses.size()); ++k) {
    const SyntheticPairs obs =
        SynthObservations(scene, k, cfg.pixel_sigma, cfg.outlier_rate, obs_seed);
    std::vector<DepthFeature> features;
    features.reserve(obs.pairs.size());
    for (std::size_t i = 0; i < obs.pairs.size(); ++i) {
      const double d =
          setup.depth_mode == DepthMode::kKnown ? obs.depths[i] : setup.constant_depth;
      features.push_back({obs.pairs[i].f, obs.pairs[i].f_prime, d, FeatureSigma(cfg.pixel_sigma)});
    }

    if (estimator == EstimatorKind::kSixDof) {
      if (features.size() < 6) {
        out[k] = out[k - 1];
        continue;
      }
      const BaselineResult res =
          Baseline6Dof(features, prev_r, prev_t, cfg.camera, setup.robust, setup.lm);
      prev_r = res.rotation;
      prev_t = res.translation;
      out[k] = {prev_r, prev_t};
      continue;
    }

    if (obs.pairs.size() < 10) {
      out[k] = out[k - 1];
      continue;
    }
    Rotation r;
    UnitDirection u;
    std::vector<DepthFeature> mag_features;
    if (cfg.outlier_rate > 0.0) {
      RansacConfig rc;
      const RelPoseResult res =
          RansacRelativePose(obs.pairs, prev_r, setup.weights, rc, setup.lm, rng);
      r = res.rotation;
      u = res.direction;
      for (std::size_t i = 0; i < features.size(); ++i) {
        if (res.inlier_mask[i]) mag_features.push_back(features[i]);
      }
    } else {
      const DirectionEstimate seed_dir =
          TranslationFromRotation(EpipolarNormalCovariance(prev_r, obs.pairs));
      const RefineResult res =
          RefineRelativePose(obs.pairs, prev_r, seed_dir.direction, setup.weights, setup.lm);
      r = res.rotation;
      u = res.direction;
      mag_features = features;
    }
    const double s0 = MagnitudeInitialGuess(prev_s, prev_u, u, k == 1);
    const MagnitudeResult mag =
        EstimateMagnitude(mag_features, r, u, s0, cfg.camera, setup.robust, setup.lm);
    prev_r = r;
    prev_u = u;
    prev_s = mag.s;
    out[k] = {r, u.vector() * mag.s};
  }
  return out;
}

RelPoseTrialResult RunRelPoseTrial(const CorrespondenceRecord& record, double gamma,
                                   const SolverWeights& weights, const LMConfig& lm) {
  RelPoseTrialResult out;
  const Rotation guess = PerturbedGuess(record.gt_rotation, GuessConfig{gamma});
  const UnitDirection u0 =
      TranslationFromRotation(EpipolarNormalCovariance(guess, record.bearings)).direction;
  const RefineResult res = RefineRelativePose(record.bearings, guess, u0, weights, lm);
  const bool has_translation = record.gt_translation.norm() > 0.0;
  out.rot_err_deg = res.rotation.AngleTo(record.gt_rotation) * kRadToDeg;
  out.guess_rot_err_deg = guess.AngleTo(record.gt_rotation) * kRadToDeg;
  if (has_translation) {
    out.dir_err_deg = DirectionErrorDeg(res.direction.vector(), record.gt_translation);
    out.guess_dir_err_deg = DirectionErrorDeg(u0.vector(), record.gt_translation);
  }
  out.status = res.status;
  return out;
}

std::vector<CorrespondenceRecord> SynthesizeRecords(const SceneConfig& base, int count,
                                                    bool noiseless,
                                                    std::string_view sequence_name) {
  if (count < 0) throw std::invalid_argument("SynthesizeRecords: count must be >= 0");
  std::vector<CorrespondenceRecord> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    SceneConfig cfg = base;
    cfg.seed = MixSeed(base.seed, static_cast<std::uint64_t>(i));
    const Scene scene = GenerateScene(cfg);
    std::mt19937_64 rng(MixSeed(cfg.seed, 3));
    std::uniform_int_distribution<int> pick(cfg.n_frames / 2, cfg.n_frames - 1);
    const int frame = pick(rng);
    const SyntheticPairs obs =
        SynthObservations(scene, frame, noiseless ? 0.0 : cfg.pixel_sigma,
                          noiseless ? 0.0 : cfg.outlier_rate, MixSeed(cfg.seed, 1));
    if (obs.pairs.size() < static_cast<std::size_t>(kMinPairsPerRecord)) {
      throw std::runtime_error("SynthesizeRecords: too few shared landmarks in record " +
                               std::to_string(i));
    }
    CorrespondenceRecord rec;
    rec.pair_id = std::string(sequence_name) + "-" + std::to_string(i);
    rec.source_sequence = std::string(sequence_name);
    rec.bearings = obs.pairs;
    rec.gt_rotation = scene.poses[frame].rotation;
    rec.gt_translation = scene.poses[frame].translation;
    rec.noiseless = noiseless;
    out.push_back(std::move(rec));
  }
  return out;
}

SceneObservationProvider::SceneObservationProvider(const Scene& scene, double pixel_sigma,
                                                   std::uint64_t seed,
                                                   bool provide_rotation_prior)
    : scene_(scene), pixel_sigma_(pixel_sigma), seed_(seed), provide_prior_(provide_rotation_prior) {}

std::optional<FrameObservations> SceneObservationProvider::Next() {
  if (next_frame_ >= static_cast<int>(scene_.poses.size())) return std::nullopt;
  const int k = next_frame_++;
  FrameObservations frame;
  frame.frame_index = k;
  for (int l : scene_.VisibleLandmarks(k)) {
    frame.observations.push_back({static_cast<TrackId>(l),
                                  NoisyBearing(scene_, k, l, pixel_sigma_, seed_)});
  }
  if (provide_prior_ && k > 0) {
    frame.rotation_prior = scene_.poses[k].rotation * scene_.poses[k - 1].rotation.inverse();
  }
  return frame;
}

}  // namespace instavo
