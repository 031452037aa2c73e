// Acceptance suite: one PASS/FAIL line per criterion; nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cli.h"
#include "experiments.h"
#include "instavo/relpose.h"
#include "instavo/synthlab.h"
#include "instavo/transmag.h"
#include "test_support.h"

namespace {

using namespace instavo;
using namespace instavo::tools;

constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

int Jobs() { return ResolveJobs(std::nullopt); }

double Ratio(double a, double b) { return std::max(a, b) / std::min(a, b); }

struct EstimatorStudy {
  std::vector<EstimatorTrial> trials;
  double seconds = 0.0;

  double MedianOf(DepthMode mode, EstimatorKind est, bool rotation) const {
    std::vector<double> v;
    for (const EstimatorTrial& t : trials) {
      if (t.depth_mode == mode && t.estimator == est) {
        v.push_back(rotation ? t.metrics.rot_err_pct : t.metrics.trans_err_pct);
      }
    }
    return Median(v);
  }
};

const EstimatorStudy& Study() {
  static const EstimatorStudy study = [] {
    EstimatorStudy s;
    const std::vector<DepthMode> modes = {DepthMode::kConstant, DepthMode::kKnown};
    const auto start = std::chrono::steady_clock::now();
    s.trials = CompareEstimators(SceneConfig{}, TrialSetup{}, 50, modes, kSeed, Jobs());
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return s;
  }();
  return study;
}

Outcome DepthUnknownComparison() {
  const EstimatorStudy& s = Study();
  const auto five = EstimatorKind::kFivePlusOne;
  const auto six = EstimatorKind::kSixDof;
  const double t5 = s.MedianOf(DepthMode::kConstant, five, false);
  const double t6 = s.MedianOf(DepthMode::kConstant, six, false);
  const double r5 = s.MedianOf(DepthMode::kConstant, five, true);
  const double r6 = s.MedianOf(DepthMode::kConstant, six, true);
  // Both depth modes run inside the timed study, so this bounds the runtime
  // from above.
  const bool pass = 2.0 * t5 <= t6 && r5 < r6 && s.seconds < 300.0;
  return {pass, Format("median trans %.2f%% vs %.2f%% (need >= 2x), rot %.2f%% vs %.2f%%, "
                       "runtime %.1fs (< 300s)",
                       t5, t6, r5, r6, s.seconds)};
}

Outcome DepthKnownComparison() {
  const EstimatorStudy& s = Study();
  const auto five = EstimatorKind::kFivePlusOne;
  const auto six = EstimatorKind::kSixDof;
  const double r5 = s.MedianOf(DepthMode::kKnown, five, true);
  const double r6 = s.MedianOf(DepthMode::kKnown, six, true);
  const double t5 = s.MedianOf(DepthMode::kKnown, five, false);
  const double t6 = s.MedianOf(DepthMode::kKnown, six, false);
  const bool pass = Ratio(r5, r6) <= 1.5 && Ratio(t5, t6) <= 1.5;
  return {pass, Format("median rot %.2f%% vs %.2f%% (ratio %.2f), trans %.2f%% vs %.2f%% "
                       "(ratio %.2f), need <= 1.5",
                       r5, r6, Ratio(r5, r6), t5, t6, Ratio(t5, t6))};
}

Outcome PerFrameErrorGrowth() {
  const EstimatorStudy& s = Study();
  const PerFrameMean five =
      MeanPerFrame(s.trials, DepthMode::kConstant, EstimatorKind::kFivePlusOne);
  const PerFrameMean six = MeanPerFrame(s.trials, DepthMode::kConstant, EstimatorKind::kSixDof);
  const std::size_t last = five.rot_err_pct.size() - 1;
  double band = 0.0;
  // Frame 0 is the reference itself and carries no error.
  for (std::size_t k = 1; k <= last; ++k) {
    band = std::max({band, Ratio(five.rot_err_pct[k], five.rot_err_pct[5]),
                     Ratio(five.trans_err_pct[k], five.trans_err_pct[5])});
  }
  const double growth_rot = six.rot_err_pct[last] / six.rot_err_pct[5];
  const double growth_trans = six.trans_err_pct[last] / six.trans_err_pct[5];
  const bool pass = band <= 3.0 && growth_rot >= 4.0 && growth_trans >= 4.0;
  return {pass, Format("5+1 worst ratio to frame 5: %.2f (need <= 3); 6-DoF last/frame-5: "
                       "rot %.2f, trans %.2f (need >= 4)",
                       band, growth_rot, growth_trans)};
}

const std::vector<CorrespondenceRecord>& SweepRecords() {
  static const std::vector<CorrespondenceRecord> records = LowParallaxRecords(500, false, kSeed);
  return records;
}

Outcome WeightSweep() {
  const std::vector<double> weights = {0.0, 15.0, 50.0, 250.0, 1e5};
  const auto trials = SweepWeight(SweepRecords(), weights, 0.3, LMConfig{}, Jobs());
  const double w0 = MedianRotationError(trials, 0.0);
  const double w15 = MedianRotationError(trials, 15.0);
  const double w50 = MedianRotationError(trials, 50.0);
  const double w250 = MedianRotationError(trials, 250.0);
  const double huge = MedianRotationError(trials, 1e5);
  const double spread = std::max({w15, w50, w250}) / std::min({w15, w50, w250});
  const bool pass = w0 > w50 && spread <= 2.0 && huge > w50;
  return {pass, Format("median rot err W=0 %.3f, 15 %.3f, 50 %.3f, 250 %.3f, 1e5 %.3f deg; "
                       "spread over 15..250 %.2f (need <= 2)",
                       w0, w15, w50, w250, huge, spread)};
}

Outcome GuessSweep() {
  const std::vector<double> gammas = {0.0, 0.3, 0.9};
  const auto trials = SweepGuess(SweepRecords(), gammas, SolverWeights{}, LMConfig{}, Jobs());
  const double g0 = MedianRotationError(trials, 0.0);
  const double g3 = MedianRotationError(trials, 0.3);
  const double g9 = MedianRotationError(trials, 0.9);
  const bool pass = g3 <= 2.0 * g0 && g9 >= 5.0 * g0;
  return {pass, Format("median rot err gamma 0: %.3f, 0.3: %.3f (x%.2f, need <= 2), "
                       "0.9: %.3f (x%.2f, need >= 5)",
                       g0, g3, g3 / g0, g9, g9 / g0)};
}

std::vector<BearingPair> RandomPairs(int n, std::mt19937_64& rng) {
  std::vector<BearingPair> pairs;
  for (int i = 0; i < n; ++i) {
    pairs.push_back({Bearing::FromVector(testing::RandomUnit(rng)),
                     Bearing::FromVector(testing::RandomUnit(rng))});
  }
  return pairs;
}

Outcome QuadraticForm() {
  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> count(5, 200);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto pairs = RandomPairs(count(rng), rng);
    const Rotation r = testing::RandomRotation(rng);
    const Vec3 u = testing::RandomUnit(rng);
    const double direct = testing::DirectFunctional(pairs, r, u);
    const double value = FunctionalValue(BuildDataMatrix(pairs), r, UnitDirection::FromVector(u));
    worst = std::max(worst, std::abs(value - direct) / direct);
  }
  return {worst <= 1e-10, Format("worst relative error %.2e over 1000 draws (need <= 1e-10)", worst)};
}

Outcome GradientSuite() {
  std::mt19937_64 rng(kSeed + 1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto pairs = RandomPairs(30, rng);
    const DataMatrix c = BuildDataMatrix(pairs);
    const RelPoseState s{testing::RandomRotation(rng),
                         UnitDirection::FromVector(testing::RandomUnit(rng))};
    const Vec6 res = ResidualVector(c, s.rotation, s.direction, SolverWeights{});
    Vec5 fd;
    for (int j = 0; j < 5; ++j) {
      Tangent5 plus, minus;
      if (j < 3) {
        plus.theta[j] = h;
        minus.theta[j] = -h;
      } else {
        plus.beta[j - 3] = h;
        minus.beta[j - 3] = -h;
      }
      const RelPoseState a = s.Retract(plus), b = s.Retract(minus);
      fd[j] = (FunctionalValue(c, a.rotation, a.direction) -
               FunctionalValue(c, b.rotation, b.direction)) / (2.0 * h);
    }
    worst = std::max(worst, (res.head<5>() - fd).norm() / fd.norm());
  }
  double worst_retract = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const UnitDirection u = UnitDirection::FromVector(testing::RandomUnit(rng));
    const Eigen::Matrix<double, 3, 2> basis = u.TangentBasis();
    for (int j = 0; j < 2; ++j) {
      Vec2 beta = Vec2::Zero();
      beta[j] = h;
      const Vec3 fd = (u.Retract(beta).vector() - u.Retract(-beta).vector()) / (2.0 * h);
      worst_retract = std::max(worst_retract, (fd - basis.col(j)).norm());
    }
  }
  const bool pass = worst < 1e-5 && worst_retract < 1e-6;
  return {pass, Format("gradient worst relative error %.2e (need < 1e-5); retraction Jacobian "
                       "worst error %.2e (need < 1e-6)",
                       worst, worst_retract)};
}

Outcome NoiselessRecovery() {
  double worst_rot = 0.0, worst_dir = 0.0, worst_s = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    SceneConfig cfg;
    cfg.seed = MixSeed(kSeed, static_cast<std::uint64_t>(trial));
    cfg.n_landmarks = 400;
    const Scene scene = GenerateScene(cfg);
    const int frame = 20;
    SyntheticPairs obs = SynthObservations(scene, frame, 0.0, 0.0, 1);
    if (obs.pairs.size() < 100) throw std::runtime_error("fewer than 100 visible pairs");
    obs.pairs.resize(100);
    obs.depths.resize(100);
    const Pose& truth = scene.poses[frame];

    CorrespondenceRecord rec;
    rec.bearings = obs.pairs;
    rec.gt_rotation = truth.rotation;
    rec.gt_translation = truth.translation;
    rec.noiseless = true;
    const Rotation r0 = PerturbedGuess(truth.rotation, {0.1});
    const UnitDirection u0 =
        TranslationFromRotation(EpipolarNormalCovariance(r0, rec.bearings)).direction;
    const RefineResult est = RefineRelativePose(rec.bearings, r0, u0, SolverWeights{}, LMConfig{});
    worst_rot = std::max(worst_rot, est.rotation.AngleTo(truth.rotation) * kRadToDeg);
    worst_dir = std::max(worst_dir, DirectionErrorDeg(est.direction.vector(), truth.translation));

    std::vector<DepthFeature> features;
    for (std::size_t i = 0; i < obs.pairs.size(); ++i) {
      features.push_back({obs.pairs[i].f, obs.pairs[i].f_prime, obs.depths[i], 1.0});
    }
    const MagnitudeResult mag = EstimateMagnitude(features, est.rotation, est.direction, 0.0,
                                                  cfg.camera, RobustCost{}, LMConfig{});
    const double sign = est.direction.vector().dot(truth.translation) < 0.0 ? -1.0 : 1.0;
    worst_s = std::max(worst_s, std::abs(sign * mag.s - truth.translation.norm()));
  }
  const bool pass = worst_rot < 0.01 && worst_dir < 0.1 && worst_s < 1e-6;
  return {pass, Format("20 scenes, 100 pairs, gamma 0.1: worst rot %.2e deg (< 0.01), dir %.2e "
                       "deg (< 0.1), |s - s_true| %.2e (< 1e-6)",
                       worst_rot, worst_dir, worst_s)};
}

Outcome PureRotationSession() {
  constexpr int kSessions = 5;
  double worst_rot = 0.0, worst_center = 0.0;
  bool finite = true;
  int lost = 0;
  const VoConfig vo;
  for (int trial = 0; trial < kSessions; ++trial) {
    SceneConfig cfg;
    cfg.seed = MixSeed(kSeed, static_cast<std::uint64_t>(trial));
    cfg.motion = MotionProfile::kPureRotation;
    cfg.total_translation_m = 0.0;
    cfg.n_frames = 60;
    cfg.total_rotation_deg = 40.0;
    VoConfig run = vo;
    run.camera = cfg.camera;
    const VoSession s = RunVoSession(GenerateScene(cfg), run, false);
    for (std::size_t k = 0; k < s.estimated.size(); ++k) {
      worst_rot = std::max(worst_rot, s.rot_err_deg[k]);
      worst_center = std::max(worst_center, s.center_norm[k]);
      finite &= std::isfinite(s.rot_err_deg[k]) && std::isfinite(s.center_norm[k]);
      lost += s.diagnostics[k].tracking_lost;
    }
  }
  // Translation is in the odometry's own units, where the assumed scene
  // depth is vo.constant_depth.
  const double limit = 0.01 * vo.constant_depth;
  const bool pass = finite && lost == 0 && worst_rot < 0.5 && worst_center < limit;
  return {pass, Format("%d sessions x 60 frames, 40 deg: worst rot err %.3f deg (< 0.5), "
                       "max |t| %.4f (< %.4f), lost frames %d",
                       kSessions, worst_rot, worst_center, limit, lost)};
}

Outcome RansacRobustness() {
  std::vector<double> clean, dirty, recall;
  for (int trial = 0; trial < 50; ++trial) {
    SceneConfig cfg;
    cfg.seed = MixSeed(kSeed, static_cast<std::uint64_t>(trial));
    const Scene scene = GenerateScene(cfg);
    const int frame = 20;
    const Rotation& truth = scene.poses[frame].rotation;
    std::mt19937_64 prior_rng(MixSeed(cfg.seed, 9));
    const Rotation prior = PerturbRotation(truth, 1.0, prior_rng);
    for (double rate : {0.0, 0.3}) {
      const SyntheticPairs obs =
          SynthObservations(scene, frame, cfg.pixel_sigma, rate, MixSeed(cfg.seed, 1));
      std::mt19937_64 rng(MixSeed(cfg.seed, 5));
      const RelPoseResult r =
          RansacRelativePose(obs.pairs, prior, SolverWeights{}, RansacConfig{}, LMConfig{}, rng);
      const double err = r.rotation.AngleTo(truth) * kRadToDeg;
      if (rate == 0.0) {
        clean.push_back(err);
        continue;
      }
      dirty.push_back(err);
      int kept = 0, inliers = 0;
      for (std::size_t i = 0; i < obs.pairs.size(); ++i) {
        if (obs.is_outlier[i]) continue;
        ++inliers;
        kept += r.inlier_mask[i];
      }
      recall.push_back(static_cast<double>(kept) / inliers);
    }
  }
  const double med_recall = Median(recall);
  const double ratio = Median(dirty) / Median(clean);
  const bool pass = med_recall >= 0.95 && ratio <= 1.5;
  return {pass, Format("50 trials, 30%% outliers: median recall %.3f (>= 0.95), min %.3f; median "
                       "rot err %.3f vs clean %.3f deg (x%.2f, need <= 1.5)",
                       med_recall, *std::min_element(recall.begin(), recall.end()), Median(dirty),
                       Median(clean), ratio)};
}

std::string RunToString(std::vector<std::string> args, const std::filesystem::path& out) {
  args.push_back("--out");
  args.push_back(out.string());
  std::ostringstream sink;
  if (Run(args, sink, sink) != kExitOk) return "<exit " + sink.str() + ">";
  std::ifstream in(out, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome CliDeterminism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "instavo_determinism";
  fs::create_directories(dir);
  const fs::path dataset = dir / "records.txt";
  const std::vector<std::vector<std::string>> commands = {
      {"compare-estimators", "--trials", "4"},
      {"error-per-frame", "--trials", "3"},
      {"sweep-guess", "--trials", "40", "--gammas", "0,0.3,0.9"},
      {"sweep-weight", "--trials", "40", "--weights", "0,50,1000"},
      {"run-vo", "--trials", "2", "--frames", "20"},
      {"dataset-convert", "--from", "synthetic", "--records", "30"},
      {"dataset-eval", "--dataset", dataset.string()},
  };
  int identical = 0;
  std::string failed;
  for (const auto& cmd : commands) {
    if (cmd[0] == "dataset-eval") RunToString({"dataset-convert", "--from", "synthetic"}, dataset);
    std::vector<std::string> one = cmd, many = cmd;
    one.insert(one.end(), {"--jobs", "1"});
    many.insert(many.end(), {"--jobs", "4"});
    const std::string a = RunToString(one, dir / "a.csv");
    const std::string b = RunToString(many, dir / "b.csv");
    const std::string c = RunToString(one, dir / "c.csv");
    if (!a.empty() && a[0] != '<' && a == b && a == c) {
      ++identical;
    } else {
      failed += " " + cmd[0];
    }
  }
  fs::remove_all(dir);
  const bool pass = identical == static_cast<int>(commands.size());
  return {pass, Format("%d/%zu subcommands byte-identical across repeats and job counts%s%s",
                       identical, commands.size(), failed.empty() ? "" : "; differing:",
                       failed.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"depth-unknown-comparison", DepthUnknownComparison},
      {"depth-known-comparison", DepthKnownComparison},
      {"per-frame-error-growth", PerFrameErrorGrowth},
      {"weight-sweep", WeightSweep},
      {"guess-sweep", GuessSweep},
      {"quadratic-form-oracle", QuadraticForm},
      {"gradient-suite", GradientSuite},
      {"noiseless-exact-recovery", NoiselessRecovery},
      {"pure-rotation-session", PureRotationSession},
      {"ransac-robustness", RansacRobustness},
      {"cli-determinism", CliDeterminism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
