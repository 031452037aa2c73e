#include "experiments.h"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace instavo::tools {

int ResolveJobs(std::optional<int> requested) {
  if (requested && *requested >= 1) return *requested;
  if (const char* env = std::getenv("VO_BENCH_JOBS")) {
    try {
      const int jobs = std::stoi(env);
      if (jobs >= 1) return jobs;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<EstimatorTrial> CompareEstimators(const SceneConfig& base, const TrialSetup& setup,
                                              int trials, std::span<const DepthMode> modes,
                                              std::uint64_t seed, int jobs) {
  constexpr EstimatorKind kEstimators[] = {EstimatorKind::kFivePlusOne, EstimatorKind::kSixDof};
  const std::size_t per_trial = modes.size() * std::size(kEstimators);
  std::vector<EstimatorTrial> out(static_cast<std::size_t>(trials) * per_trial);
  ParallelFor(trials, jobs, [&](int trial) {
    SceneConfig config = base;
    config.seed = MixSeed(seed, static_cast<std::uint64_t>(trial));
    const Scene scene = GenerateScene(config);
    std::size_t slot = static_cast<std::size_t>(trial) * per_trial;
    for (DepthMode mode : modes) {
      TrialSetup s = setup;
      s.depth_mode = mode;
      for (EstimatorKind estimator : kEstimators) {
        const std::vector<Pose> estimated = RunKeyframeTrial(scene, estimator, s);
        out[slot++] = {trial, mode, estimator, TrajectoryErrorMetrics(estimated, scene.poses)};
      }
    }
  });
  return out;
}

PerFrameMean MeanPerFrame(std::span<const EstimatorTrial> trials, DepthMode mode,
                          EstimatorKind estimator) {
  PerFrameMean mean;
  int count = 0;
  for (const EstimatorTrial& t : trials) {
    if (t.depth_mode != mode || t.estimator != estimator) continue;
    const std::size_t n = t.metrics.rot_err_pct_per_frame.size();
    mean.rot_err_pct.resize(n, 0.0);
    mean.trans_err_pct.resize(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      mean.rot_err_pct[k] += t.metrics.rot_err_pct_per_frame[k];
      mean.trans_err_pct[k] += t.metrics.trans_err_pct_per_frame[k];
    }
    ++count;
  }
  for (double& v : mean.rot_err_pct) v /= count;
  for (double& v : mean.trans_err_pct) v /= count;
  return mean;
}

namespace {

template <typename Trial>
std::vector<RecordTrial> Sweep(std::span<const CorrespondenceRecord> records,
                               std::span<const double> values, int jobs, Trial&& trial) {
  const int n = static_cast<int>(records.size());
  std::vector<RecordTrial> out(values.size() * records.size());
  ParallelFor(static_cast<int>(out.size()), jobs, [&](int i) {
    const std::size_t v = static_cast<std::size_t>(i / n);
    const int r = i % n;
    out[static_cast<std::size_t>(i)] = {r, values[v], trial(records[r], values[v])};
  });
  return out;
}

}  // namespace

std::vector<RecordTrial> SweepGuess(std::span<const CorrespondenceRecord> records,
                                    std::span<const double> gammas,
                                    const SolverWeights& weights, const LMConfig& lm,
                                    int jobs) {
  return Sweep(records, gammas, jobs, [&](const CorrespondenceRecord& rec, double gamma) {
    return RunRelPoseTrial(rec, gamma, weights, lm);
  });
}

std::vector<RecordTrial> SweepWeight(std::span<const CorrespondenceRecord> records,
                                     std::span<const double> weights, double gamma,
                                     const LMConfig& lm, int jobs) {
  return Sweep(records, weights, jobs, [&](const CorrespondenceRecord& rec, double w) {
    return RunRelPoseTrial(rec, gamma, SolverWeights{w}, lm);
  });
}

double MedianRotationError(std::span<const RecordTrial> trials, double sweep_value) {
  std::vector<double> errors;
  for (const RecordTrial& t : trials) {
    if (t.sweep_value == sweep_value) errors.push_back(t.result.rot_err_deg);
  }
  return Median(std::move(errors));
}

std::vector<CorrespondenceRecord> LowParallaxRecords(int count, bool noiseless,
                                                     std::uint64_t seed) {
  SceneConfig config = LowParallaxRecordConfig();
  config.seed = seed;
  return SynthesizeRecords(config, count, noiseless, "lowparallax");
}

VoSession RunVoSession(const Scene& scene, VoConfig config, bool rotation_prior) {
  config.seed = MixSeed(scene.config.seed, 2);
  VisualOdometry vo(config);
  SceneObservationProvider provider(scene, scene.config.pixel_sigma,
                                    MixSeed(scene.config.seed, 1), rotation_prior);
  VoSession session;
  while (std::optional<FrameObservations> frame = provider.Next()) {
    const FrameResult result = vo.ProcessFrame(*frame);
    const Pose& truth = scene.poses.at(static_cast<std::size_t>(frame->frame_index));
    session.estimated.push_back(result.pose);
    session.ground_truth.push_back(truth);
    session.diagnostics.push_back(result.diagnostics);
    session.rot_err_deg.push_back(result.pose.rotation.AngleTo(truth.rotation) * kRadToDeg);
    session.center_norm.push_back(result.pose.center().norm());
  }
  session.metrics = TrajectoryErrorMetrics(session.estimated, session.ground_truth);
  return session;
}

}  // namespace instavo::tools
