#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "instavo/dataset.h"
#include "instavo/pipeline.h"
#include "instavo/synthlab.h"

namespace instavo::tools {

// --jobs if given, else VO_BENCH_JOBS, else the hardware concurrency.
int ResolveJobs(std::optional<int> requested);

// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any call is rethrown after all workers finish.
template <typename Fn>
void ParallelFor(int n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

struct EstimatorTrial {
  int trial = 0;
  DepthMode depth_mode = DepthMode::kConstant;
  EstimatorKind estimator = EstimatorKind::kFivePlusOne;
  TrialResult metrics;
};

// Keyframe-to-frame trajectories from both estimators on one scene per
// trial (scene seed MixSeed(seed, trial)). Ordered by trial, depth mode,
// estimator.
std::vector<EstimatorTrial> CompareEstimators(const SceneConfig& base, const TrialSetup& setup,
                                              int trials, std::span<const DepthMode> modes,
                                              std::uint64_t seed, int jobs);

// Mean over trials of the per-frame percent errors, for one estimator and
// depth mode.
struct PerFrameMean {
  std::vector<double> rot_err_pct;
  std::vector<double> trans_err_pct;
};
PerFrameMean MeanPerFrame(std::span<const EstimatorTrial> trials, DepthMode mode,
                          EstimatorKind estimator);

struct RecordTrial {
  int record = 0;
  double sweep_value = 0.0;
  RelPoseTrialResult result;
};

// Two-view refinement of every record at every gamma. Ordered by gamma,
// then record.
std::vector<RecordTrial> SweepGuess(std::span<const CorrespondenceRecord> records,
                                    std::span<const double> gammas,
                                    const SolverWeights& weights, const LMConfig& lm,
                                    int jobs);

// As above over functional weights at a fixed gamma.
std::vector<RecordTrial> SweepWeight(std::span<const CorrespondenceRecord> records,
                                     std::span<const double> weights, double gamma,
                                     const LMConfig& lm, int jobs);

// Median rotation error of the trials at one sweep value.
double MedianRotationError(std::span<const RecordTrial> trials, double sweep_value);

// Records from the low-parallax preset, one scene per record.
std::vector<CorrespondenceRecord> LowParallaxRecords(int count, bool noiseless,
                                                     std::uint64_t seed);

struct VoSession {
  std::vector<Pose> estimated;
  std::vector<Pose> ground_truth;
  std::vector<FrameDiagnostics> diagnostics;
  std::vector<double> rot_err_deg;
  // Norm of the estimated camera center per frame.
  std::vector<double> center_norm;
  TrialResult metrics;
};

// Streams a synthetic scene through VisualOdometry. The observation seed is
// MixSeed(scene.config.seed, 1) and the tracker seed MixSeed(.., 2).
VoSession RunVoSession(const Scene& scene, VoConfig config, bool rotation_prior);

}  // namespace instavo::tools
