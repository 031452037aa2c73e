#include "cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "CLI11.hpp"
#include "experiments.h"
#include "instavo/dataset.h"
#include "instavo/synthlab.h"

namespace instavo::tools {

namespace {

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string Str(std::string_view s) { return std::string(s); }

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::ostream& summary_out)
      : out_(path, std::ios::binary), summary_out_(summary_out), path_(path) {
    if (!out_) throw std::runtime_error("cannot open output file " + path.string());
  }

  void Row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  // "# summary,group,metric,n,mean,p5,p25,p50,p75,p95", echoed to stdout.
  void Summary(const std::string& group, const std::string& metric, std::vector<double> values) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    if (values.empty()) return;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    const WhiskerStats w = Whisker(values);
    Row({"# summary", group, metric, std::to_string(values.size()), Fmt(mean), Fmt(w.p5),
         Fmt(w.p25), Fmt(w.p50), Fmt(w.p75), Fmt(w.p95)});
    char line[256];
    std::snprintf(line, sizeof line,
                  "%-28s %-16s n=%-5zu P5 %-10.4g P25 %-10.4g P50 %-10.4g P75 %-10.4g P95 %.4g\n",
                  group.c_str(), metric.c_str(), values.size(), w.p5, w.p25, w.p50, w.p75, w.p95);
    summary_out_ << line;
  }

  void Close() {
    out_.close();
    if (!out_) throw std::runtime_error("failed writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::ostream& summary_out_;
  std::filesystem::path path_;
};

struct CommonOptions {
  std::uint64_t seed = 42;
  std::optional<int> jobs;
  std::string out;
  int trials = 50;
};

void AddCommon(CLI::App* cmd, CommonOptions& opt, int default_trials, bool with_trials = true) {
  opt.trials = default_trials;
  cmd->add_option("--seed", opt.seed, "Master seed")->capture_default_str();
  cmd->add_option("--jobs", opt.jobs, "Worker threads (default: VO_BENCH_JOBS or all cores)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", opt.out, "Output path")->required();
  if (with_trials) {
    cmd->add_option("--trials", opt.trials, "Number of trials")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
}

const std::map<std::string, MotionProfile> kMotions = {
    {"generic", MotionProfile::kGeneric},
    {"orbit", MotionProfile::kOrbit},
    {"pure-rotation", MotionProfile::kPureRotation},
    {"translation-only", MotionProfile::kTranslationOnly},
};

struct SceneOptions {
  SceneConfig scene;
  double constant_depth = 0.75;
  std::string depth_mode;
};

void AddScene(CLI::App* cmd, SceneOptions& opt, const std::string& default_mode) {
  opt.depth_mode = default_mode;
  SceneConfig& s = opt.scene;
  cmd->add_option("--frames", s.n_frames, "Frames per trajectory")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  cmd->add_option("--landmarks", s.n_landmarks, "Landmarks per scene")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--pixel-sigma", s.pixel_sigma, "Pixel noise standard deviation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--rotation-deg", s.total_rotation_deg, "Total rotation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--translation-m", s.total_translation_m, "Total translation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--motion", s.motion, "Trajectory shape")
      ->transform(CLI::CheckedTransformer(kMotions, CLI::ignore_case))
      ->default_str("generic");
  cmd->add_option("--constant-depth", opt.constant_depth, "Assumed depth")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--depth-mode", opt.depth_mode, "constant, known or both")
      ->check(CLI::IsMember({"constant", "known", "both"}))
      ->capture_default_str();
}

std::vector<DepthMode> DepthModes(const std::string& name) {
  if (name == "constant") return {DepthMode::kConstant};
  if (name == "known") return {DepthMode::kKnown};
  return {DepthMode::kConstant, DepthMode::kKnown};
}

std::string Group(DepthMode mode, EstimatorKind estimator) {
  return Str(ToString(mode)) + "/" + Str(ToString(estimator));
}

int CompareEstimatorsCmd(const CommonOptions& c, const SceneOptions& s, std::ostream& out) {
  TrialSetup setup;
  setup.constant_depth = s.constant_depth;
  const std::vector<DepthMode> modes = DepthModes(s.depth_mode);
  CsvWriter csv(c.out, out);
  const std::vector<EstimatorTrial> trials =
      CompareEstimators(s.scene, setup, c.trials, modes, c.seed, ResolveJobs(c.jobs));
  csv.Row({"experiment", "trial", "depth_mode", "estimator", "rot_err_pct", "trans_err_pct",
           "scale"});
  for (const EstimatorTrial& t : trials) {
    csv.Row({"compare-estimators", std::to_string(t.trial), Str(ToString(t.depth_mode)),
             Str(ToString(t.estimator)), Fmt(t.metrics.rot_err_pct),
             Fmt(t.metrics.trans_err_pct), Fmt(t.metrics.scale)});
  }
  for (DepthMode mode : modes) {
    for (EstimatorKind est : {EstimatorKind::kFivePlusOne, EstimatorKind::kSixDof}) {
      std::vector<double> rot, trans;
      for (const EstimatorTrial& t : trials) {
        if (t.depth_mode != mode || t.estimator != est) continue;
        rot.push_back(t.metrics.rot_err_pct);
        trans.push_back(t.metrics.trans_err_pct);
      }
      csv.Summary(Group(mode, est), "rot_err_pct", rot);
      csv.Summary(Group(mode, est), "trans_err_pct", trans);
    }
  }
  csv.Close();
  return kExitOk;
}

int ErrorPerFrameCmd(const CommonOptions& c, const SceneOptions& s, std::ostream& out) {
  TrialSetup setup;
  setup.constant_depth = s.constant_depth;
  const std::vector<DepthMode> modes = DepthModes(s.depth_mode);
  CsvWriter csv(c.out, out);
  const std::vector<EstimatorTrial> trials =
      CompareEstimators(s.scene, setup, c.trials, modes, c.seed, ResolveJobs(c.jobs));
  csv.Row({"experiment", "trial", "depth_mode", "estimator", "frame", "rot_err_deg", "trans_err",
           "rot_err_pct", "trans_err_pct"});
  for (const EstimatorTrial& t : trials) {
    const TrialResult& m = t.metrics;
    for (std::size_t k = 0; k < m.rot_err_deg.size(); ++k) {
      csv.Row({"error-per-frame", std::to_string(t.trial), Str(ToString(t.depth_mode)),
               Str(ToString(t.estimator)), std::to_string(k), Fmt(m.rot_err_deg[k]),
               Fmt(m.trans_err[k]), Fmt(m.rot_err_pct_per_frame[k]),
               Fmt(m.trans_err_pct_per_frame[k])});
    }
  }
  for (DepthMode mode : modes) {
    for (EstimatorKind est : {EstimatorKind::kFivePlusOne, EstimatorKind::kSixDof}) {
      for (int k = 0; k < s.scene.n_frames; ++k) {
        std::vector<double> rot, trans;
        for (const EstimatorTrial& t : trials) {
          if (t.depth_mode != mode || t.estimator != est) continue;
          rot.push_back(t.metrics.rot_err_pct_per_frame[k]);
          trans.push_back(t.metrics.trans_err_pct_per_frame[k]);
        }
        const std::string group = Group(mode, est) + "/frame=" + std::to_string(k);
        csv.Summary(group, "rot_err_pct", rot);
        csv.Summary(group, "trans_err_pct", trans);
      }
    }
  }
  csv.Close();
  return kExitOk;
}

struct RecordOptions {
  std::string dataset;
  int subsample = 0;
  bool noiseless = false;
  int max_iterations = LMConfig{}.max_iterations;
};

void AddRecords(CLI::App* cmd, RecordOptions& opt) {
  cmd->add_option("--dataset", opt.dataset,
                  "Correspondence file; without it --trials low-parallax records are synthesized")
      ->check(CLI::ExistingFile);
  cmd->add_option("--subsample", opt.subsample, "Records kept per sequence (0 keeps all)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--noiseless", opt.noiseless, "Synthesize noiseless records");
  cmd->add_option("--max-iterations", opt.max_iterations, "LM iteration budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::vector<CorrespondenceRecord> LoadRecords(const CommonOptions& c, const RecordOptions& r,
                                              std::ostream& err) {
  std::vector<CorrespondenceRecord> records;
  if (r.dataset.empty()) {
    records = LowParallaxRecords(c.trials, r.noiseless, c.seed);
  } else {
    std::vector<std::string> warnings;
    records = ReadDataset(std::filesystem::path(r.dataset), &warnings);
    for (const std::string& w : warnings) err << "warning: " << w << '\n';
  }
  if (r.subsample > 0) records = Subsample(records, r.subsample, c.seed);
  if (records.empty()) throw std::runtime_error("no records to evaluate");
  return records;
}

LMConfig MakeLm(const RecordOptions& r) {
  LMConfig lm;
  lm.max_iterations = r.max_iterations;
  return lm;
}

void WriteRecordTrials(CsvWriter& csv, const std::string& experiment, const std::string& column,
                       std::span<const double> values, std::span<const RecordTrial> trials,
                       std::span<const CorrespondenceRecord> records) {
  csv.Row({"experiment", "trial", column, "pair_id", "rot_err_deg", "dir_err_deg",
           "guess_rot_err_deg", "guess_dir_err_deg", "iterations", "termination"});
  for (const RecordTrial& t : trials) {
    const RelPoseTrialResult& r = t.result;
    csv.Row({experiment, std::to_string(t.record), Fmt(t.sweep_value), records[t.record].pair_id,
             Fmt(r.rot_err_deg), Fmt(r.dir_err_deg), Fmt(r.guess_rot_err_deg),
             Fmt(r.guess_dir_err_deg), std::to_string(r.status.iterations),
             Str(ToString(r.status.reason))});
  }
  for (double v : values) {
    std::vector<double> rot, dir;
    for (const RecordTrial& t : trials) {
      if (t.sweep_value != v) continue;
      rot.push_back(t.result.rot_err_deg);
      dir.push_back(t.result.dir_err_deg);
    }
    csv.Summary(column + "=" + Fmt(v), "rot_err_deg", rot);
    csv.Summary(column + "=" + Fmt(v), "dir_err_deg", dir);
  }
}

int SweepGuessCmd(const CommonOptions& c, const RecordOptions& r, const std::vector<double>& gammas,
                  double weight, std::ostream& out, std::ostream& err) {
  const std::vector<CorrespondenceRecord> records = LoadRecords(c, r, err);
  CsvWriter csv(c.out, out);
  const std::vector<RecordTrial> trials =
      SweepGuess(records, gammas, SolverWeights{weight}, MakeLm(r), ResolveJobs(c.jobs));
  WriteRecordTrials(csv, "sweep-guess", "gamma", gammas, trials, records);
  csv.Close();
  return kExitOk;
}

int SweepWeightCmd(const CommonOptions& c, const RecordOptions& r,
                   const std::vector<double>& weights, double gamma, std::ostream& out,
                   std::ostream& err) {
  const std::vector<CorrespondenceRecord> records = LoadRecords(c, r, err);
  CsvWriter csv(c.out, out);
  const std::vector<RecordTrial> trials =
      SweepWeight(records, weights, gamma, MakeLm(r), ResolveJobs(c.jobs));
  WriteRecordTrials(csv, "sweep-weight", "weight", weights, trials, records);
  csv.Close();
  return kExitOk;
}

struct VoOptions {
  bool gyro_prior = false;
  double outlier_rate = 0.0;
};

int RunVoCmd(const CommonOptions& c, const SceneOptions& s, const VoOptions& v,
             std::ostream& out) {
  CsvWriter csv(c.out, out);
  std::vector<VoSession> sessions(static_cast<std::size_t>(c.trials));
  ParallelFor(c.trials, ResolveJobs(c.jobs), [&](int trial) {
    SceneConfig config = s.scene;
    config.seed = MixSeed(c.seed, static_cast<std::uint64_t>(trial));
    config.outlier_rate = v.outlier_rate;
    if (config.motion == MotionProfile::kPureRotation) config.total_translation_m = 0.0;
    const Scene scene = GenerateScene(config);
    VoConfig vo;
    vo.camera = config.camera;
    vo.constant_depth = s.constant_depth;
    sessions[static_cast<std::size_t>(trial)] = RunVoSession(scene, vo, v.gyro_prior);
  });

  csv.Row({"experiment", "trial", "frame", "rot_err_deg", "trans_err", "center_norm",
           "keyframe", "keyframe_inserted", "coasted", "tracking_lost", "constant_depth",
           "correspondences", "inliers", "magnitude_features", "n_triangulated",
           "relpose_status", "magnitude_status"});
  std::vector<double> rot_pct, trans_pct, max_rot;
  for (std::size_t trial = 0; trial < sessions.size(); ++trial) {
    const VoSession& session = sessions[trial];
    for (std::size_t k = 0; k < session.diagnostics.size(); ++k) {
      const FrameDiagnostics& d = session.diagnostics[k];
      csv.Row({"run-vo", std::to_string(trial), std::to_string(d.frame_index),
               Fmt(session.rot_err_deg[k]), Fmt(session.metrics.trans_err[k]),
               Fmt(session.center_norm[k]), std::to_string(d.keyframe_index),
               std::to_string(d.keyframe_inserted), std::to_string(d.coasted),
               std::to_string(d.tracking_lost), std::to_string(d.constant_depth_active),
               std::to_string(d.correspondences), std::to_string(d.inliers),
               std::to_string(d.magnitude_features), std::to_string(d.n_triangulated),
               Str(ToString(d.relpose_status)), Str(ToString(d.magnitude_status))});
    }
    rot_pct.push_back(session.metrics.rot_err_pct);
    trans_pct.push_back(session.metrics.trans_err_pct);
    max_rot.push_back(*std::max_element(session.rot_err_deg.begin(), session.rot_err_deg.end()));
  }
  csv.Summary("run-vo", "rot_err_pct", rot_pct);
  csv.Summary("run-vo", "trans_err_pct", trans_pct);
  csv.Summary("run-vo", "max_rot_err_deg", max_rot);
  csv.Close();
  return kExitOk;
}

int DatasetEvalCmd(const CommonOptions& c, const RecordOptions& r, double gamma, double weight,
                   std::ostream& out, std::ostream& err) {
  const std::vector<CorrespondenceRecord> records = LoadRecords(c, r, err);
  const std::vector<double> gammas = {gamma};
  CsvWriter csv(c.out, out);
  const std::vector<RecordTrial> trials =
      SweepGuess(records, gammas, SolverWeights{weight}, MakeLm(r), ResolveJobs(c.jobs));
  csv.Row({"experiment", "trial", "gamma", "pair_id", "sequence", "n_pairs", "rot_err_deg",
           "dir_err_deg", "iterations", "termination"});
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_sequence;
  for (const RecordTrial& t : trials) {
    const CorrespondenceRecord& rec = records[t.record];
    const RelPoseTrialResult& res = t.result;
    csv.Row({"dataset-eval", std::to_string(t.record), Fmt(gamma), rec.pair_id,
             rec.source_sequence, std::to_string(rec.bearings.size()), Fmt(res.rot_err_deg),
             Fmt(res.dir_err_deg), std::to_string(res.status.iterations),
             Str(ToString(res.status.reason))});
    for (const std::string& key : {rec.source_sequence, std::string("all")}) {
      by_sequence[key].first.push_back(res.rot_err_deg);
      by_sequence[key].second.push_back(res.dir_err_deg);
    }
  }
  for (const auto& [sequence, errors] : by_sequence) {
    csv.Summary(sequence, "rot_err_deg", errors.first);
    csv.Summary(sequence, "dir_err_deg", errors.second);
  }
  csv.Close();
  return kExitOk;
}

struct ConvertOptions {
  std::string from;
  std::string input;
  int records = 300;
};

int DatasetConvertCmd(const CommonOptions& c, const RecordOptions& r, const ConvertOptions& v,
                      std::ostream& out, std::ostream& err) {
  std::vector<CorrespondenceRecord> records;
  if (v.from == "synthetic") {
    records = LowParallaxRecords(v.records, r.noiseless, c.seed);
  } else {
    if (v.input.empty()) throw CLI::RequiredError("--input");
    if (v.from == "pairs-csv") {
      records = ReadPairsCsv(v.input);
    } else {
      std::vector<std::string> warnings;
      records = ReadDataset(std::filesystem::path(v.input), &warnings);
      for (const std::string& w : warnings) err << "warning: " << w << '\n';
    }
  }
  if (r.subsample > 0) records = Subsample(records, r.subsample, c.seed);
  WriteDataset(records, std::filesystem::path(c.out));
  out << "wrote " << records.size() << " records to " << c.out << '\n';
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monocular visual odometry experiments", "instavo"};
  app.require_subcommand(1);
  app.fallthrough(false);

  CommonOptions common;
  SceneOptions scene;
  RecordOptions records;
  VoOptions vo;
  ConvertOptions convert;
  std::vector<double> gammas = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> weights = {0.0, 1.0, 15.0, 50.0, 250.0, 1000.0, 1e5};
  double gamma = 0.3;
  double weight = SolverWeights{}.functional_weight;

  CLI::App* compare =
      app.add_subcommand("compare-estimators", "5+1-DoF vs 6-DoF trajectory errors");
  AddCommon(compare, common, 50);
  AddScene(compare, scene, "both");

  CLI::App* per_frame = app.add_subcommand("error-per-frame", "Per-frame trajectory errors");
  AddCommon(per_frame, common, 50);
  AddScene(per_frame, scene, "constant");

  CLI::App* sweep_guess = app.add_subcommand("sweep-guess", "Initial rotation guess sweep");
  AddCommon(sweep_guess, common, 500);
  AddRecords(sweep_guess, records);
  sweep_guess->add_option("--gammas", gammas, "Guess errors in [0, 1]")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sweep_guess->add_option("--weight", weight, "Functional weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* sweep_weight = app.add_subcommand("sweep-weight", "Functional weight sweep");
  AddCommon(sweep_weight, common, 500);
  AddRecords(sweep_weight, records);
  sweep_weight->add_option("--weights", weights, "Functional weights")
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sweep_weight->add_option("--gamma", gamma, "Guess error in [0, 1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  CLI::App* run_vo = app.add_subcommand("run-vo", "Full odometry on synthetic sequences");
  AddCommon(run_vo, common, 1);
  AddScene(run_vo, scene, "constant");
  run_vo->add_flag("--gyro-prior", vo.gyro_prior, "Feed the true inter-frame rotation as prior");
  run_vo->add_option("--outlier-rate", vo.outlier_rate, "Fraction of corrupted matches")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();

  CLI::App* eval = app.add_subcommand("dataset-eval", "Relative pose errors on a dataset");
  AddCommon(eval, common, 500);
  AddRecords(eval, records);
  eval->add_option("--gamma", gamma, "Guess error in [0, 1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  eval->add_option("--weight", weight, "Functional weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  CLI::App* conv = app.add_subcommand("dataset-convert", "Convert or synthesize datasets");
  AddCommon(conv, common, 1, false);
  conv->add_option("--from", convert.from, "native, pairs-csv or synthetic")
      ->required()
      ->check(CLI::IsMember({"native", "pairs-csv", "synthetic"}));
  conv->add_option("--input", convert.input, "Input file")->check(CLI::ExistingFile);
  conv->add_option("--records", convert.records, "Synthetic record count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  conv->add_option("--subsample", records.subsample, "Records kept per sequence (0 keeps all)")
      ->check(CLI::NonNegativeNumber);
  conv->add_flag("--noiseless", records.noiseless, "Synthesize noiseless records");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (compare->parsed()) return CompareEstimatorsCmd(common, scene, out);
    if (per_frame->parsed()) return ErrorPerFrameCmd(common, scene, out);
    if (sweep_guess->parsed()) return SweepGuessCmd(common, records, gammas, weight, out, err);
    if (sweep_weight->parsed()) {
      return SweepWeightCmd(common, records, weights, gamma, out, err);
    }
    if (run_vo->parsed()) return RunVoCmd(common, scene, vo, out);
    if (eval->parsed()) {
      if (records.dataset.empty()) throw CLI::RequiredError("--dataset");
      return DatasetEvalCmd(common, records, gamma, weight, out, err);
    }
    return DatasetConvertCmd(common, records, convert, out, err);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeFailure;
  }
}

int Run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return Run(args, std::cout, std::cerr);
}

}  // namespace instavo::tools
