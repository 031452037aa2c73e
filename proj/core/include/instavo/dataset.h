#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "instavo/geometry.h"
#include "instavo/pipeline.h"
#include "instavo/relpose.h"

namespace instavo {

// One keyframe-to-frame pair with its ground-truth relative pose
// (p_frame = R p_keyframe + t).
struct CorrespondenceRecord {
  std::string pair_id;
  std::string source_sequence;
  std::vector<BearingPair> bearings;
  Rotation gt_rotation;
  Vec3 gt_translation = Vec3::Zero();
  bool noiseless = false;
};

inline constexpr int kMinPairsPerRecord = 5;

// Parse or validation failure, located by file and 1-based line number.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::string file, int line, std::string reason);

  const std::string& file() const { return file_; }
  int line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string file_;
  int line_;
  std::string reason_;
};

// Text format, one block per record:
//
//   pair <id> <seq> <qw> <qx> <qy> <qz> <tx> <ty> <tz> <noiseless:0|1> <n>
//   <fx> <fy> <fz> <fx'> <fy'> <fz'>      (n lines)
//
// Whitespace separated, LF line endings, reals printed with 17 significant
// digits. Blank lines and lines starting with '#' are ignored by the reader.
void WriteDataset(std::span<const CorrespondenceRecord> records, std::ostream& out);
void WriteDataset(std::span<const CorrespondenceRecord> records,
                  const std::filesystem::path& path);

// Bearings off unit norm by at most 1e-6 are renormalized and reported in
// `warnings`; anything else that violates the record invariants throws.
std::vector<CorrespondenceRecord> ReadDataset(std::istream& in, const std::string& name,
                                              std::vector<std::string>* warnings = nullptr);
std::vector<CorrespondenceRecord> ReadDataset(const std::filesystem::path& path,
                                              std::vector<std::string>* warnings = nullptr);

// Keeps at most `target_per_sequence` records per source sequence, drawn
// uniformly without replacement; input order is preserved.
std::vector<CorrespondenceRecord> Subsample(std::span<const CorrespondenceRecord> records,
                                            int target_per_sequence, std::uint64_t seed);

// Converter for flat CSV exports with one correspondence per row:
//   pair_id,sequence,qw,qx,qy,qz,tx,ty,tz,noiseless,fx,fy,fz,fx',fy',fz'
// Rows sharing a pair_id form one record. A header row is skipped.
std::vector<CorrespondenceRecord> ReadPairsCsv(const std::filesystem::path& path);

// Largest |f'^T [t]x R f| over the record's pairs.
double MaxEpipolarResidual(const CorrespondenceRecord& record);

// Replays one record as a two-frame stream: frame 0 carries the keyframe
// bearings, frame 1 the current bearings, with track ids 0..n-1.
class RecordObservationProvider : public ObservationProvider {
 public:
  explicit RecordObservationProvider(const CorrespondenceRecord& record) : record_(record) {}
  std::optional<FrameObservations> Next() override;

 private:
  const CorrespondenceRecord& record_;
  int next_frame_ = 0;
};

}  // namespace instavo
