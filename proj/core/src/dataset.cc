#include "instavo/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace instavo {

DatasetError::DatasetError(std::string file, int line, std::string reason)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + reason),
      file_(std::move(file)),
      line_(line),
      reason_(std::move(reason)) {}

namespace {

std::string FormatReal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool IsToken(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

std::vector<std::string> SplitWhitespace(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::optional<double> ParseReal(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<long> ParseInt(const std::string& s) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Parses a bearing, renormalizing when within 1e-6 of unit norm.
Bearing CheckedBearing(const Vec3& v, const std::string& name, int line,
                       std::vector<std::string>* warnings) {
  const double n = v.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    throw DatasetError(name, line, "bearing norm " + FormatReal(n) + " is not unit");
  }
  if (n != 1.0 && std::abs(n - 1.0) > 1e-12 && warnings) {
    warnings->push_back(name + ":" + std::to_string(line) + ": renormalized bearing (norm " +
                        FormatReal(n) + ")");
  }
  return Bearing::FromVector(v);
}

Rotation CheckedRotation(const Eigen::Quaterniond& q, const std::string& name, int line) {
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw DatasetError(name, line, "ground-truth rotation is not orthonormal (|q| = " +
                                       FormatReal(n) + ")");
  }
  return Rotation::FromQuaternion(q);
}

std::uint64_t Fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void WriteDataset(std::span<const CorrespondenceRecord> records, std::ostream& out) {
  for (const CorrespondenceRecord& rec : records) {
    if (!IsToken(rec.pair_id) || !IsToken(rec.source_sequence)) {
      throw std::invalid_argument("WriteDataset: ids must be non-empty and whitespace-free");
    }
    if (rec.bearings.size() < static_cast<std::size_t>(kMinPairsPerRecord)) {
      throw std::invalid_argument("WriteDataset: record " + rec.pair_id + " has fewer than " +
                                  std::to_string(kMinPairsPerRecord) + " pairs");
    }
    const Eigen::Quaterniond q = rec.gt_rotation.quaternion();
    out << "pair " << rec.pair_id << ' ' << rec.source_sequence << ' ' << FormatReal(q.w())
        << ' ' << FormatReal(q.x()) << ' ' << FormatReal(q.y()) << ' ' << FormatReal(q.z())
        << ' ' << FormatReal(rec.gt_translation.x()) << ' '
        << FormatReal(rec.gt_translation.y()) << ' ' << FormatReal(rec.gt_translation.z())
        << ' ' << (rec.noiseless ? 1 : 0) << ' ' << rec.bearings.size() << '\n';
    for (const BearingPair& p : rec.bearings) {
      const Vec3& f = p.f.vector();
      const Vec3& g = p.f_prime.vector();
      out << FormatReal(f.x()) << ' ' << FormatReal(f.y()) << ' ' << FormatReal(f.z()) << ' '
          << FormatReal(g.x()) << ' ' << FormatReal(g.y()) << ' ' << FormatReal(g.z()) << '\n';
    }
  }
}

void WriteDataset(std::span<const CorrespondenceRecord> records,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  WriteDataset(records, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<CorrespondenceRecord> ReadDataset(std::istream& in, const std::string& name,
                                              std::vector<std::string>* warnings) {
  std::vector<CorrespondenceRecord> records;
  std::string line;
  int line_no = 0;
  auto next_content_line = [&](std::vector<std::string>& tokens) -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens = SplitWhitespace(line);
      if (tokens.empty() || tokens.front().front() == '#') continue;
      return true;
    }
    return false;
  };

  std::vector<std::string> tok;
  while (next_content_line(tok)) {
    const int header_line = line_no;
    if (tok.front() != "pair") {
      throw DatasetError(name, line_no, "expected 'pair' header, found '" + tok.front() + "'");
    }
    if (tok.size() != 12) {
      throw DatasetError(name, line_no, "pair header needs 12 fields, found " +
                                            std::to_string(tok.size()));
    }
    CorrespondenceRecord rec;
    rec.pair_id = tok[1];
    rec.source_sequence = tok[2];
    double v[7];
    for (int i = 0; i < 7; ++i) {
      const std::optional<double> x = ParseReal(tok[3 + i]);
      if (!x) throw DatasetError(name, line_no, "invalid number '" + tok[3 + i] + "'");
      v[i] = *x;
    }
    rec.gt_rotation = CheckedRotation(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), name, line_no);
    rec.gt_translation = Vec3(v[4], v[5], v[6]);
    if (tok[10] != "0" && tok[10] != "1") {
      throw DatasetError(name, line_no, "noiseless flag must be 0 or 1");
    }
    rec.noiseless = tok[10] == "1";
    const std::optional<long> n = ParseInt(tok[11]);
    if (!n || *n < 0) throw DatasetError(name, line_no, "invalid pair count '" + tok[11] + "'");
    if (*n < kMinPairsPerRecord) {
      throw DatasetError(name, line_no, "record has fewer than " +
                                            std::to_string(kMinPairsPerRecord) + " pairs");
    }
    rec.bearings.reserve(static_cast<std::size_t>(*n));
    for (long i = 0; i < *n; ++i) {
      if (!next_content_line(tok)) {
        throw DatasetError(name, line_no, "unexpected end of file in record '" + rec.pair_id +
                                              "' (header at line " +
                                              std::to_string(header_line) + ")");
      }
      if (tok.size() != 6) {
        throw DatasetError(name, line_no, "expected 6 bearing components, found " +
                                              std::to_string(tok.size()));
      }
      double c[6];
      for (int k = 0; k < 6; ++k) {
        const std::optional<double> x = ParseReal(tok[k]);
        if (!x) throw DatasetError(name, line_no, "invalid number '" + tok[k] + "'");
        c[k] = *x;
      }
      const Bearing f = CheckedBearing(Vec3(c[0], c[1], c[2]), name, line_no, warnings);
      const Bearing fp = CheckedBearing(Vec3(c[3], c[4], c[5]), name, line_no, warnings);
      rec.bearings.push_back({f, fp});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CorrespondenceRecord> ReadDataset(const std::filesystem::path& path,
                                              std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(path.string(), 0, "cannot open file");
  return ReadDataset(in, path.string(), warnings);
}

std::vector<CorrespondenceRecord> Subsample(std::span<const CorrespondenceRecord> records,
                                            int target_per_sequence, std::uint64_t seed) {
  if (target_per_sequence < 1) throw std::invalid_argument("Subsample: target must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_sequence;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_sequence[records[i].source_sequence].push_back(i);
  }
  std::vector<bool> keep(records.size(), false);
  for (auto& [seq, indices] : by_sequence) {
    if (indices.size() <= static_cast<std::size_t>(target_per_sequence)) {
      for (std::size_t i : indices) keep[i] = true;
      continue;
    }
    std::mt19937_64 rng(seed ^ Fnv1a(seq));
    for (int k = 0; k < target_per_sequence; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, indices.size() - 1);
      std::swap(indices[k], indices[pick(rng)]);
      keep[indices[k]] = true;
    }
  }
  std::vector<CorrespondenceRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

std::vector<CorrespondenceRecord> ReadPairsCsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string name = path.string();
  if (!in) throw DatasetError(name, 0, "cannot open file");
  std::vector<CorrespondenceRecord> records;
  std::map<std::string, std::size_t> index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line_no == 1 && !cells.empty() && cells.front() == "pair_id") continue;
    if (cells.size() != 16) {
      throw DatasetError(name, line_no, "expected 16 comma-separated fields, found " +
                                            std::to_string(cells.size()));
    }
    double v[14];
    for (int i = 0; i < 14; ++i) {
      const std::string& s = cells[2 + i];
      if (i == 7) continue;  // noiseless flag
      const std::optional<double> x = ParseReal(s);
      if (!x) throw DatasetError(name, line_no, "invalid number '" + s + "'");
      v[i] = *x;
    }
    if (cells[9] != "0" && cells[9] != "1") {
      throw DatasetError(name, line_no, "noiseless flag must be 0 or 1");
    }
    auto [it, inserted] = index.try_emplace(cells[0], records.size());
    if (inserted) {
      CorrespondenceRecord rec;
      rec.pair_id = cells[0];
      rec.source_sequence = cells[1];
      rec.gt_rotation = CheckedRotation(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), name, line_no);
      rec.gt_translation = Vec3(v[4], v[5], v[6]);
      rec.noiseless = cells[9] == "1";
      records.push_back(std::move(rec));
    }
    CorrespondenceRecord& rec = records[it->second];
    rec.bearings.push_back({Bearing::FromVector(Vec3(v[8], v[9], v[10])),
                            Bearing::FromVector(Vec3(v[11], v[12], v[13]))});
  }
  for (const CorrespondenceRecord& rec : records) {
    if (rec.bearings.size() < static_cast<std::size_t>(kMinPairsPerRecord)) {
      throw DatasetError(name, line_no, "record '" + rec.pair_id + "' has fewer than " +
                                            std::to_string(kMinPairsPerRecord) + " pairs");
    }
  }
  return records;
}

double MaxEpipolarResidual(const CorrespondenceRecord& record) {
  const Mat3 e = Hat(record.gt_translation) * record.gt_rotation.matrix();
  double worst = 0.0;
  for (const BearingPair& p : record.bearings) {
    worst = std::max(worst, std::abs(p.f_prime.vector().dot(e * p.f.vector())));
  }
  return worst;
}

std::optional<FrameObservations> RecordObservationProvider::Next() {
  if (next_frame_ > 1) return std::nullopt;
  FrameObservations frame;
  frame.frame_index = next_frame_;
  frame.observations.reserve(record_.bearings.size());
  for (std::size_t i = 0; i < record_.bearings.size(); ++i) {
    const BearingPair& p = record_.bearings[i];
    frame.observations.push_back(
        {static_cast<TrackId>(i), next_frame_ == 0 ? p.f : p.f_prime});
  }
  ++next_frame_;
  return frame;
}

}  // namespace instavo
