#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "instavo/dataset.h"
#include "instavo/synthlab.h"
#include "test_support.h"

namespace instavo {
namespace {

using testing::RandomRotation;
using testing::RandomUnit;

std::vector<CorrespondenceRecord> RandomRecords(int count, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pairs(5, 30);
  std::vector<CorrespondenceRecord> out;
  for (int i = 0; i < count; ++i) {
    CorrespondenceRecord rec;
    rec.pair_id = "r" + std::to_string(i);
    rec.source_sequence = "seq" + std::to_string(i % 3);
    rec.gt_rotation = RandomRotation(rng);
    rec.gt_translation = RandomUnit(rng) * 0.7;
    rec.noiseless = i % 2 == 0;
    const int n = pairs(rng);
    for (int k = 0; k < n; ++k) {
      rec.bearings.push_back(
          {Bearing::FromVector(RandomUnit(rng)), Bearing::FromVector(RandomUnit(rng))});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string Header(const std::string& tail) { return "pair a s 1 0 0 0 0 0 1 0 " + tail + "\n"; }

std::string Body(int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += "0 0 1 0 0 1\n";
  return out;
}

TEST(Dataset, RoundTripIsLossless) {
  std::mt19937_64 rng(41);
  const auto records = RandomRecords(300, rng);
  std::stringstream buf;
  WriteDataset(records, buf);
  const auto back = ReadDataset(buf, "mem");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = back[i];
    EXPECT_EQ(a.pair_id, b.pair_id);
    EXPECT_EQ(a.source_sequence, b.source_sequence);
    EXPECT_EQ(a.noiseless, b.noiseless);
    EXPECT_LE((a.gt_rotation.matrix() - b.gt_rotation.matrix()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((a.gt_translation - b.gt_translation).cwiseAbs().maxCoeff(), 1e-15);
    ASSERT_EQ(a.bearings.size(), b.bearings.size());
    for (std::size_t k = 0; k < a.bearings.size(); ++k) {
      EXPECT_LE((a.bearings[k].f.vector() - b.bearings[k].f.vector()).cwiseAbs().maxCoeff(),
                1e-15);
      EXPECT_LE((a.bearings[k].f_prime.vector() - b.bearings[k].f_prime.vector())
                    .cwiseAbs()
                    .maxCoeff(),
                1e-15);
    }
  }
}

TEST(Dataset, FileRoundTrip) {
  std::mt19937_64 rng(42);
  const auto records = RandomRecords(10, rng);
  const auto path = std::filesystem::temp_directory_path() / "instavo_dataset_roundtrip.txt";
  WriteDataset(records, path);
  EXPECT_EQ(ReadDataset(path).size(), 10u);
  std::filesystem::remove(path);
}

TEST(Dataset, MissingBearingComponentNamesTheLine) {
  std::stringstream in("# comment\n\n" + Header("5") + Body(2) + "0 0 1 0 0\n" + Body(2));
  try {
    ReadDataset(in, "bad.txt");
    FAIL() << "expected a parse error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.file(), "bad.txt");
    EXPECT_EQ(e.line(), 6);
    EXPECT_NE(e.reason().find("6 bearing components"), std::string::npos);
  }
}

TEST(Dataset, RejectsNonOrthonormalRotation) {
  std::stringstream in("pair a s 1.001 0 0 0 0 0 1 0 5\n" + Body(5));
  EXPECT_THROW(ReadDataset(in, "q.txt"), DatasetError);
}

TEST(Dataset, RenormalizesNearUnitBearingsWithWarning) {
  std::stringstream in(Header("5") + "0 0 1.0000005 0 0 1\n" + Body(4));
  std::vector<std::string> warnings;
  const auto records = ReadDataset(in, "w.txt", &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NEAR(records[0].bearings[0].f.vector().norm(), 1.0, 1e-15);
}

TEST(Dataset, RejectsFarFromUnitBearings) {
  std::stringstream in(Header("5") + "0 0 2 0 0 1\n" + Body(4));
  EXPECT_THROW(ReadDataset(in, "n.txt"), DatasetError);
}

TEST(Dataset, RejectsTooFewPairsAndTruncation) {
  std::stringstream few(Header("4") + Body(4));
  EXPECT_THROW(ReadDataset(few, "few.txt"), DatasetError);
  std::stringstream cut(Header("6") + Body(5));
  EXPECT_THROW(ReadDataset(cut, "cut.txt"), DatasetError);
  std::stringstream junk(Header("5") + Body(4) + "0 0 x 0 0 1\n");
  EXPECT_THROW(ReadDataset(junk, "junk.txt"), DatasetError);
}

TEST(Dataset, WriterRejectsInvalidRecords) {
  CorrespondenceRecord rec;
  rec.pair_id = "x";
  rec.source_sequence = "s";
  rec.bearings.resize(4);
  EXPECT_THROW(WriteDataset(std::vector{rec}, std::cout), std::invalid_argument);
}

TEST(Dataset, NoiselessRecordsSatisfyEpipolarConstraint) {
  SceneConfig cfg;
  cfg.seed = 3;
  const auto records = SynthesizeRecords(cfg, 20, true, "clean");
  std::stringstream buf;
  WriteDataset(records, buf);
  for (const CorrespondenceRecord& rec : ReadDataset(buf, "clean")) {
    EXPECT_TRUE(rec.noiseless);
    EXPECT_LT(MaxEpipolarResidual(rec), 1e-9);
  }
}

TEST(Subsample, NoOpWhenTargetCoversAll) {
  std::mt19937_64 rng(43);
  const auto records = RandomRecords(30, rng);
  const auto kept = Subsample(records, 100, 7);
  ASSERT_EQ(kept.size(), records.size());
  for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(kept[i].pair_id, records[i].pair_id);
}

std::vector<CorrespondenceRecord> Sequence(int n) {
  CorrespondenceRecord base;
  base.source_sequence = "long";
  base.bearings.resize(5);
  std::vector<CorrespondenceRecord> out(static_cast<std::size_t>(n), base);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].pair_id = std::to_string(i);
  return out;
}

std::set<std::string> Ids(const std::vector<CorrespondenceRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.pair_id);
  return ids;
}

TEST(Subsample, ExactCountReproduciblePerSeed) {
  const auto records = Sequence(3000);
  const auto a = Subsample(records, 300, 1);
  const auto b = Subsample(records, 300, 1);
  const auto c = Subsample(records, 300, 2);
  EXPECT_EQ(a.size(), 300u);
  EXPECT_EQ(Ids(a), Ids(b));
  EXPECT_EQ(Ids(a).size(), 300u);
  EXPECT_NE(Ids(a), Ids(c));
  // Original order is kept.
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(std::stoi(a[i - 1].pair_id), std::stoi(a[i].pair_id));
}

TEST(Subsample, InvalidTarget) {
  EXPECT_THROW(Subsample(Sequence(3), 0, 1), std::invalid_argument);
}

TEST(PairsCsv, GroupsRowsByPairId) {
  const auto path = std::filesystem::temp_directory_path() / "instavo_pairs.csv";
  {
    std::ofstream out(path);
    out << "pair_id,sequence,qw,qx,qy,qz,tx,ty,tz,noiseless,fx,fy,fz,fx',fy',fz'\n";
    for (const char* id : {"p1", "p2"}) {
      for (int i = 0; i < 6; ++i) out << id << ",seq,1,0,0,0,0.1,0,0,1,0,0,1,0,0,1\n";
    }
  }
  const auto records = ReadPairsCsv(path);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].pair_id, "p1");
  EXPECT_EQ(records[1].bearings.size(), 6u);
  EXPECT_NEAR(records[0].gt_translation.x(), 0.1, 1e-15);
  std::filesystem::remove(path);
}

TEST(RecordProvider, ReplaysTwoFrames) {
  std::mt19937_64 rng(44);
  const auto records = RandomRecords(1, rng);
  RecordObservationProvider provider(records[0]);
  const auto f0 = provider.Next();
  const auto f1 = provider.Next();
  ASSERT_TRUE(f0 && f1);
  EXPECT_FALSE(provider.Next());
  EXPECT_EQ(f0->observations.size(), records[0].bearings.size());
  EXPECT_EQ(f1->frame_index, 1);
  EXPECT_EQ(f1->observations[2].bearing.vector(), records[0].bearings[2].f_prime.vector());
}

}  // namespace
}  // namespace instavo
