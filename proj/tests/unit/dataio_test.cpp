#include "eegrel/dataio.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "eegrel/preprocess.hpp"
#include "eegrel/spectral.hpp"
#include "test_support.hpp"

namespace eegrel {
namespace {

using testing::TempDir;

EegRecording small_recording(const std::string& id, Label label, std::size_t n = 64) {
  EegRecording rec;
  rec.patient_id = id;
  rec.label = label;
  rec.sampling_rate_hz = 200.0;
  rec.channel_names = canonical_channel_names();
  rec.n_samples = n;
  rec.samples.resize(kNumChannels * n);
  for (std::size_t i = 0; i < rec.samples.size(); ++i) rec.samples[i] = std::sin(0.37 * static_cast<double>(i)) * 12.5;
  rec.artifact_mask.assign(n, 0);
  return rec;
}

SynthConfig tiny_synth(double delta = 0.0) {
  SynthConfig s;
  s.n_patients_per_class = 2;
  s.duration_s = 4.0;
  s.effect_size_delta = delta;
  s.seed = 11;
  return s;
}

TEST(Labels, ParseIsCaseInsensitive) {
  EXPECT_EQ(parse_label("mci"), Label::kMci);
  EXPECT_EQ(parse_label("MCI"), Label::kMci);
  EXPECT_EQ(parse_label("Dementia"), Label::kDementia);
  EXPECT_EQ(parse_label("control"), Label::kControl);
  EXPECT_THROW(parse_label("healthy"), DataError);
}

TEST(ValidateRecording, ValidRecordingHasNoViolations) {
  EXPECT_TRUE(validate_recording(small_recording("p", Label::kControl)).empty());
}

TEST(ValidateRecording, MaskLengthMismatchIsOneViolation) {
  auto rec = small_recording("p", Label::kControl);
  rec.artifact_mask.pop_back();
  EXPECT_EQ(validate_recording(rec).size(), 1u);
}

TEST(ValidateRecording, NanNamesChannelAndIndex) {
  auto rec = small_recording("p", Label::kControl);
  rec.channel(3)[17] = std::nan("");
  const auto v = validate_recording(rec);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("F3"), std::string::npos);
  EXPECT_NE(v[0].find("17"), std::string::npos);
}

TEST(Dataset, TwoPatientRoundTrip) {
  TempDir dir;
  CohortDataset ds{"two", {small_recording("a", Label::kControl), small_recording("b", Label::kMci)}};
  write_dataset(ds, dir.path());
  const CohortDataset back = read_dataset(dir.path());
  ASSERT_EQ(back.recordings.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& a = ds.recordings[r];
    const auto& b = back.recordings[r];
    EXPECT_EQ(a.patient_id, b.patient_id);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.n_samples, b.n_samples);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      EXPECT_EQ(static_cast<double>(static_cast<float>(a.samples[i])), b.samples[i]);
    }
  }
}

TEST(Dataset, EmptyDatasetWritesHeaderOnly) {
  TempDir dir;
  write_dataset(CohortDataset{"empty", {}}, dir.path());
  std::ifstream in(dir / "manifest.csv");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, kManifestHeader);
  EXPECT_FALSE(std::getline(in, line));
  EXPECT_TRUE(read_dataset(dir.path()).recordings.empty());
}

TEST(Dataset, MaskRoundTrips) {
  TempDir dir;
  auto rec = small_recording("m", Label::kDementia);
  std::fill(rec.artifact_mask.begin() + 10, rec.artifact_mask.begin() + 20, 1);
  write_dataset(CohortDataset{"m", {rec}}, dir.path());
  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.recordings.size(), 1u);
  EXPECT_EQ(back.recordings[0].artifact_mask, rec.artifact_mask);
  EXPECT_TRUE(std::filesystem::exists(dir / (DatasetReader(dir.path()).entries()[0].file + ".mask")));
}

TEST(Dataset, TruncatedSignalFileNamesTheFile) {
  TempDir dir;
  write_dataset(CohortDataset{"t", {small_recording("a", Label::kControl)}}, dir.path());
  const auto file = dir.path() / DatasetReader(dir.path()).entries()[0].file;
  std::filesystem::resize_file(file, std::filesystem::file_size(file) - 4);
  try {
    read_dataset(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(file.filename().string()), std::string::npos) << msg;
    EXPECT_NE(msg.find("mismatch"), std::string::npos) << msg;
  }
}

TEST(Dataset, ManifestLabelIsCaseInsensitive) {
  TempDir dir;
  write_dataset(CohortDataset{"c", {small_recording("a", Label::kMci)}}, dir.path());
  std::ifstream in(dir / "manifest.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  in.close();
  const auto pos = row.find(",mci,");
  ASSERT_NE(pos, std::string::npos);
  row.replace(pos, 5, ",MCI,");
  std::ofstream(dir / "manifest.csv") << header << '\n' << row << '\n';
  EXPECT_EQ(read_dataset(dir.path()).recordings[0].label, Label::kMci);
}

TEST(Dataset, ChannelsAreReorderedToCanonical) {
  TempDir dir;
  auto rec = small_recording("a", Label::kControl);
  auto channels = canonical_channel_names();
  std::reverse(channels.begin(), channels.end());
  DatasetWriter writer(dir.path(), channels);
  // Store the rows in reversed order too, so reading must undo it.
  EegRecording stored = rec;
  stored.channel_names = channels;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    auto src = rec.channel(kNumChannels - 1 - c);
    std::copy(src.begin(), src.end(), stored.channel(c).begin());
  }
  writer.add(stored);
  writer.finish();
  const auto back = read_dataset(dir.path()).recordings.at(0);
  EXPECT_EQ(back.channel_names, canonical_channel_names());
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    EXPECT_EQ(back.channel(c)[5], static_cast<double>(static_cast<float>(rec.channel(c)[5])));
  }
}

TEST(Synthetic, RoundTripIsIdentityUpToFloat32) {
  TempDir dir;
  auto cfg = tiny_synth();
  cfg.artifact_fraction = 0.2;
  const auto ds = generate_synthetic(cfg);
  write_dataset(ds, dir.path());
  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.recordings.size(), ds.recordings.size());
  for (std::size_t r = 0; r < ds.recordings.size(); ++r) {
    const auto& a = ds.recordings[r];
    const auto& b = back.recordings[r];
    EXPECT_EQ(a.artifact_mask, b.artifact_mask);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      ASSERT_EQ(static_cast<double>(static_cast<float>(a.samples[i])), b.samples[i]);
    }
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const auto a = generate_synthetic(tiny_synth(1.0));
  const auto b = generate_synthetic(tiny_synth(1.0));
  ASSERT_EQ(a.recordings.size(), b.recordings.size());
  for (std::size_t r = 0; r < a.recordings.size(); ++r) {
    EXPECT_EQ(a.recordings[r].samples, b.recordings[r].samples);
    EXPECT_EQ(a.recordings[r].artifact_mask, b.recordings[r].artifact_mask);
  }
}

TEST(Synthetic, LayoutAndInvariants) {
  auto cfg = tiny_synth();
  cfg.condition = Label::kDementia;
  const auto ds = generate_synthetic(cfg);
  ASSERT_EQ(ds.recordings.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& rec = ds.recordings[i];
    EXPECT_TRUE(validate_recording(rec).empty());
    EXPECT_EQ(rec.label, i < 2 ? Label::kControl : Label::kDementia);
    EXPECT_EQ(rec.channel_names, canonical_channel_names());
  }
}

TEST(Synthetic, ConfigInvariantsRejected) {
  auto cfg = tiny_synth();
  cfg.duration_s = 1.5;  // 300 samples < 2 x 200
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_synth();
  cfg.artifact_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Synthetic, ArtifactSpansAreContiguousBlocksOfHalfToTwoSeconds) {
  auto cfg = tiny_synth();
  cfg.duration_s = 60.0;
  cfg.artifact_fraction = 0.2;
  const auto rec = generate_synthetic_patient(cfg, 0);
  std::size_t masked = 0;
  for (std::size_t t = 0; t < rec.n_samples;) {
    if (!rec.artifact_mask[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < rec.n_samples && rec.artifact_mask[end]) ++end;
    masked += end - t;
    // Adjacent spans may touch; a single block is at least 0.5 s.
    EXPECT_GE(end - t, 100u);
    t = end;
  }
  EXPECT_GT(masked, 0u);
  EXPECT_LT(masked, rec.n_samples);
}

// Mean alpha-band (8-12 Hz) power per class, from the first contig of each
// patient, so samples are independent across patients.
struct AlphaSamples {
  std::vector<double> control, condition;
};

AlphaSamples first_contig_alpha(const SynthConfig& cfg) {
  AlphaSamples out;
  PreprocessConfig pc;
  for (std::size_t i = 0; i < 2 * cfg.n_patients_per_class; ++i) {
    const auto rec = generate_synthetic_patient(cfg, i);
    const auto contigs = preprocess_recording(rec, pc);
    if (contigs.empty()) continue;
    const auto bp = band_powers(contigs.front(), pc.target_hz);
    double alpha = 0.0;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      for (std::size_t b = 4; b < 8; ++b) alpha += bp.values[feature_index(c, b)];
    }
    (is_condition(rec.label) ? out.condition : out.control).push_back(alpha / kNumChannels);
  }
  return out;
}

// Two-sample Kolmogorov-Smirnov p-value via the asymptotic distribution.
double ks_p_value(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  const double ne = double(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pooled_sd(const std::vector<double>& a, const std::vector<double>& b) {
  auto ss = [](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  return std::sqrt((ss(a) + ss(b)) / (a.size() + b.size() - 2));
}

TEST(Synthetic, NoEffectGivesIndistinguishableBandPowers) {
  SynthConfig cfg;
  cfg.n_patients_per_class = 500;
  cfg.duration_s = 2.0;
  cfg.seed = 2024;
  const auto s = first_contig_alpha(cfg);
  ASSERT_EQ(s.control.size() + s.condition.size(), 1000u);
  EXPECT_GT(ks_p_value(s.control, s.condition), 0.01);
}

TEST(Synthetic, LargeEffectSeparatesAlphaPowerByThreePooledSd) {
  SynthConfig cfg;
  cfg.n_patients_per_class = 200;
  cfg.duration_s = 2.0;
  cfg.effect_size_delta = 5.0;
  cfg.seed = 2024;
  const auto s = first_contig_alpha(cfg);
  EXPECT_GE(mean(s.condition) - mean(s.control), 3.0 * pooled_sd(s.control, s.condition));
}

TEST(Synthetic, ClassGapIsMonotoneInEffectSize) {
  double previous = -1.0;
  for (double delta : {0.0, 1.0, 5.0}) {
    SynthConfig cfg;
    cfg.n_patients_per_class = 100;
    cfg.duration_s = 2.0;
    cfg.effect_size_delta = delta;
    cfg.seed = 7;
    double gap = 0.0;
    for (std::size_t i = 0; i < cfg.n_patients_per_class; ++i) {
      gap += synthetic_alpha_power(cfg, cfg.n_patients_per_class + i) - synthetic_alpha_power(cfg, i);
    }
    gap = std::abs(gap) / cfg.n_patients_per_class;
    EXPECT_GE(gap, previous) << "delta " << delta;
    previous = gap;
  }
}

}  // namespace
}  // namespace eegrel
