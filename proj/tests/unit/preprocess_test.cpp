#include "eegrel/preprocess.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"

namespace eegrel {
namespace {

constexpr double kPi = std::numbers::pi;

EegRecording single_channel(std::vector<double> x, double fs) {
  EegRecording rec;
  rec.patient_id = "p";
  rec.sampling_rate_hz = fs;
  rec.channel_names = {"Cz"};
  rec.n_samples = x.size();
  rec.samples = std::move(x);
  rec.artifact_mask.assign(rec.n_samples, 0);
  return rec;
}

std::vector<double> tone(double f, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * kPi * f * static_cast<double>(t) / fs);
  return x;
}

// Peak amplitude over the middle half, away from edge transients.
double steady_amplitude(std::span<const double> x) {
  double peak = 0.0;
  for (std::size_t t = x.size() / 4; t < 3 * x.size() / 4; ++t) peak = std::max(peak, std::abs(x[t]));
  return peak;
}

// Closed-form squared magnitude of an N-th order Butterworth band-pass after
// the bilinear transform with pre-warped band edges.
double butterworth_power_oracle(int order, double lo, double hi, double fs, double f) {
  const double w1 = 2.0 * fs * std::tan(kPi * lo / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * hi / fs);
  const double w = 2.0 * fs * std::tan(kPi * f / fs);
  const double x = (w * w - w1 * w2) / ((w2 - w1) * w);
  return 1.0 / (1.0 + std::pow(x * x, order));
}

TEST(Filter, DesignMatchesClosedFormMagnitude) {
  const auto filter = design_butterworth_bandpass(4, 5.0, 20.0, 200.0);
  for (double f : {0.5, 1.0, 3.0, 5.0, 7.5, 10.0, 14.0, 20.0, 30.0, 60.0, 95.0}) {
    const double power = std::norm(frequency_response(filter, f, 200.0));
    EXPECT_NEAR(power, butterworth_power_oracle(4, 5.0, 20.0, 200.0, f), 1e-9) << f << " Hz";
  }
}

TEST(Filter, EdgesAreHalfPower) {
  const auto filter = design_butterworth_bandpass(4, 5.0, 20.0, 250.0);
  EXPECT_NEAR(std::norm(frequency_response(filter, 5.0, 250.0)), 0.5, 1e-9);
  EXPECT_NEAR(std::norm(frequency_response(filter, 20.0, 250.0)), 0.5, 1e-9);
}

TEST(Filter, RejectsInvalidBand) {
  EXPECT_THROW(design_butterworth_bandpass(4, 20.0, 5.0, 200.0), ConfigError);
  EXPECT_THROW(design_butterworth_bandpass(4, 5.0, 120.0, 200.0), ConfigError);
}

TEST(Bandpass, ZeroInZeroOut) {
  const auto out = bandpass(single_channel(std::vector<double>(1000, 0.0), 200.0), 5.0, 20.0);
  for (double v : out.samples) EXPECT_EQ(v, 0.0);
}

TEST(Bandpass, PassbandToneMatchesResponseOracle) {
  const auto filter = design_butterworth_bandpass(4, 5.0, 20.0, 200.0);
  // Forward-backward filtering applies |H|^2.
  const double expected = std::norm(frequency_response(filter, 10.0, 200.0));
  const auto out = bandpass(single_channel(tone(10.0, 200.0, 4000), 200.0), 5.0, 20.0);
  const double amp = steady_amplitude(out.channel(0));
  EXPECT_GE(amp, 0.7);
  EXPECT_LE(amp, 1.0 + 1e-6);
  EXPECT_NEAR(amp, expected, 2e-3);
}

TEST(Bandpass, LowToneAttenuatedTwentyDb) {
  const auto filter = design_butterworth_bandpass(4, 5.0, 20.0, 200.0);
  const double expected = std::norm(frequency_response(filter, 1.0, 200.0));
  EXPECT_LE(20.0 * std::log10(expected), -20.0);
  const auto out = bandpass(single_channel(tone(1.0, 200.0, 8000), 200.0), 5.0, 20.0);
  const double amp = steady_amplitude(out.channel(0));
  EXPECT_LE(20.0 * std::log10(amp), -20.0);
  EXPECT_NEAR(amp, expected, 1e-3);
}

TEST(Bandpass, IsLinear) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 10.0);
  std::vector<double> x(1500), y(1500), z(1500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = n(rng);
    y[i] = n(rng);
    z[i] = 2.5 * x[i] - 0.75 * y[i];
  }
  const auto fx = bandpass(single_channel(x, 200.0), 5.0, 20.0);
  const auto fy = bandpass(single_channel(y, 200.0), 5.0, 20.0);
  const auto fz = bandpass(single_channel(z, 200.0), 5.0, 20.0);
  double scale = 0.0;
  for (double v : fz.samples) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_NEAR(fz.samples[i], 2.5 * fx.samples[i] - 0.75 * fy.samples[i], 1e-9 * scale);
  }
}

TEST(Resample, LengthArithmetic) {
  const auto out = resample(single_channel(std::vector<double>(250, 1.0), 250.0), 200.0);
  EXPECT_EQ(out.n_samples, 200u);
  EXPECT_EQ(out.sampling_rate_hz, 200.0);
}

TEST(Resample, ConstantStaysConstant) {
  const auto out = resample(single_channel(std::vector<double>(250, 3.25), 250.0), 200.0);
  for (double v : out.samples) EXPECT_EQ(v, 3.25);
}

TEST(Resample, RampIsInterpolatedExactly) {
  std::vector<double> ramp(250);
  for (std::size_t j = 0; j < ramp.size(); ++j) ramp[j] = static_cast<double>(j) / 250.0;
  const auto out = resample(single_channel(ramp, 250.0), 200.0);
  for (std::size_t i = 0; i < out.n_samples; ++i) EXPECT_NEAR(out.samples[i], static_cast<double>(i) / 200.0, 1e-14);
}

TEST(Resample, MaskCoversEveryMaskedSource) {
  auto rec = single_channel(std::vector<double>(250, 0.0), 250.0);
  rec.artifact_mask[101] = 1;
  const auto out = resample(rec, 200.0);
  // Source 101 sits at output time 80.8, between outputs 80 and 81.
  EXPECT_EQ(out.artifact_mask[80], 1);
  std::size_t masked = 0;
  for (auto m : out.artifact_mask) masked += m;
  EXPECT_LE(masked, 2u);
}

TEST(Resample, UpsamplingRejected) {
  EXPECT_THROW(resample(single_channel(std::vector<double>(10, 0.0), 200.0), 250.0), ConfigError);
}

TEST(Contigs, CleanRecordingSplitsGreedily) {
  const auto contigs = extract_contigs(single_channel(std::vector<double>(1000, 0.0), 200.0), 200);
  ASSERT_EQ(contigs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(contigs[i].source_offset, 200 * i);
}

TEST(Contigs, PartialTailIsDropped) {
  EXPECT_EQ(extract_contigs(single_channel(std::vector<double>(399, 0.0), 200.0), 200).size(), 1u);
}

TEST(Contigs, MaskedPrefixIsSkipped) {
  auto rec = single_channel(std::vector<double>(400, 0.0), 200.0);
  std::fill(rec.artifact_mask.begin(), rec.artifact_mask.begin() + 200, 1);
  const auto contigs = extract_contigs(rec, 200);
  ASSERT_EQ(contigs.size(), 1u);
  EXPECT_EQ(contigs[0].source_offset, 200u);
}

TEST(Contigs, PurityAndCountBoundUnderRandomMasks) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pos(0, 4999), len(1, 300);
  for (int trial = 0; trial < 50; ++trial) {
    auto rec = single_channel(std::vector<double>(5000, 0.0), 200.0);
    for (int k = 0; k < trial % 8; ++k) {
      const std::size_t s = pos(rng), l = len(rng);
      for (std::size_t t = s; t < std::min<std::size_t>(5000, s + l); ++t) rec.artifact_mask[t] = 1;
    }
    const std::size_t L = 100 + 50 * (trial % 4);
    const auto contigs = extract_contigs(rec, L);
    EXPECT_LE(contigs.size(), rec.n_samples / L);
    std::size_t prev_end = 0;
    for (const auto& c : contigs) {
      EXPECT_EQ(c.length, L);
      EXPECT_GE(c.source_offset, prev_end);
      prev_end = c.source_offset + L;
      for (std::size_t t = c.source_offset; t < c.source_offset + L; ++t) ASSERT_EQ(rec.artifact_mask[t], 0);
    }
  }
}

std::vector<Contig> random_contigs(std::size_t n, std::uint64_t seed, double mean = 4.0, double sd = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(mean, sd);
  std::vector<Contig> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].n_channels = 3;
    out[i].length = 50;
    out[i].label = i % 3 == 0 ? Label::kMci : Label::kControl;
    out[i].data.resize(150);
    for (std::size_t k = 0; k < 150; ++k) out[i].data[k] = noise(rng) * (1.0 + static_cast<double>(k / 50));
  }
  return out;
}

void expect_zero_mean_unit_std(const std::vector<Contig>& contigs) {
  for (std::size_t ch = 0; ch < contigs[0].n_channels; ++ch) {
    double s = 0.0, ss = 0.0, n = 0.0;
    for (const auto& c : contigs) {
      for (double v : c.channel(ch)) {
        s += v;
        ss += v * v;
        n += 1.0;
      }
    }
    EXPECT_NEAR(s / n, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(ss / n - (s / n) * (s / n)), 1.0, 1e-6);
  }
}

TEST(Normalization, MeanStdGivesZeroMeanUnitStd) {
  const auto contigs = random_contigs(40, 1);
  expect_zero_mean_unit_std(apply_norm(contigs, fit_norm(contigs, NormMode::kMeanStd)));
}

TEST(Normalization, NoneIsIdentity) {
  const auto contigs = random_contigs(5, 2);
  const auto out = apply_norm(contigs, fit_norm(contigs, NormMode::kNone));
  for (std::size_t i = 0; i < contigs.size(); ++i) EXPECT_EQ(out[i].data, contigs[i].data);
}

TEST(Normalization, MinMaxIsAffineOutsideTrainingRange) {
  const auto train = random_contigs(10, 3);
  const auto stats = fit_norm(train, NormMode::kMinMax);
  for (const auto& c : apply_norm(train, stats)) {
    for (double v : c.data) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
  auto test = random_contigs(1, 4, 100.0, 1.0);
  const auto out = apply_norm(test, stats);
  EXPECT_GT(out[0].data[0], 1.0);
  const double expected = (test[0].data[0] - stats.offset[0]) / stats.scale[0];
  EXPECT_DOUBLE_EQ(out[0].data[0], expected);
}

TEST(Normalization, RefitOnNormalizedDataIsStandardButReapplyIsNot) {
  const auto contigs = random_contigs(30, 5);
  const auto stats = fit_norm(contigs, NormMode::kMeanStd);
  const auto once = apply_norm(contigs, stats);
  const auto twice = apply_norm(once, stats);
  double diff = 0.0;
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t k = 0; k < once[i].data.size(); ++k) diff += std::abs(once[i].data[k] - twice[i].data[k]);
  }
  EXPECT_GT(diff, 1.0);
  expect_zero_mean_unit_std(apply_norm(once, fit_norm(once, NormMode::kMeanStd)));
}

TEST(Normalization, MomentsMatchDirectFit) {
  const auto contigs = random_contigs(20, 6);
  ChannelMoments a(3), b(3);
  for (std::size_t i = 0; i < contigs.size(); ++i) (i < 7 ? a : b).add(contigs[i]);
  a.merge(b);
  for (NormMode mode : {NormMode::kMeanStd, NormMode::kMinMax}) {
    const auto direct = fit_norm(contigs, mode);
    const auto streamed = fit_norm(a, mode);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(streamed.offset[c], direct.offset[c], 1e-9 * (1.0 + std::abs(direct.offset[c])));
      EXPECT_NEAR(streamed.scale[c], direct.scale[c], 1e-9 * direct.scale[c]);
    }
  }
}

TEST(Normalization, ZeroVarianceChannelRejected) {
  auto contigs = random_contigs(3, 7);
  for (auto& c : contigs) std::fill(c.channel(1).begin(), c.channel(1).end(), 2.0);
  EXPECT_THROW(fit_norm(contigs, NormMode::kMeanStd), DataError);
  EXPECT_THROW(fit_norm(contigs, NormMode::kMinMax), DataError);
}

TEST(NormMode, NamesRoundTrip) {
  for (NormMode m : {NormMode::kNone, NormMode::kMinMax, NormMode::kMeanStd}) {
    EXPECT_EQ(parse_norm_mode(norm_mode_name(m)), m);
  }
  EXPECT_THROW(parse_norm_mode("zscore"), ConfigError);
}

std::vector<Contig> labelled(std::size_t n_control, std::size_t n_condition) {
  std::vector<Contig> out;
  for (std::size_t i = 0; i < n_control + n_condition; ++i) {
    Contig c;
    c.label = i < n_control ? Label::kControl : Label::kMci;
    c.source_offset = i;
    out.push_back(c);
  }
  return out;
}

TEST(Balance, MajorityIsSubsampledToMinority) {
  const auto out = balance_classes(labelled(100, 60), 3);
  std::size_t control = 0, condition = 0;
  for (const auto& c : out) (c.label == Label::kControl ? control : condition)++;
  EXPECT_EQ(control, 60u);
  EXPECT_EQ(condition, 60u);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LT(out[i - 1].source_offset, out[i].source_offset);
}

TEST(Balance, BalancedInputKeepsSizes) { EXPECT_EQ(balance_classes(labelled(40, 40), 9).size(), 80u); }

TEST(Balance, SameSeedSameSubset) {
  const auto a = balance_classes(labelled(100, 60), 21);
  const auto b = balance_classes(labelled(100, 60), 21);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].source_offset, b[i].source_offset);
}

TEST(Balance, SingleClassRejected) { EXPECT_THROW(balance_classes(labelled(5, 0), 1), DataError); }

TEST(Preprocess, DeterministicAndShaped) {
  SynthConfig s;
  s.n_patients_per_class = 1;
  s.duration_s = 10.0;
  s.sampling_rate_hz = 250.0;
  s.artifact_fraction = 0.1;
  s.seed = 3;
  const auto rec = generate_synthetic_patient(s, 0);
  PreprocessConfig pc;
  const auto a = preprocess_recording(rec, pc);
  const auto b = preprocess_recording(rec, pc);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].data, b[i].data);
    EXPECT_EQ(a[i].length, 200u);
    EXPECT_EQ(a[i].n_channels, kNumChannels);
  }
  pc.resample_mode = ResampleMode::kPerContig;
  for (const auto& c : preprocess_recording(rec, pc)) EXPECT_EQ(c.length, 200u);
}

}  // namespace
}  // namespace eegrel
