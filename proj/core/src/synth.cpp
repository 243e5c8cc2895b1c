#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "eegrel/dataio.hpp"

namespace eegrel {

namespace {

// Amplitudes are in microvolts; powers in uV^2.
constexpr double kAlphaBasePower = 50.0;  // 10 uV sinusoid
constexpr double kAlphaPowerCv = 0.25;    // between-patient SD / base
// Burst jitter and background leakage widen contig-level alpha power beyond
// the between-patient spread; this rescales delta so one unit is roughly one
// contig-level control SD.
constexpr double kEffectPerDelta = 1.3;
constexpr double kThetaBasePower = 18.0;
constexpr double kBetaBasePower = 8.0;
constexpr double kNoiseRms = 8.0;

struct Band {
  double lo_hz, hi_hz;
};
constexpr Band kTheta{4.5, 7.5};
constexpr Band kAlpha{8.5, 11.5};
constexpr Band kBeta{13.0, 25.0};

// Relative topography per canonical channel (Fp1..O2).
constexpr std::array<double, kNumChannels> kAlphaWeight = {0.4, 0.4, 0.5, 0.5, 0.5, 0.5, 0.5, 0.7, 0.7,
                                                           0.7, 0.7, 0.7, 1.0, 1.0, 1.0, 1.0, 1.0};
constexpr std::array<double, kNumChannels> kThetaWeight = {1.0, 1.0, 0.9, 1.0, 1.0, 1.0, 0.9, 0.7, 0.8,
                                                           0.8, 0.8, 0.7, 0.6, 0.6, 0.6, 0.5, 0.5};

// Paul Kellet's refined pink-noise filter applied to unit white noise.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = white(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  double mean = 0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double& v : out) {
    v -= mean;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(n));
  if (rms > 0) {
    for (double& v : out) v /= rms;
  }
  return out;
}

// Adds consecutive sinusoidal bursts (0.5-2 s each) whose mean power is
// `power`, with random frequency inside `band` and random phase per burst.
void add_bursts(std::span<double> x, double fs, Band band, double power, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> duration(0.5, 2.0);
  std::uniform_real_distribution<double> freq(band.lo_hz, std::min(band.hi_hz, 0.45 * fs));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 0.15);
  const double base_amp = std::sqrt(2.0 * power);
  std::size_t t = 0;
  while (t < x.size()) {
    const auto len = static_cast<std::size_t>(std::max(1.0, std::round(duration(rng) * fs)));
    const double f = freq(rng), ph = phase(rng);
    const double amp = base_amp * std::exp(jitter(rng));
    const std::size_t end = std::min(x.size(), t + len);
    const double w = 2.0 * std::numbers::pi * f / fs;
    for (std::size_t i = t; i < end; ++i) x[i] += amp * std::sin(w * static_cast<double>(i - t) + ph);
    t = end;
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_patients_per_class < 1) throw ConfigError("synth: n_patients_per_class must be >= 1");
  if (!(sampling_rate_hz > 60.0)) throw ConfigError("synth: sampling_rate_hz must exceed 60 Hz");
  if (!(duration_s > 0.0)) throw ConfigError("synth: duration_s must be positive");
  if (duration_s * sampling_rate_hz < 2.0 * static_cast<double>(contig_len)) {
    throw ConfigError("synth: duration_s*sampling_rate_hz must be at least twice the contig length");
  }
  if (!(effect_size_delta >= 0.0)) throw ConfigError("synth: effect_size_delta must be >= 0");
  if (!(domain_shift > 0.0)) throw ConfigError("synth: domain_shift must be positive");
  if (!(artifact_fraction >= 0.0 && artifact_fraction < 1.0)) {
    throw ConfigError("synth: artifact_fraction must lie in [0, 1)");
  }
  if (condition == Label::kControl) throw ConfigError("synth: condition label cannot be control");
}

double synthetic_alpha_power(const SynthConfig& config, std::size_t index) {
  std::mt19937_64 rng(derive_seed(config.seed, "synth.patient.alpha", index));
  std::normal_distribution<double> z(0.0, 1.0);
  const double cond = index >= config.n_patients_per_class ? 1.0 : 0.0;
  const double factor = 1.0 + kAlphaPowerCv * (z(rng) + kEffectPerDelta * config.effect_size_delta * cond);
  return kAlphaBasePower * std::max(0.05, factor);
}

EegRecording generate_synthetic_patient(const SynthConfig& config, std::size_t index) {
  config.validate();
  if (index >= 2 * config.n_patients_per_class) throw ConfigError("synth: patient index out of range");

  const double fs = config.sampling_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(config.duration_s * fs));
  std::mt19937_64 rng(derive_seed(config.seed, "synth.patient", index));
  std::normal_distribution<double> normal(0.0, 1.0);

  EegRecording rec;
  char id[32];
  std::snprintf(id, sizeof id, "syn%04zu", index);
  rec.patient_id = id;
  rec.label = index >= config.n_patients_per_class ? config.condition : Label::kControl;
  rec.sampling_rate_hz = fs;
  rec.channel_names = canonical_channel_names();
  rec.n_samples = n;
  rec.samples.assign(kNumChannels * n, 0.0);
  rec.artifact_mask.assign(n, 0);

  // Class-independent patient fingerprint.
  const double alpha_power = synthetic_alpha_power(config, index);
  const double theta_power = kThetaBasePower * std::exp(0.3 * normal(rng));
  const double beta_power = kBetaBasePower * std::exp(0.3 * normal(rng));
  const double noise_rms = kNoiseRms * std::exp(0.15 * normal(rng));
  std::array<double, kNumChannels> gain{};
  for (auto& g : gain) g = std::exp(0.2 * normal(rng));

  for (std::size_t c = 0; c < kNumChannels; ++c) {
    std::mt19937_64 crng(derive_seed(config.seed, "synth.channel", index * kNumChannels + c));
    auto x = rec.channel(c);
    auto pink = pink_noise(n, crng);
    for (std::size_t t = 0; t < n; ++t) x[t] = noise_rms * pink[t];
    add_bursts(x, fs, kTheta, theta_power * kThetaWeight[c], crng);
    add_bursts(x, fs, kAlpha, alpha_power * kAlphaWeight[c], crng);
    add_bursts(x, fs, kBeta, beta_power, crng);
    for (double& v : x) v *= gain[c] * config.domain_shift;
  }

  if (config.artifact_fraction > 0.0) {
    std::mt19937_64 arng(derive_seed(config.seed, "synth.artifact", index));
    std::uniform_real_distribution<double> span_s(0.5, 2.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto target = static_cast<std::size_t>(std::ceil(config.artifact_fraction * static_cast<double>(n)));
    std::size_t masked = 0;
    while (masked < target) {
      const auto len = std::min(n, static_cast<std::size_t>(std::max(1.0, std::round(span_s(arng) * fs))));
      const auto start = static_cast<std::size_t>(unit(arng) * static_cast<double>(n - len + 1));
      const double amp = 150.0 * (0.5 + unit(arng)) * config.domain_shift;
      for (std::size_t t = start; t < std::min(n, start + len); ++t) {
        if (!rec.artifact_mask[t]) ++masked;
        rec.artifact_mask[t] = 1;
        // Slow high-amplitude excursion, as from blinks or movement.
        const double shape = std::sin(std::numbers::pi * static_cast<double>(t - start) / static_cast<double>(len));
        for (std::size_t c = 0; c < kNumChannels; ++c) rec.channel(c)[t] += amp * shape;
      }
    }
  }
  return rec;
}

CohortDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  CohortDataset dataset;
  dataset.name = "synthetic";
  dataset.recordings.reserve(2 * config.n_patients_per_class);
  for (std::size_t i = 0; i < 2 * config.n_patients_per_class; ++i) {
    dataset.recordings.push_back(generate_synthetic_patient(config, i));
  }
  return dataset;
}

}  // namespace eegrel
