#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eegrel/preprocess.hpp"

namespace eegrel {

// 1 Hz bands [4,5), [5,6), ..., [29,30).
inline constexpr std::size_t kNumBands = 26;
inline constexpr double kFirstBandHz = 4.0;
inline constexpr std::size_t kNumSpectralFeatures = kNumChannels * kNumBands;

// One-sided PSD over bins k*fs/n_fft, k = 0..n_fft/2. The signal is demeaned,
// Hann-windowed and zero-padded to n_fft (0 means no padding); bins sum to
// the mean square of the windowed signal.
std::vector<double> periodogram(std::span<const double> signal, double fs, std::size_t n_fft = 0);

// band_powers() transforms at this multiple of the contig length. At L = 200
// and 200 Hz that gives 0.5 Hz bins, so a tone between two integer
// frequencies still peaks inside its own band.
inline constexpr std::size_t kBandPowerPadding = 2;

struct SpectralFeatures {
  std::string patient_id;
  Label label = Label::kControl;
  // values[feature_index(channel, band)]
  std::vector<double> values;
};

// Model input layout: channel-major.
constexpr std::size_t feature_index(std::size_t channel, std::size_t band) { return channel * kNumBands + band; }

SpectralFeatures band_powers(const Contig& contig, double fs);

// Band powers of a normalized contig equal those of the raw contig with
// each channel row divided by scale^2 (the offset is removed by demeaning).
void normalize_features(std::span<double> values, std::size_t n_channels, const NormStats& stats);

}  // namespace eegrel
