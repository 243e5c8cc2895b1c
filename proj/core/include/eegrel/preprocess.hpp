#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eegrel/dataio.hpp"

namespace eegrel {

// Cascade of second-order sections. Each section holds {b0, b1, b2, a1, a2}
// with a0 normalized to 1; `gain` multiplies the whole cascade.
struct SosFilter {
  std::vector<std::array<double, 5>> sections;
  double gain = 1.0;
};

// Digital Butterworth band-pass: `order`-th order analog low-pass prototype,
// low-pass to band-pass transform, bilinear transform with pre-warping.
SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs);

// H(e^{jw}) of a single forward pass at frequency f.
std::complex<double> frequency_response(const SosFilter& filter, double f_hz, double fs);

// Causal single pass with zero initial state.
void sos_filter(const SosFilter& filter, std::span<double> x);

// Forward-backward filtering with odd-reflection padding of `padlen` samples.
void filtfilt(const SosFilter& filter, std::span<double> x, std::size_t padlen);

// Zero-phase 4th-order Butterworth band-pass on every channel.
EegRecording bandpass(const EegRecording& rec, double low_hz, double high_hz);

// Linear interpolation at t_i = i / target_hz; the mask is OR-ed over the
// source samples each output sample depends on.
EegRecording resample(const EegRecording& rec, double target_hz);

struct Contig {
  std::string patient_id;
  Label label = Label::kControl;
  std::size_t n_channels = 0;
  std::size_t length = 0;
  // Channel-major [n_channels x length].
  std::vector<double> data;
  std::size_t source_offset = 0;

  std::span<const double> channel(std::size_t c) const { return {data.data() + c * length, length}; }
  std::span<double> channel(std::size_t c) { return {data.data() + c * length, length}; }
};

// Greedy, non-overlapping, artifact-free windows scanned left to right.
std::vector<Contig> extract_contigs(const EegRecording& rec, std::size_t contig_len);

enum class NormMode { kNone, kMinMax, kMeanStd };

std::string_view norm_mode_name(NormMode mode);
NormMode parse_norm_mode(std::string_view text);

// Per-channel affine normalization x' = (x - offset) / scale.
struct NormStats {
  NormMode mode = NormMode::kNone;
  std::vector<double> offset;
  std::vector<double> scale;
};

// Mergeable per-channel sufficient statistics, so stats can be fitted over
// patients streamed one at a time.
class ChannelMoments {
 public:
  ChannelMoments() = default;
  explicit ChannelMoments(std::size_t n_channels);

  void add(const Contig& contig);
  void merge(const ChannelMoments& other);

  std::size_t n_channels() const { return count_.size(); }
  double count(std::size_t c) const { return count_[c]; }
  double sum(std::size_t c) const { return sum_[c]; }
  double sum_sq(std::size_t c) const { return sum_sq_[c]; }
  double min(std::size_t c) const { return min_[c]; }
  double max(std::size_t c) const { return max_[c]; }

  // Restores one channel's statistics, e.g. from a cache file.
  void set(std::size_t c, double count, double sum, double sum_sq, double min, double max);

 private:
  std::vector<double> count_, sum_, sum_sq_, min_, max_;
};

NormStats fit_norm(std::span<const Contig> contigs, NormMode mode);
NormStats fit_norm(const ChannelMoments& moments, NormMode mode);
std::vector<Contig> apply_norm(std::span<const Contig> contigs, const NormStats& stats);
void apply_norm_in_place(Contig& contig, const NormStats& stats);

// Subsamples the majority class without replacement down to the minority
// count. Relative order of the kept contigs is preserved.
std::vector<Contig> balance_classes(std::span<const Contig> contigs, std::uint64_t seed);

// Indices kept by balance_classes, for callers that hold labels only.
std::vector<std::size_t> balance_indices(std::span<const std::uint8_t> binary_labels, std::uint64_t seed);

enum class ResampleMode { kWholeRecording, kPerContig };

struct PreprocessConfig {
  double band_lo_hz = 5.0;
  double band_hi_hz = 20.0;
  double target_hz = 200.0;
  std::size_t contig_len = 200;
  ResampleMode resample_mode = ResampleMode::kWholeRecording;

  void validate() const;
};

// bandpass -> resample -> segment, for one recording.
std::vector<Contig> preprocess_recording(const EegRecording& rec, const PreprocessConfig& config);

}  // namespace eegrel
