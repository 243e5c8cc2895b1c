#include "eegrel/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <numbers>

namespace eegrel {

namespace {

// Owns an r2c plan and its buffers for one transform length.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(fftw_alloc_real(n)),
        out_(fftw_alloc_complex(n / 2 + 1)),
        plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE)) {}
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(out_);
    fftw_free(in_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  std::complex<double> bin(std::size_t k) const { return {out_[k][0], out_[k][1]}; }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

RealFft& fft_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

}  // namespace

std::vector<double> periodogram(std::span<const double> signal, double fs, std::size_t n_fft) {
  const std::size_t n = signal.size();
  if (n < 2) throw ShapeError("periodogram: need at least 2 samples");
  if (!(fs > 0.0)) throw ConfigError("periodogram: fs must be positive");
  if (n_fft == 0) n_fft = n;
  if (n_fft < n) throw ConfigError("periodogram: n_fft shorter than the signal");
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(n);

  RealFft& fft = fft_for(n_fft);
  double* in = fft.input();
  std::fill(in + n, in + n_fft, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    // Periodic Hann window.
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    in[i] = (signal[i] - mean) * w;
  }
  fft.execute();

  const std::size_t n_bins = n_fft / 2 + 1;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n_fft));
  std::vector<double> psd(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const bool unpaired = k == 0 || (n_fft % 2 == 0 && k == n_fft / 2);
    psd[k] = (unpaired ? 1.0 : 2.0) * std::norm(fft.bin(k)) * norm;
  }
  return psd;
}

SpectralFeatures band_powers(const Contig& contig, double fs) {
  if (contig.length < 2) throw ShapeError("band_powers: contig shorter than 2 samples");
  SpectralFeatures features;
  features.patient_id = contig.patient_id;
  features.label = contig.label;
  features.values.assign(contig.n_channels * kNumBands, 0.0);
  const std::size_t n_fft = kBandPowerPadding * contig.length;
  const double df = fs / static_cast<double>(n_fft);
  for (std::size_t c = 0; c < contig.n_channels; ++c) {
    const auto psd = periodogram(contig.channel(c), fs, n_fft);
    for (std::size_t k = 0; k < psd.size(); ++k) {
      const double f = static_cast<double>(k) * df;
      // Guard bin frequencies like 9.9999999 that should land on 10.
      const double band = std::floor(f - kFirstBandHz + 1e-9);
      if (band < 0.0 || band >= static_cast<double>(kNumBands)) continue;
      features.values[feature_index(c, static_cast<std::size_t>(band))] += psd[k];
    }
  }
  return features;
}

void normalize_features(std::span<double> values, std::size_t n_channels, const NormStats& stats) {
  if (stats.mode == NormMode::kNone) return;
  if (stats.scale.size() != n_channels || values.size() != n_channels * kNumBands) {
    throw ShapeError("normalize_features: shape mismatch");
  }
  for (std::size_t c = 0; c < n_channels; ++c) {
    const double inv = 1.0 / (stats.scale[c] * stats.scale[c]);
    for (std::size_t b = 0; b < kNumBands; ++b) values[feature_index(c, b)] *= inv;
  }
}

}  // namespace eegrel
