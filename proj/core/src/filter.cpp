#include <algorithm>
#include <cmath>
#include <numbers>

#include "eegrel/preprocess.hpp"

namespace eegrel {

using cplx = std::complex<double>;

SosFilter design_butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (order < 1) throw ConfigError("bandpass: order must be >= 1");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw ConfigError("bandpass: need 0 < low < high < fs/2, got low=" + std::to_string(low_hz) +
                      " high=" + std::to_string(high_hz) + " fs=" + std::to_string(fs));
  }
  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(pi * low_hz / fs);
  const double w2 = fs2 * std::tan(pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  // Analog prototype poles in the upper half plane; conjugates are implied.
  // Each maps to two band-pass poles, kept with positive imaginary part.
  std::vector<cplx> bp_poles;
  for (int k = 0; k < order; ++k) {
    const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
    const cplx p = std::polar(1.0, theta);
    const cplx lp = p * bw / 2.0;
    const cplx disc = std::sqrt(lp * lp - w0 * w0);
    for (cplx q : {lp + disc, lp - disc}) {
      if (q.imag() >= 0.0) bp_poles.push_back(q);
    }
  }
  // 2*order band-pass poles form `order` conjugate pairs.
  bp_poles.resize(static_cast<std::size_t>(order));

  SosFilter filter;
  // Analog gain bw^order; zeros: order at s=0 (z=1), order at s=inf (z=-1).
  cplx gain = std::pow(bw, order);
  for (const cplx& p : bp_poles) {
    const cplx z = (fs2 + p) / (fs2 - p);
    // Zeros at s=0 contribute (fs2 - 0) each; the pair shares one at 0 and
    // one at infinity per section.
    gain *= fs2 / ((fs2 - p) * (fs2 - std::conj(p)));
    filter.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  filter.gain = gain.real();
  return filter;
}

std::complex<double> frequency_response(const SosFilter& filter, double f_hz, double fs) {
  const cplx z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
  const cplx z2 = z1 * z1;
  cplx h = filter.gain;
  for (const auto& s : filter.sections) {
    h *= (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[3] * z1 + s[4] * z2);
  }
  return h;
}

void sos_filter(const SosFilter& filter, std::span<double> x) {
  for (double& v : x) v *= filter.gain;
  for (const auto& s : filter.sections) {
    // Transposed direct form II.
    double d1 = 0.0, d2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s[0] * in + d1;
      d1 = s[1] * in - s[3] * out + d2;
      d2 = s[2] * in - s[4] * out;
      v = out;
    }
  }
}

void filtfilt(const SosFilter& filter, std::span<double> x, std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return;
  padlen = std::min(padlen, n - 1);
  std::vector<double> ext(n + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(padlen));
  sos_filter(filter, ext);
  std::reverse(ext.begin(), ext.end());
  sos_filter(filter, ext);
  std::reverse(ext.begin(), ext.end());
  std::copy_n(ext.begin() + static_cast<std::ptrdiff_t>(padlen), n, x.begin());
}

EegRecording bandpass(const EegRecording& rec, double low_hz, double high_hz) {
  const SosFilter filter = design_butterworth_bandpass(4, low_hz, high_hz, rec.sampling_rate_hz);
  // About three periods of the lower band edge.
  const auto padlen = static_cast<std::size_t>(3.0 * std::ceil(rec.sampling_rate_hz / low_hz));
  EegRecording out = rec;
  for (std::size_t c = 0; c < out.n_channels(); ++c) filtfilt(filter, out.channel(c), padlen);
  return out;
}

}  // namespace eegrel
