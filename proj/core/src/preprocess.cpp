#include "eegrel/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace eegrel {

EegRecording resample(const EegRecording& rec, double target_hz) {
  if (!(target_hz > 0.0) || target_hz > rec.sampling_rate_hz) {
    throw ConfigError("resample: target rate " + std::to_string(target_hz) + " Hz must be in (0, " +
                      std::to_string(rec.sampling_rate_hz) + "]");
  }
  if (target_hz == rec.sampling_rate_hz) return rec;

  const std::size_t n_in = rec.n_samples;
  const double ratio = rec.sampling_rate_hz / target_hz;
  // floor(duration * target) computed in integer arithmetic where possible.
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(n_in) / ratio + 1e-9));

  EegRecording out;
  out.patient_id = rec.patient_id;
  out.label = rec.label;
  out.sampling_rate_hz = target_hz;
  out.channel_names = rec.channel_names;
  out.n_samples = n_out;
  out.samples.resize(rec.n_channels() * n_out);
  out.artifact_mask.assign(n_out, 0);

  std::vector<std::size_t> j0(n_out);
  std::vector<double> frac(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double s = static_cast<double>(i) * rec.sampling_rate_hz / target_hz;
    j0[i] = std::min(static_cast<std::size_t>(s), n_in - 1);
    frac[i] = s - static_cast<double>(j0[i]);
    if (j0[i] + 1 >= n_in) frac[i] = 0.0;

    const double s_next = static_cast<double>(i + 1) * rec.sampling_rate_hz / target_hz;
    const auto hi = std::min(n_in, std::max(j0[i] + 1, static_cast<std::size_t>(std::ceil(s_next))));
    for (std::size_t j = j0[i]; j < hi; ++j) out.artifact_mask[i] |= rec.artifact_mask[j];
  }
  for (std::size_t c = 0; c < rec.n_channels(); ++c) {
    auto src = rec.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double a = src[j0[i]];
      dst[i] = frac[i] == 0.0 ? a : a + frac[i] * (src[j0[i] + 1] - a);
    }
  }
  return out;
}

std::vector<Contig> extract_contigs(const EegRecording& rec, std::size_t contig_len) {
  if (contig_len < 1) throw ConfigError("extract_contigs: contig_len must be >= 1");
  const std::size_t n = rec.n_samples;
  // last_masked[t] = index of the last masked sample in [0, t], or npos.
  constexpr auto npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> last_masked(n, npos);
  for (std::size_t t = 0; t < n; ++t) {
    last_masked[t] = rec.artifact_mask[t] ? t : (t > 0 ? last_masked[t - 1] : npos);
  }
  std::vector<Contig> contigs;
  std::size_t o = 0;
  while (o + contig_len <= n) {
    const std::size_t lm = last_masked[o + contig_len - 1];
    if (lm != npos && lm >= o) {
      o = lm + 1;
      continue;
    }
    Contig c;
    c.patient_id = rec.patient_id;
    c.label = rec.label;
    c.n_channels = rec.n_channels();
    c.length = contig_len;
    c.source_offset = o;
    c.data.resize(c.n_channels * contig_len);
    for (std::size_t ch = 0; ch < c.n_channels; ++ch) {
      auto src = rec.channel(ch).subspan(o, contig_len);
      std::copy(src.begin(), src.end(), c.channel(ch).begin());
    }
    contigs.push_back(std::move(c));
    o += contig_len;
  }
  return contigs;
}

std::string_view norm_mode_name(NormMode mode) {
  switch (mode) {
    case NormMode::kNone:
      return "none";
    case NormMode::kMinMax:
      return "minmax";
    case NormMode::kMeanStd:
      return "meanstd";
  }
  return "none";
}

NormMode parse_norm_mode(std::string_view text) {
  if (text == "none") return NormMode::kNone;
  if (text == "minmax") return NormMode::kMinMax;
  if (text == "meanstd") return NormMode::kMeanStd;
  throw ConfigError("unknown normalization mode '" + std::string(text) + "' (none|minmax|meanstd)");
}

ChannelMoments::ChannelMoments(std::size_t n_channels)
    : count_(n_channels, 0.0),
      sum_(n_channels, 0.0),
      sum_sq_(n_channels, 0.0),
      min_(n_channels, std::numeric_limits<double>::infinity()),
      max_(n_channels, -std::numeric_limits<double>::infinity()) {}

void ChannelMoments::add(const Contig& contig) {
  if (count_.empty()) *this = ChannelMoments(contig.n_channels);
  if (contig.n_channels != count_.size()) throw ShapeError("ChannelMoments: channel count mismatch");
  for (std::size_t c = 0; c < contig.n_channels; ++c) {
    double s = 0, ss = 0, lo = min_[c], hi = max_[c];
    for (double v : contig.channel(c)) {
      s += v;
      ss += v * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    count_[c] += static_cast<double>(contig.length);
    sum_[c] += s;
    sum_sq_[c] += ss;
    min_[c] = lo;
    max_[c] = hi;
  }
}

void ChannelMoments::merge(const ChannelMoments& other) {
  if (other.count_.empty()) return;
  if (count_.empty()) {
    *this = other;
    return;
  }
  if (other.count_.size() != count_.size()) throw ShapeError("ChannelMoments: channel count mismatch");
  for (std::size_t c = 0; c < count_.size(); ++c) {
    count_[c] += other.count_[c];
    sum_[c] += other.sum_[c];
    sum_sq_[c] += other.sum_sq_[c];
    min_[c] = std::min(min_[c], other.min_[c]);
    max_[c] = std::max(max_[c], other.max_[c]);
  }
}

void ChannelMoments::set(std::size_t c, double count, double sum, double sum_sq, double min, double max) {
  count_.at(c) = count;
  sum_[c] = sum;
  sum_sq_[c] = sum_sq;
  min_[c] = min;
  max_[c] = max;
}

NormStats fit_norm(const ChannelMoments& moments, NormMode mode) {
  NormStats stats;
  stats.mode = mode;
  const std::size_t nc = moments.n_channels();
  stats.offset.assign(nc, 0.0);
  stats.scale.assign(nc, 1.0);
  if (mode == NormMode::kNone) return stats;
  if (nc == 0) throw DataError("fit_norm: no training data");
  for (std::size_t c = 0; c < nc; ++c) {
    if (moments.count(c) == 0) throw DataError("fit_norm: no training data");
    if (mode == NormMode::kMeanStd) {
      const double mean = moments.sum(c) / moments.count(c);
      const double var = std::max(0.0, moments.sum_sq(c) / moments.count(c) - mean * mean);
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw DataError("fit_norm: channel " + std::to_string(c) + " has zero variance");
      }
      stats.offset[c] = mean;
      stats.scale[c] = sd;
    } else {
      const double range = moments.max(c) - moments.min(c);
      if (!(range > 0.0)) throw DataError("fit_norm: channel " + std::to_string(c) + " has a degenerate range");
      stats.offset[c] = moments.min(c);
      stats.scale[c] = range;
    }
  }
  return stats;
}

NormStats fit_norm(std::span<const Contig> contigs, NormMode mode) {
  if (mode == NormMode::kNone) {
    NormStats stats;
    const std::size_t nc = contigs.empty() ? kNumChannels : contigs.front().n_channels;
    stats.offset.assign(nc, 0.0);
    stats.scale.assign(nc, 1.0);
    return stats;
  }
  if (contigs.empty()) throw DataError("fit_norm: no training contigs");
  const std::size_t nc = contigs.front().n_channels;
  if (mode == NormMode::kMinMax) {
    ChannelMoments m(nc);
    for (const auto& c : contigs) m.add(c);
    return fit_norm(m, mode);
  }
  // Two-pass mean/variance for accuracy.
  std::vector<double> mean(nc, 0.0), var(nc, 0.0);
  double count = 0;
  for (const auto& c : contigs) {
    if (c.n_channels != nc) throw ShapeError("fit_norm: contigs disagree on channel count");
    for (std::size_t ch = 0; ch < nc; ++ch) {
      for (double v : c.channel(ch)) mean[ch] += v;
    }
    count += static_cast<double>(c.length);
  }
  for (auto& m : mean) m /= count;
  for (const auto& c : contigs) {
    for (std::size_t ch = 0; ch < nc; ++ch) {
      for (double v : c.channel(ch)) var[ch] += (v - mean[ch]) * (v - mean[ch]);
    }
  }
  NormStats stats;
  stats.mode = mode;
  stats.offset = mean;
  stats.scale.resize(nc);
  for (std::size_t ch = 0; ch < nc; ++ch) {
    const double sd = std::sqrt(var[ch] / count);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean[ch])))) {
      throw DataError("fit_norm: channel " + std::to_string(ch) + " has zero variance");
    }
    stats.scale[ch] = sd;
  }
  return stats;
}

void apply_norm_in_place(Contig& contig, const NormStats& stats) {
  if (stats.mode == NormMode::kNone) return;
  if (stats.offset.size() != contig.n_channels) throw ShapeError("apply_norm: channel count mismatch");
  for (std::size_t c = 0; c < contig.n_channels; ++c) {
    const double off = stats.offset[c], inv = 1.0 / stats.scale[c];
    for (double& v : contig.channel(c)) v = (v - off) * inv;
  }
}

std::vector<Contig> apply_norm(std::span<const Contig> contigs, const NormStats& stats) {
  std::vector<Contig> out(contigs.begin(), contigs.end());
  for (auto& c : out) apply_norm_in_place(c, stats);
  return out;
}

std::vector<std::size_t> balance_indices(std::span<const std::uint8_t> labels, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DataError("balance_classes: both classes must be present");
  auto& majority = pos.size() > neg.size() ? pos : neg;
  const auto& minority = pos.size() > neg.size() ? neg : pos;
  std::mt19937_64 rng(seed);
  std::shuffle(majority.begin(), majority.end(), rng);
  majority.resize(minority.size());
  std::vector<std::size_t> kept;
  kept.reserve(2 * minority.size());
  kept.insert(kept.end(), pos.begin(), pos.end());
  kept.insert(kept.end(), neg.begin(), neg.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<Contig> balance_classes(std::span<const Contig> contigs, std::uint64_t seed) {
  std::vector<Label> distinct;
  for (const auto& c : contigs) {
    if (std::find(distinct.begin(), distinct.end(), c.label) == distinct.end()) distinct.push_back(c.label);
  }
  if (distinct.size() != 2) {
    throw DataError("balance_classes: expected exactly two classes, found " + std::to_string(distinct.size()));
  }
  std::vector<std::uint8_t> labels(contigs.size());
  for (std::size_t i = 0; i < contigs.size(); ++i) labels[i] = contigs[i].label == distinct[1];
  std::vector<Contig> out;
  for (std::size_t i : balance_indices(labels, seed)) out.push_back(contigs[i]);
  return out;
}

void PreprocessConfig::validate() const {
  if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz)) throw ConfigError("preprocess: need 0 < band_lo < band_hi");
  if (!(target_hz > 2.0 * band_hi_hz)) throw ConfigError("preprocess: band_hi must be below target_hz/2");
  if (contig_len < 2) throw ConfigError("preprocess: contig_len must be >= 2");
}

std::vector<Contig> preprocess_recording(const EegRecording& rec, const PreprocessConfig& config) {
  config.validate();
  auto violations = validate_recording(rec);
  if (!violations.empty()) throw DataError("recording " + rec.patient_id + ": " + violations.front());
  const EegRecording filtered = bandpass(rec, config.band_lo_hz, config.band_hi_hz);
  if (config.resample_mode == ResampleMode::kWholeRecording || rec.sampling_rate_hz == config.target_hz) {
    return extract_contigs(resample(filtered, config.target_hz), config.contig_len);
  }
  // Segment at the source rate, then resample each window to contig_len.
  const double ratio = rec.sampling_rate_hz / config.target_hz;
  const auto src_len = static_cast<std::size_t>(std::llround(static_cast<double>(config.contig_len) * ratio));
  std::vector<Contig> out;
  for (auto& c : extract_contigs(filtered, src_len)) {
    EegRecording window;
    window.patient_id = c.patient_id;
    window.label = c.label;
    window.sampling_rate_hz = rec.sampling_rate_hz;
    window.channel_names = rec.channel_names;
    window.n_samples = src_len;
    window.samples = std::move(c.data);
    window.artifact_mask.assign(src_len, 0);
    EegRecording r = resample(window, config.target_hz);
    Contig rc;
    rc.patient_id = c.patient_id;
    rc.label = c.label;
    rc.n_channels = c.n_channels;
    rc.length = config.contig_len;
    rc.source_offset = c.source_offset;
    rc.data.resize(rc.n_channels * rc.length);
    for (std::size_t ch = 0; ch < rc.n_channels; ++ch) {
      auto src = r.channel(ch);
      std::copy_n(src.begin(), std::min(src.size(), rc.length), rc.channel(ch).begin());
      // Rounding can leave one sample short; hold the last value.
      for (std::size_t t = src.size(); t < rc.length; ++t) rc.channel(ch)[t] = src.empty() ? 0.0 : src.back();
    }
    out.push_back(std::move(rc));
  }
  return out;
}

}  // namespace eegrel
