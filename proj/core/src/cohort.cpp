#include "eegrel/cohort.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

namespace eegrel {

namespace {

constexpr char kCohortMagic[4] = {'C', 'O', 'H', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string where) : in_(in), where_(std::move(where)) {}

  void bytes(void* dst, std::size_t n) {
    if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
      throw DataError(where_ + ": truncated cohort cache");
    }
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | std::uint64_t(u32()) << 32;
  }
  std::string string() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) throw DataError(where_ + ": implausible string length in cohort cache");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::string& where() const { return where_; }

 private:
  std::istream& in_;
  std::string where_;
};

void append_samples(PatientSamples& patient, const std::vector<Contig>& contigs, Domain domain, double fs) {
  for (const auto& c : contigs) {
    patient.moments.add(c);
    if (domain == Domain::kTime) {
      patient.values.insert(patient.values.end(), c.data.begin(), c.data.end());
    } else {
      const auto f = band_powers(c, fs);
      patient.values.insert(patient.values.end(), f.values.begin(), f.values.end());
    }
    ++patient.n_samples;
  }
}

}  // namespace

Shape PreparedCohort::sample_shape() const {
  if (domain == Domain::kFrequency) return {kNumSpectralFeatures};
  return {kNumChannels, contig_len};
}

std::size_t PreparedCohort::total_samples() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.n_samples;
  return n;
}

std::vector<std::uint8_t> PreparedCohort::patient_targets() const {
  std::vector<std::uint8_t> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(p.target());
  return out;
}

PatientSamples prepare_patient(const EegRecording& rec, const PreprocessConfig& config, Domain domain) {
  if (rec.n_channels() != kNumChannels) {
    throw DataError("recording " + rec.patient_id + " has " + std::to_string(rec.n_channels()) + " channels, need " +
                    std::to_string(kNumChannels));
  }
  PatientSamples patient;
  patient.patient_id = rec.patient_id;
  patient.label = rec.label;
  patient.moments = ChannelMoments(kNumChannels);
  append_samples(patient, preprocess_recording(rec, config), domain, config.target_hz);
  return patient;
}

PreparedCohort to_frequency(const PreparedCohort& time_cohort) {
  if (time_cohort.domain != Domain::kTime) throw DataError("to_frequency: cohort is already frequency-domain");
  PreparedCohort out;
  out.domain = Domain::kFrequency;
  out.sampling_rate_hz = time_cohort.sampling_rate_hz;
  out.contig_len = time_cohort.contig_len;
  const std::size_t in_size = time_cohort.sample_size();
  Contig c;
  c.n_channels = kNumChannels;
  c.length = time_cohort.contig_len;
  c.data.resize(in_size);
  for (const auto& p : time_cohort.patients) {
    PatientSamples q;
    q.patient_id = p.patient_id;
    q.label = p.label;
    q.moments = p.moments;
    q.n_samples = p.n_samples;
    q.values.reserve(p.n_samples * kNumSpectralFeatures);
    for (std::size_t i = 0; i < p.n_samples; ++i) {
      std::copy_n(p.values.begin() + static_cast<std::ptrdiff_t>(i * in_size), in_size, c.data.begin());
      const auto f = band_powers(c, time_cohort.sampling_rate_hz);
      q.values.insert(q.values.end(), f.values.begin(), f.values.end());
    }
    out.patients.push_back(std::move(q));
  }
  return out;
}

PreparedCohort prepare_cohort(const DatasetReader& reader, const PreprocessConfig& config, Domain domain,
                              ConditionChoice condition,
                              const std::function<void(std::size_t, std::size_t)>& progress) {
  config.validate();
  std::set<Label> positives;
  for (const auto& e : reader.entries()) {
    if (is_condition(e.label)) positives.insert(e.label);
  }
  if (!condition) {
    if (positives.size() != 1) {
      throw DataError("dataset " + reader.path().string() + " has " + std::to_string(positives.size()) +
                      " non-control labels; choose one with dataset.condition");
    }
    condition = *positives.begin();
  } else if (!is_condition(*condition)) {
    throw ConfigError("dataset.condition must be a non-control label");
  }

  PreparedCohort cohort;
  cohort.domain = domain;
  cohort.sampling_rate_hz = config.target_hz;
  cohort.contig_len = config.contig_len;
  for (std::size_t i = 0; i < reader.size(); ++i) {
    const Label label = reader.entries()[i].label;
    if (label != Label::kControl && label != *condition) continue;
    cohort.patients.push_back(prepare_patient(reader.load(i), config, domain));
    if (progress) progress(i + 1, reader.size());
  }
  return cohort;
}

PreparedCohort prepare_synthetic(const SynthConfig& synth, const PreprocessConfig& config, Domain domain) {
  synth.validate();
  config.validate();
  PreparedCohort cohort;
  cohort.domain = domain;
  cohort.sampling_rate_hz = config.target_hz;
  cohort.contig_len = config.contig_len;
  for (std::size_t i = 0; i < 2 * synth.n_patients_per_class; ++i) {
    cohort.patients.push_back(prepare_patient(generate_synthetic_patient(synth, i), config, domain));
  }
  return cohort;
}

PreparedCohort select_patients(const PreparedCohort& cohort, std::span<const std::size_t> patients) {
  PreparedCohort out;
  out.domain = cohort.domain;
  out.sampling_rate_hz = cohort.sampling_rate_hz;
  out.contig_len = cohort.contig_len;
  for (std::size_t i : patients) out.patients.push_back(cohort.patients.at(i));
  return out;
}

NormStats fit_cohort_norm(const PreparedCohort& cohort, std::span<const std::size_t> patients, NormMode mode) {
  ChannelMoments moments(kNumChannels);
  for (std::size_t i : patients) moments.merge(cohort.patients.at(i).moments);
  return fit_norm(moments, mode);
}

Tensor SampleSet::batch(std::span<const std::size_t> idx) const {
  Shape shape = sample_shape;
  shape.insert(shape.begin(), idx.size());
  Tensor out(shape);
  const std::size_t d = sample_size();
  double* dst = out.data();
  for (std::size_t i : idx) {
    const float* src = x.data() + i * d;
    std::copy(src, src + d, dst);
    dst += d;
  }
  return out;
}

Tensor SampleSet::batch(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return batch(idx);
}

SampleSet SampleSet::subset(std::span<const std::size_t> idx) const {
  SampleSet out;
  out.sample_shape = sample_shape;
  out.patient_ids = patient_ids;
  out.patient_targets = patient_targets;
  const std::size_t d = sample_size();
  out.x.reserve(idx.size() * d);
  for (std::size_t i : idx) {
    out.x.insert(out.x.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d),
                 x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    out.y.push_back(y[i]);
    out.patient.push_back(patient[i]);
  }
  return out;
}

SampleSet build_samples(const PreparedCohort& cohort, std::span<const std::size_t> patients, const NormStats& stats) {
  SampleSet set;
  set.sample_shape = cohort.sample_shape();
  const std::size_t d = set.sample_size();
  const bool normalize = stats.mode != NormMode::kNone;
  if (normalize && (stats.scale.size() != kNumChannels || stats.offset.size() != kNumChannels)) {
    throw ShapeError("build_samples: norm stats cover " + std::to_string(stats.scale.size()) + " channels, need " +
                     std::to_string(kNumChannels));
  }
  std::size_t total = 0;
  for (std::size_t p : patients) total += cohort.patients.at(p).n_samples;
  set.x.resize(total * d);
  set.y.reserve(total);
  set.patient.reserve(total);

  // Per-element affine map (a * v + b) expanding the per-channel stats.
  std::vector<double> mul(d, 1.0), add(d, 0.0);
  if (normalize) {
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const double inv = 1.0 / stats.scale[c];
      if (cohort.domain == Domain::kTime) {
        for (std::size_t t = 0; t < cohort.contig_len; ++t) {
          mul[c * cohort.contig_len + t] = inv;
          add[c * cohort.contig_len + t] = -stats.offset[c] * inv;
        }
      } else {
        for (std::size_t b = 0; b < kNumBands; ++b) mul[feature_index(c, b)] = inv * inv;
      }
    }
  }

  float* dst = set.x.data();
  for (std::size_t p : patients) {
    const auto& patient = cohort.patients[p];
    const std::size_t pid = set.patient_ids.size();
    set.patient_ids.push_back(patient.patient_id);
    set.patient_targets.push_back(patient.target());
    for (std::size_t s = 0; s < patient.n_samples; ++s) {
      const float* src = patient.values.data() + s * d;
      for (std::size_t j = 0; j < d; ++j) {
        dst[j] = static_cast<float>(mul[j] * static_cast<double>(src[j]) + add[j]);
      }
      dst += d;
      set.y.push_back(patient.target());
      set.patient.push_back(pid);
    }
  }
  return set;
}

void save_cohort(const PreparedCohort& cohort, const std::filesystem::path& path, const CacheMetadata& metadata) {
  std::ostringstream meta;
  meta << "domain=" << domain_name(cohort.domain) << '\n'
       << "sampling_rate_hz=" << format_double(cohort.sampling_rate_hz) << '\n'
       << "contig_len=" << cohort.contig_len << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("cache metadata '" + k + "' must be a single line without '=' in the key");
    }
    meta << "meta." << k << '=' << v << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write cohort cache " + path.string());
  out.write(kCohortMagic, 4);
  put_string(out, meta.str());
  put_u32(out, static_cast<std::uint32_t>(cohort.patients.size()));
  const std::size_t d = cohort.sample_size();
  for (const auto& p : cohort.patients) {
    put_string(out, p.patient_id);
    put_string(out, std::string(label_name(p.label)));
    put_u32(out, static_cast<std::uint32_t>(p.n_samples));
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const bool empty = p.moments.n_channels() == 0;
      for (double v : {empty ? 0.0 : p.moments.count(c), empty ? 0.0 : p.moments.sum(c),
                       empty ? 0.0 : p.moments.sum_sq(c), empty ? 0.0 : p.moments.min(c),
                       empty ? 0.0 : p.moments.max(c)}) {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
    if (p.values.size() != p.n_samples * d) throw ShapeError("save_cohort: patient sample buffer size mismatch");
    for (float v : p.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw DataError("failed writing cohort cache " + path.string());
}

LoadedCohort load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cohort cache " + path.string());
  Reader r(in, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kCohortMagic)) throw DataError(r.where() + ": not a COH1 cohort cache");

  LoadedCohort loaded;
  PreparedCohort& cohort = loaded.cohort;
  std::map<std::string, std::string> header;
  std::istringstream meta(r.string());
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(r.where() + ": malformed metadata line '" + line + "'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("meta.", 0) == 0) {
      loaded.metadata[key.substr(5)] = value;
    } else {
      header[key] = value;
    }
  }
  try {
    const std::string& domain = header.at("domain");
    if (domain == "time") {
      cohort.domain = Domain::kTime;
    } else if (domain == "frequency") {
      cohort.domain = Domain::kFrequency;
    } else {
      throw DataError(r.where() + ": unknown domain '" + domain + "'");
    }
    cohort.sampling_rate_hz = parse_double(header.at("sampling_rate_hz"), "sampling_rate_hz");
    cohort.contig_len = static_cast<std::size_t>(parse_double(header.at("contig_len"), "contig_len"));
  } catch (const std::out_of_range&) {
    throw DataError(r.where() + ": cohort cache header is incomplete");
  } catch (const ConfigError& e) {
    throw DataError(r.where() + ": " + e.what());
  }

  const std::uint32_t n_patients = r.u32();
  const std::size_t d = cohort.sample_size();
  for (std::uint32_t i = 0; i < n_patients; ++i) {
    PatientSamples p;
    p.patient_id = r.string();
    p.label = parse_label(r.string());
    p.n_samples = r.u32();
    p.moments = ChannelMoments(kNumChannels);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double v[5];
      for (double& x : v) x = std::bit_cast<double>(r.u64());
      p.moments.set(c, v[0], v[1], v[2], v[3], v[4]);
    }
    p.values.resize(p.n_samples * d);
    for (float& v : p.values) v = std::bit_cast<float>(r.u32());
    cohort.patients.push_back(std::move(p));
  }
  return loaded;
}

}  // namespace eegrel
