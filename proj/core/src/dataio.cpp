#include "eegrel/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace eegrel {

namespace fs = std::filesystem;

namespace {

constexpr char kSignalMagic[4] = {'E', 'E', 'G', '1'};

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return to_le(v);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("malformed " + what + " '" + text + "'");
  }
  return value;
}

}  // namespace

std::vector<std::string> canonical_channel_names() {
  return {kCanonicalChannels.begin(), kCanonicalChannels.end()};
}

std::vector<std::string> validate_recording(const EegRecording& rec) {
  std::vector<std::string> violations;
  if (!(rec.sampling_rate_hz > 0.0) || !std::isfinite(rec.sampling_rate_hz)) {
    violations.push_back("sampling_rate_hz must be positive, got " + format_double(rec.sampling_rate_hz));
  }
  if (rec.channel_names.empty()) violations.push_back("no channels");
  if (rec.samples.size() != rec.n_channels() * rec.n_samples) {
    violations.push_back("sample count " + std::to_string(rec.samples.size()) + " != n_channels*n_samples " +
                         std::to_string(rec.n_channels() * rec.n_samples));
  } else {
    for (std::size_t c = 0; c < rec.n_channels(); ++c) {
      auto ch = rec.channel(c);
      auto bad = std::find_if(ch.begin(), ch.end(), [](double v) { return !std::isfinite(v); });
      if (bad != ch.end()) {
        violations.push_back("non-finite sample in channel " + rec.channel_names[c] + " at index " +
                             std::to_string(bad - ch.begin()));
      }
    }
  }
  if (rec.artifact_mask.size() != rec.n_samples) {
    violations.push_back("artifact_mask length " + std::to_string(rec.artifact_mask.size()) +
                         " != n_samples " + std::to_string(rec.n_samples));
  }
  return violations;
}

void write_signal_file(const fs::path& file, const EegRecording& rec) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out.write(kSignalMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(rec.n_channels()));
  put_u32(out, static_cast<std::uint32_t>(rec.n_samples));
  std::vector<float> buf(rec.samples.begin(), rec.samples.end());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : buf) {
      auto u = to_le(std::bit_cast<std::uint32_t>(f));
      f = std::bit_cast<float>(u);
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw DataError("write failed for " + file.string());
}

std::vector<double> read_signal_file(const fs::path& file, std::size_t n_channels, std::size_t n_samples) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open signal file " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = 12 + 4 * n_channels * n_samples;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kSignalMagic, 4) != 0) {
    throw DataError("signal file " + file.string() + " lacks EEG1 header");
  }
  std::size_t hc = get_u32(bytes.data() + 4), hs = get_u32(bytes.data() + 8);
  if (hc != n_channels || hs != n_samples) {
    throw DataError("signal file " + file.string() + " header dimensions " + std::to_string(hc) + "x" +
                    std::to_string(hs) + " disagree with manifest " + std::to_string(n_channels) + "x" +
                    std::to_string(n_samples));
  }
  if (bytes.size() != expected) {
    throw DataError("signal file " + file.string() + " has " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected) + " (dimension mismatch)");
  }
  std::vector<double> samples(n_channels * n_samples);
  const char* p = bytes.data() + 12;
  for (std::size_t i = 0; i < samples.size(); ++i, p += 4) {
    samples[i] = std::bit_cast<float>(get_u32(p));
  }
  return samples;
}

DatasetReader::DatasetReader(fs::path dir) : dir_(std::move(dir)) {
  std::ifstream ch(dir_ / "channels.txt");
  if (!ch) throw DataError("missing channels.txt in " + dir_.string());
  for (std::string line; std::getline(ch, line);) {
    auto name = trim(line);
    if (!name.empty()) channels_.push_back(name);
  }
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < channels_.size(); ++i) row_of[channels_[i]] = i;
  for (auto name : kCanonicalChannels) {
    auto it = row_of.find(std::string(name));
    if (it == row_of.end()) {
      throw DataError("channels.txt is missing canonical channel " + std::string(name));
    }
    canonical_rows_.push_back(it->second);
  }

  std::ifstream manifest(dir_ / "manifest.csv");
  if (!manifest) throw DataError("missing manifest.csv in " + dir_.string());
  std::string header;
  std::getline(manifest, header);
  if (trim(header) != kManifestHeader) {
    throw DataError("manifest.csv header must be exactly '" + std::string(kManifestHeader) + "'");
  }
  std::set<std::string> seen;
  std::size_t line_no = 1;
  for (std::string line; std::getline(manifest, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    const std::string where = "manifest.csv line " + std::to_string(line_no);
    if (fields.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    ManifestEntry e;
    e.patient_id = fields[0];
    if (e.patient_id.empty()) throw DataError(where + ": empty patient_id");
    e.label = parse_label(fields[1]);
    e.sampling_rate_hz = parse_number<double>(fields[2], where + " sampling_rate_hz");
    e.n_channels = parse_number<std::size_t>(fields[3], where + " n_channels");
    e.n_samples = parse_number<std::size_t>(fields[4], where + " n_samples");
    e.file = fields[5];
    if (!(e.sampling_rate_hz > 0.0)) throw DataError(where + ": sampling_rate_hz must be positive");
    if (e.n_channels != channels_.size()) {
      throw DataError(where + ": n_channels " + fields[3] + " disagrees with channels.txt (" +
                      std::to_string(channels_.size()) + ")");
    }
    if (e.file.empty()) throw DataError(where + ": empty file name");
    if (!seen.insert(e.patient_id).second) throw DataError(where + ": duplicate patient_id " + e.patient_id);
    entries_.push_back(std::move(e));
  }
}

EegRecording DatasetReader::load(std::size_t i) const {
  const auto& e = entries_.at(i);
  auto stored = read_signal_file(dir_ / e.file, e.n_channels, e.n_samples);
  EegRecording rec;
  rec.patient_id = e.patient_id;
  rec.label = e.label;
  rec.sampling_rate_hz = e.sampling_rate_hz;
  rec.channel_names = canonical_channel_names();
  rec.n_samples = e.n_samples;
  rec.samples.resize(kNumChannels * e.n_samples);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    std::copy_n(stored.begin() + static_cast<std::ptrdiff_t>(canonical_rows_[c] * e.n_samples), e.n_samples,
                rec.samples.begin() + static_cast<std::ptrdiff_t>(c * e.n_samples));
  }
  rec.artifact_mask.assign(e.n_samples, 0);
  const fs::path mask_path = dir_ / (e.file + ".mask");
  if (fs::exists(mask_path)) {
    std::ifstream in(mask_path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != e.n_samples) {
      throw DataError("mask file " + mask_path.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(e.n_samples));
    }
    for (std::size_t t = 0; t < e.n_samples; ++t) {
      auto b = static_cast<unsigned char>(bytes[t]);
      if (b > 1) throw DataError("mask file " + mask_path.string() + " contains byte other than 0/1");
      rec.artifact_mask[t] = b;
    }
  }
  return rec;
}

CohortDataset read_dataset(const fs::path& dir) {
  DatasetReader reader(dir);
  CohortDataset dataset;
  dataset.name = dir.filename().string();
  if (dataset.name.empty()) dataset.name = dir.parent_path().filename().string();
  dataset.recordings.reserve(reader.size());
  for (std::size_t i = 0; i < reader.size(); ++i) dataset.recordings.push_back(reader.load(i));
  return dataset;
}

DatasetWriter::DatasetWriter(fs::path dir, std::vector<std::string> channels)
    : dir_(std::move(dir)), channels_(std::move(channels)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw DataError("cannot create " + dir_.string() + ": " + ec.message());
  {
    std::ofstream out(dir_ / "channels.txt");
    if (!out) throw DataError("cannot write channels.txt in " + dir_.string());
    for (const auto& name : channels_) out << name << '\n';
  }
  manifest_.open(dir_ / "manifest.csv");
  if (!manifest_) throw DataError("cannot write manifest.csv in " + dir_.string());
  manifest_ << kManifestHeader << '\n';
}

void DatasetWriter::add(const EegRecording& rec) {
  auto violations = validate_recording(rec);
  if (!violations.empty()) throw DataError("recording " + rec.patient_id + ": " + violations.front());
  if (rec.channel_names != channels_) throw DataError("recordings disagree on channel order");
  if (!ids_.insert(rec.patient_id).second) throw DataError("duplicate patient_id " + rec.patient_id);

  const std::string file = rec.patient_id + ".eeg";
  manifest_ << rec.patient_id << ',' << label_name(rec.label) << ',' << format_double(rec.sampling_rate_hz) << ','
            << rec.n_channels() << ',' << rec.n_samples << ',' << file << '\n';
  write_signal_file(dir_ / file, rec);
  const fs::path mask_path = dir_ / (file + ".mask");
  if (std::any_of(rec.artifact_mask.begin(), rec.artifact_mask.end(), [](auto m) { return m != 0; })) {
    std::ofstream mask(mask_path, std::ios::binary);
    if (!mask) throw DataError("cannot write " + mask_path.string());
    mask.write(reinterpret_cast<const char*>(rec.artifact_mask.data()),
               static_cast<std::streamsize>(rec.artifact_mask.size()));
  } else {
    std::error_code ec;
    fs::remove(mask_path, ec);
  }
}

void DatasetWriter::finish() {
  manifest_.flush();
  if (!manifest_) throw DataError("write failed for manifest.csv in " + dir_.string());
  manifest_.close();
}

void write_dataset(const CohortDataset& dataset, const fs::path& dir) {
  DatasetWriter writer(dir, dataset.recordings.empty() ? canonical_channel_names()
                                                       : dataset.recordings.front().channel_names);
  for (const auto& rec : dataset.recordings) writer.add(rec);
  writer.finish();
}

}  // namespace eegrel
