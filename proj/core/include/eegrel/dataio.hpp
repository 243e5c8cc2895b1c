#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "eegrel/common.hpp"

namespace eegrel {

// One patient's multichannel signal. Samples are channel-major:
// samples[c * n_samples + t] is channel c at time index t, in microvolts.
struct EegRecording {
  std::string patient_id;
  Label label = Label::kControl;
  double sampling_rate_hz = 0.0;
  std::vector<std::string> channel_names;
  std::size_t n_samples = 0;
  std::vector<double> samples;
  // 1 = sample excluded as artifact.
  std::vector<std::uint8_t> artifact_mask;

  std::size_t n_channels() const { return channel_names.size(); }
  double duration_s() const { return static_cast<double>(n_samples) / sampling_rate_hz; }

  std::span<const double> channel(std::size_t c) const {
    return {samples.data() + c * n_samples, n_samples};
  }
  std::span<double> channel(std::size_t c) { return {samples.data() + c * n_samples, n_samples}; }
};

// Empty list iff every recording invariant holds. Never throws.
std::vector<std::string> validate_recording(const EegRecording& rec);

struct CohortDataset {
  std::string name;
  std::vector<EegRecording> recordings;
};

std::vector<std::string> canonical_channel_names();

// One row of manifest.csv.
struct ManifestEntry {
  std::string patient_id;
  Label label = Label::kControl;
  double sampling_rate_hz = 0.0;
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  std::string file;
};

inline constexpr std::string_view kManifestHeader =
    "patient_id,label,sampling_rate_hz,n_channels,n_samples,file";

// Lazily loads recordings of an EEGD v1 directory one at a time, so large
// cohorts never need to be resident in memory at once.
class DatasetReader {
 public:
  explicit DatasetReader(std::filesystem::path dir);

  const std::filesystem::path& path() const { return dir_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::vector<std::string>& stored_channels() const { return channels_; }
  std::size_t size() const { return entries_.size(); }

  // Loads entry i, reordered to the canonical 17-channel order.
  EegRecording load(std::size_t i) const;

 private:
  std::filesystem::path dir_;
  std::vector<std::string> channels_;
  std::vector<std::size_t> canonical_rows_;
  std::vector<ManifestEntry> entries_;
};

CohortDataset read_dataset(const std::filesystem::path& dir);

// Writes an EEGD v1 directory one recording at a time.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path dir, std::vector<std::string> channels);

  void add(const EegRecording& rec);
  // Flushes the manifest; throws DataError if any write failed.
  void finish();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> channels_;
  std::set<std::string> ids_;
  std::ofstream manifest_;
};

void write_dataset(const CohortDataset& dataset, const std::filesystem::path& dir);

// Signal file: "EEG1", u32 n_channels, u32 n_samples, float32 LE channel-major.
void write_signal_file(const std::filesystem::path& file, const EegRecording& rec);
std::vector<double> read_signal_file(const std::filesystem::path& file, std::size_t n_channels,
                                     std::size_t n_samples);

struct SynthConfig {
  std::size_t n_patients_per_class = 10;
  double sampling_rate_hz = 200.0;
  double duration_s = 60.0;
  // Class shift of the alpha (8-12 Hz) oscillation power, in units of its
  // between-patient standard deviation.
  double effect_size_delta = 0.0;
  // Global gain applied to every sample; 1 is the reference domain.
  double domain_shift = 1.0;
  double artifact_fraction = 0.0;
  std::uint64_t seed = 0;
  // Contig length the invariant duration*fs >= 2*contig_len is checked against.
  std::size_t contig_len = 200;
  Label condition = Label::kMci;

  void validate() const;
};

// Patients [0, n) are controls, [n, 2n) carry the condition label.
CohortDataset generate_synthetic(const SynthConfig& config);
EegRecording generate_synthetic_patient(const SynthConfig& config, std::size_t index);

// Alpha-oscillation power (before channel weighting) assigned to a patient;
// exposed so tests can audit the class-shift construction.
double synthetic_alpha_power(const SynthConfig& config, std::size_t index);

}  // namespace eegrel
