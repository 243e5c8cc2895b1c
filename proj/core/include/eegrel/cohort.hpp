#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegrel/autodiff.hpp"
#include "eegrel/dataio.hpp"
#include "eegrel/models.hpp"
#include "eegrel/preprocess.hpp"
#include "eegrel/spectral.hpp"

namespace eegrel {

// One patient's model-ready samples, stored un-normalized in float32.
// Time domain: each sample is [17 x L] channel-major. Frequency domain:
// each sample is the 442 band powers of the raw contig.
struct PatientSamples {
  std::string patient_id;
  Label label = Label::kControl;
  std::size_t n_samples = 0;
  std::vector<float> values;
  // Time-domain moments of the patient's contigs, for train-only norm fits.
  ChannelMoments moments;

  std::uint8_t target() const { return is_condition(label) ? 1 : 0; }
};

// A preprocessed cohort in one input domain. Patients with no usable contig
// are kept (n_samples = 0) so patient-level bookkeeping stays aligned.
struct PreparedCohort {
  Domain domain = Domain::kFrequency;
  double sampling_rate_hz = 200.0;
  std::size_t contig_len = 200;
  std::vector<PatientSamples> patients;

  // Per-sample shape: [442] or [17, L].
  Shape sample_shape() const;
  std::size_t sample_size() const { return shape_size(sample_shape()); }
  std::size_t total_samples() const;
  std::vector<std::uint8_t> patient_targets() const;
};

PatientSamples prepare_patient(const EegRecording& rec, const PreprocessConfig& config, Domain domain);

// Converts a time-domain cohort to band-power features, keeping the moments.
PreparedCohort to_frequency(const PreparedCohort& time_cohort);

// Which non-control label is the positive class. nullopt requires the data
// to carry exactly one non-control label; patients of the other one are
// skipped.
using ConditionChoice = std::optional<Label>;

// Streams recordings one at a time. `progress` is called after each patient.
PreparedCohort prepare_cohort(const DatasetReader& reader, const PreprocessConfig& config, Domain domain,
                              ConditionChoice condition = std::nullopt,
                              const std::function<void(std::size_t, std::size_t)>& progress = {});
PreparedCohort prepare_synthetic(const SynthConfig& synth, const PreprocessConfig& config, Domain domain);

// Keeps only the listed patients, in the listed order.
PreparedCohort select_patients(const PreparedCohort& cohort, std::span<const std::size_t> patients);

// Norm statistics from the listed patients only.
NormStats fit_cohort_norm(const PreparedCohort& cohort, std::span<const std::size_t> patients, NormMode mode);

// A flat, normalized, model-ready sample matrix.
struct SampleSet {
  Shape sample_shape;
  std::vector<float> x;
  std::vector<std::uint8_t> y;
  // Index into patient_ids for each sample.
  std::vector<std::size_t> patient;
  std::vector<std::string> patient_ids;
  std::vector<std::uint8_t> patient_targets;

  std::size_t size() const { return y.size(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }
  std::span<const float> sample(std::size_t i) const { return {x.data() + i * sample_size(), sample_size()}; }

  // Rows `idx` as a [n, sample_shape...] batch.
  Tensor batch(std::span<const std::size_t> idx) const;
  Tensor batch(std::size_t begin, std::size_t end) const;
  SampleSet subset(std::span<const std::size_t> idx) const;
};

SampleSet build_samples(const PreparedCohort& cohort, std::span<const std::size_t> patients, const NormStats& stats);

// Cohort cache: "COH1", u32-length metadata block (key=value lines),
// u32 patient count, then per patient: id, label, sample count, the 5 x 17
// f64 moments and the float32 samples.
using CacheMetadata = std::map<std::string, std::string>;

void save_cohort(const PreparedCohort& cohort, const std::filesystem::path& path, const CacheMetadata& metadata);

struct LoadedCohort {
  PreparedCohort cohort;
  CacheMetadata metadata;
};

LoadedCohort load_cohort(const std::filesystem::path& path);

}  // namespace eegrel
