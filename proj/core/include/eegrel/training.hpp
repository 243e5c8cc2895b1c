#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegrel/cohort.hpp"
#include "eegrel/evaluation.hpp"
#include "eegrel/models.hpp"

namespace eegrel {

// Training diverged (non-finite loss) or could not start.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool balance = false;
  NormMode norm = NormMode::kMeanStd;
  std::size_t contig_len = 200;
  Domain domain = Domain::kFrequency;

  void validate() const;
};

struct SplitSpec {
  double train_frac = 0.75;
  std::size_t repeats = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PatientSplit {
  // Indices into the cohort's patient list, ascending.
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified by class; per class the test count is round-half-up of
// (1 - train_frac) * n_class.
PatientSplit split_patients(std::span<const std::uint8_t> patient_targets, const SplitSpec& spec,
                            std::size_t repeat_index);

struct TrainHistory {
  // Mean training loss per epoch.
  std::vector<double> epoch_loss;
};

// Mini-batch BCE + Adam over shuffled samples; seeded by config.seed. Ends by
// rounding the model to checkpoint precision.
TrainHistory train(Model& model, const SampleSet& samples, const TrainConfig& config);

// One split of the full pipeline: split, fit norm on train patients,
// optionally balance, build, train, predict on test patients.
struct SplitRun {
  std::size_t repeat = 0;
  PatientSplit split;
  NormStats norm;
  TrainHistory history;
  PredictionSet predictions;
  EvalReport report;
};

SplitRun run_split(const PreparedCohort& cohort, const ModelConfig& model, const TrainConfig& config,
                   const SplitSpec& spec, std::size_t repeat_index);

// Also returns the trained model (for checkpointing).
struct TrainedSplit {
  SplitRun run;
  Model model;
};

TrainedSplit run_split_with_model(const PreparedCohort& cohort, const ModelConfig& model, const TrainConfig& config,
                                  const SplitSpec& spec, std::size_t repeat_index);

struct GridCell {
  std::string id;
  ModelConfig model;
  TrainConfig train;
};

struct GridCellResult {
  std::string id;
  bool failed = false;
  std::string error;
  std::vector<EvalReport> splits;
  double mean_patient_recall = 0.0;
  double mean_contig_recall = 0.0;
};

struct GridResult {
  // In input order.
  std::vector<GridCellResult> cells;
  // Indices into cells, best first; failed cells last.
  std::vector<std::size_t> ranking;

  const GridCellResult& best() const { return cells.at(ranking.at(0)); }
};

GridResult grid_search(const PreparedCohort& cohort, std::span<const GridCell> space, const SplitSpec& spec,
                       std::size_t n_splits = 5);

// Supplies the cohort for a cell's input domain; may throw to fail the cell.
using CohortProvider = std::function<const PreparedCohort&(Domain)>;

GridResult grid_search(const CohortProvider& cohorts, std::span<const GridCell> space, const SplitSpec& spec,
                       std::size_t n_splits = 5);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> values);

struct SizeStudyRow {
  // "all" or the requested count.
  std::string size_label;
  std::size_t n_patients = 0;
  std::size_t repeats = 0;
  MeanStd contig_recall, patient_recall, ece_contig, ece_patient, unc_correct, unc_incorrect;
  std::vector<EvalReport> reports;
};

// sizes: patient counts; 0 means all patients. Oversized entries are
// skipped with a message appended to `warnings`.
std::vector<SizeStudyRow> dataset_size_study(const PreparedCohort& cohort, std::span<const std::size_t> sizes,
                                             std::size_t repeats, const ModelConfig& model,
                                             const TrainConfig& config, const SplitSpec& spec,
                                             std::vector<std::string>* warnings = nullptr);

// Stratified, seeded patient subsample of `size` patients.
std::vector<std::size_t> subsample_patients(std::span<const std::uint8_t> patient_targets, std::size_t size,
                                            std::uint64_t seed);

}  // namespace eegrel
