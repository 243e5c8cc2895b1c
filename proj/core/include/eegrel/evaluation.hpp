#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eegrel/cohort.hpp"
#include "eegrel/models.hpp"

namespace eegrel {

// Contig-level probabilities of the condition class, grouped by patient.
struct PredictionSet {
  std::vector<std::string> patient_ids;
  // Binary target per patient: 1 = condition.
  std::vector<std::uint8_t> patient_targets;
  // Per contig: index into patient_ids, and p.
  std::vector<std::size_t> contig_patient;
  std::vector<double> p;

  std::size_t n_contigs() const { return p.size(); }
  std::size_t n_patients() const { return patient_ids.size(); }
  std::uint8_t contig_target(std::size_t i) const { return patient_targets[contig_patient[i]]; }

  // Throws DataError on out-of-range p or unknown patient indices.
  void validate() const;
};

struct Vote {
  std::uint8_t label = 0;
  // Fraction of contigs voting for the winning label.
  double confidence = 0.0;
  bool tie = false;
};

// Each contig votes condition iff p >= 0.5; an exact tie goes to condition.
Vote vote_patient(std::span<const double> p);

// Per-class values are indexed by target: [0] control, [1] condition.
struct ClassMetrics {
  std::array<double, 2> recall{};
  std::array<double, 2> precision{};
  // Precision denominator was empty, so the value was defined as 0.
  std::array<bool, 2> precision_undefined{};
  std::array<std::size_t, 2> support{};
  double recall_macro = 0.0;
  double precision_macro = 0.0;
};

ClassMetrics macro_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

// Equal-width bins on [0.5, 1]; confidence 1.0 falls in the last bin.
double ece(std::span<const double> confidence, std::span<const std::uint8_t> correct, std::size_t n_bins = 10);

// p (1 - p) / 0.5: 0 for a certain prediction, at most 0.5 at p = 0.5.
double uncertainty(double p);

struct EvalReport {
  std::string domain_tag = "in-domain";
  ClassMetrics contig;
  ClassMetrics patient;
  double ece_contig = 0.0;
  double ece_patient = 0.0;
  // Contig-level means; 0 when the group is empty (see the counts).
  double unc_correct = 0.0;
  double unc_incorrect = 0.0;
  std::size_t n_contigs = 0;
  std::size_t n_patients = 0;
  std::size_t n_correct_contigs = 0;
  std::size_t n_incorrect_contigs = 0;
  std::size_t n_vote_ties = 0;

  // Stable key order.
  std::vector<std::pair<std::string, std::string>> records() const;
  std::string table() const;
};

EvalReport evaluate(const PredictionSet& predictions, std::string domain_tag = "in-domain");

// Keys of EvalReport::records(), in order.
const std::vector<std::string>& report_keys();

// Scores every sample of `samples` in batches.
PredictionSet predict(const Model& model, const SampleSet& samples, std::size_t batch = 256);

// Applies the training-domain stats unchanged to a foreign cohort.
EvalReport cross_domain_eval(const Model& model, const NormStats& train_stats, const PreparedCohort& foreign,
                             std::span<const std::size_t> patients, std::string domain_tag = "cross-domain");

}  // namespace eegrel
