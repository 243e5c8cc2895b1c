#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eegrel/models.hpp"

namespace eegrel {

// ---- Gaussian mixture with diagonal covariances ----

struct GmmConfig {
  std::size_t components = 10;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 500;
  // Stop once the mean log-likelihood improves by less than this.
  double tolerance = 1e-6;
  double variance_floor = 1e-6;
};

// Row-major parameters: means and variances are [K x D].
struct Gmm {
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t components() const { return weights.size(); }
};

struct GmmFit {
  Gmm model;
  // Mean log-likelihood after every E-step, starting with the initial one.
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
};

// k-means++ seeding, then EM. `features` is row-major [N x dim].
GmmFit gmm_fit(std::span<const double> features, std::size_t dim, const GmmConfig& config);

// Per-row log p(x) via log-sum-exp over components.
std::vector<double> gmm_loglik(const Gmm& gmm, std::span<const double> features, std::size_t dim);

// Row-major [N x K] posterior component probabilities.
std::vector<double> gmm_responsibilities(const Gmm& gmm, std::span<const double> features, std::size_t dim);

// ---- Distribution overlap ----

// Wasserstein-1 distance between two empirical distributions.
double wasserstein1(std::span<const double> a, std::span<const double> b);

struct NamedSample {
  std::string name;
  std::vector<double> values;
};

struct HistogramRow {
  std::string set;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  std::size_t count = 0;
};

struct DistanceRow {
  std::string set_a;
  std::string set_b;
  double w1 = 0.0;
};

struct OverlapReport {
  std::vector<HistogramRow> histogram;
  // Every ordered pair, including each set with itself.
  std::vector<DistanceRow> distances;

  double distance(const std::string& a, const std::string& b) const;
};

// Histograms over a shared [min, max] range with `n_bins` equal bins.
OverlapReport overlap_report(std::span<const NamedSample> sets, std::size_t n_bins = 50);

// Mean W1 between two random patient-disjoint halves of one set, over
// `n_resamples` seeded draws. `group` gives each value's patient.
double within_set_distance(std::span<const double> values, std::span<const std::size_t> group,
                           std::size_t n_resamples, std::uint64_t seed);

// ---- Shapley attribution ----

// Maps rows [n x n_features] (row-major) to one output per row.
using BatchFunction = std::function<std::vector<double>(std::span<const double> rows, std::size_t n_rows)>;

// Predicted probability of the condition class.
BatchFunction probability_function(const Model& model);

struct FeatureGrouping {
  std::string name;
  std::size_t n_features = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> groups;

  std::size_t size() const { return groups.size(); }
  // Throws ConfigError unless groups partition [0, n_features).
  void validate() const;
};

// Frequency-domain features [17 channels x 26 bands].
FeatureGrouping channel_grouping_frequency();
FeatureGrouping band_grouping();
// Time-domain contigs [17 channels x L].
FeatureGrouping channel_grouping_time(std::size_t length);
FeatureGrouping position_grouping(std::size_t length, std::size_t window = 10);
FeatureGrouping singleton_grouping(std::size_t n_features);

// Permutation-sampling estimate: for each permutation, groups switch from
// background to input one at a time and each is credited its marginal
// change. When n_permutations >= G!, every permutation is used once.
std::vector<double> shapley_values(const BatchFunction& f, std::span<const double> input,
                                   std::span<const double> background, const FeatureGrouping& grouping,
                                   std::size_t n_permutations, std::uint64_t seed);

// Exact Shapley values by enumerating all 2^G coalitions; G <= 12.
std::vector<double> exact_shapley(const BatchFunction& f, std::span<const double> input,
                                  std::span<const double> background, const FeatureGrouping& grouping);

struct ShapReport {
  std::string grouping;
  std::vector<std::string> labels;
  std::vector<double> mean_abs_phi;
  std::vector<double> mean_phi;
  std::size_t n_inputs = 0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
};

// Attributions averaged over `n_inputs` rows of `inputs`. Input i uses the
// sub-stream derive_seed(seed, "shap", i).
ShapReport shap_attribution(const BatchFunction& f, std::span<const double> inputs, std::size_t n_inputs,
                            std::span<const double> background, const FeatureGrouping& grouping,
                            std::size_t n_permutations, std::uint64_t seed);

// Column means of row-major [n x d] data.
std::vector<double> mean_row(std::span<const double> rows, std::size_t n_rows);

}  // namespace eegrel
