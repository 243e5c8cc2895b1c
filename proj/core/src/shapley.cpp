#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "eegrel/analysis.hpp"
#include "eegrel/spectral.hpp"

namespace eegrel {

namespace {

void check_inputs(std::span<const double> input, std::span<const double> background, const FeatureGrouping& grouping) {
  grouping.validate();
  if (input.size() != grouping.n_features || background.size() != grouping.n_features) {
    throw ShapeError("shapley: input/background length does not match the grouping's " +
                     std::to_string(grouping.n_features) + " features");
  }
}

// G! if it fits, else max.
std::size_t factorial_capped(std::size_t g) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= g; ++i) {
    if (f > std::numeric_limits<std::size_t>::max() / i) return std::numeric_limits<std::size_t>::max();
    f *= i;
  }
  return f;
}

}  // namespace

void FeatureGrouping::validate() const {
  if (groups.empty()) throw ConfigError("grouping '" + name + "' has no groups");
  if (!labels.empty() && labels.size() != groups.size()) throw ConfigError("grouping '" + name + "': label count");
  std::vector<std::uint8_t> seen(n_features, 0);
  for (const auto& g : groups) {
    for (std::size_t f : g) {
      if (f >= n_features || seen[f]) {
        throw ConfigError("grouping '" + name + "' is not a partition of " + std::to_string(n_features) + " features");
      }
      seen[f] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ConfigError("grouping '" + name + "' does not cover every feature");
  }
}

FeatureGrouping channel_grouping_frequency() {
  FeatureGrouping g{"channel", kNumSpectralFeatures, {}, {}};
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    g.labels.emplace_back(kCanonicalChannels[c]);
    auto& members = g.groups.emplace_back();
    for (std::size_t b = 0; b < kNumBands; ++b) members.push_back(feature_index(c, b));
  }
  return g;
}

FeatureGrouping band_grouping() {
  FeatureGrouping g{"band", kNumSpectralFeatures, {}, {}};
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const auto lo = static_cast<int>(kFirstBandHz) + static_cast<int>(b);
    g.labels.push_back(std::to_string(lo) + "-" + std::to_string(lo + 1) + "Hz");
    auto& members = g.groups.emplace_back();
    for (std::size_t c = 0; c < kNumChannels; ++c) members.push_back(feature_index(c, b));
  }
  return g;
}

FeatureGrouping channel_grouping_time(std::size_t length) {
  FeatureGrouping g{"channel", kNumChannels * length, {}, {}};
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    g.labels.emplace_back(kCanonicalChannels[c]);
    auto& members = g.groups.emplace_back(length);
    std::iota(members.begin(), members.end(), c * length);
  }
  return g;
}

FeatureGrouping position_grouping(std::size_t length, std::size_t window) {
  if (window == 0 || length == 0) throw ConfigError("position_grouping: window and length must be positive");
  FeatureGrouping g{"position", kNumChannels * length, {}, {}};
  for (std::size_t start = 0; start < length; start += window) {
    const std::size_t end = std::min(length, start + window);
    g.labels.push_back(std::to_string(start) + "-" + std::to_string(end - 1));
    auto& members = g.groups.emplace_back();
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      for (std::size_t t = start; t < end; ++t) members.push_back(c * length + t);
    }
  }
  return g;
}

FeatureGrouping singleton_grouping(std::size_t n_features) {
  FeatureGrouping g{"feature", n_features, {}, {}};
  for (std::size_t i = 0; i < n_features; ++i) {
    g.labels.push_back(std::to_string(i));
    g.groups.push_back({i});
  }
  return g;
}

BatchFunction probability_function(const Model& model) {
  return [&model](std::span<const double> rows, std::size_t n_rows) {
    Shape shape = model.input_shape();
    shape.insert(shape.begin(), n_rows);
    return model.predict_proba(Tensor(std::move(shape), std::vector<double>(rows.begin(), rows.end())));
  };
}

std::vector<double> shapley_values(const BatchFunction& f, std::span<const double> input,
                                   std::span<const double> background, const FeatureGrouping& grouping,
                                   std::size_t n_permutations, std::uint64_t seed) {
  check_inputs(input, background, grouping);
  if (n_permutations < 1) throw ConfigError("shapley: n_permutations must be >= 1");
  const std::size_t g_count = grouping.size(), d = grouping.n_features;
  const bool exhaustive = n_permutations >= factorial_capped(g_count);
  const std::size_t n_perm = exhaustive ? factorial_capped(g_count) : n_permutations;

  std::vector<std::size_t> perm(g_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::vector<double> phi(g_count, 0.0), rows((g_count + 1) * d);
  for (std::size_t p = 0; p < n_perm; ++p) {
    if (exhaustive) {
      if (p > 0) std::next_permutation(perm.begin(), perm.end());
    } else {
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    // Row j has the first j groups of the permutation switched to the input.
    std::copy(background.begin(), background.end(), rows.begin());
    for (std::size_t j = 0; j < g_count; ++j) {
      double* row = rows.data() + (j + 1) * d;
      std::copy(row - d, row, row);
      for (std::size_t feat : grouping.groups[perm[j]]) row[feat] = input[feat];
    }
    const auto out = f(rows, g_count + 1);
    for (std::size_t j = 0; j < g_count; ++j) phi[perm[j]] += out[j + 1] - out[j];
  }
  for (double& v : phi) v /= static_cast<double>(n_perm);
  return phi;
}

std::vector<double> exact_shapley(const BatchFunction& f, std::span<const double> input,
                                  std::span<const double> background, const FeatureGrouping& grouping) {
  check_inputs(input, background, grouping);
  const std::size_t g_count = grouping.size(), d = grouping.n_features;
  if (g_count > 12) throw ConfigError("exact_shapley: " + std::to_string(g_count) + " groups exceed the limit of 12");
  const std::size_t n_coalitions = std::size_t{1} << g_count;

  std::vector<double> value(n_coalitions);
  constexpr std::size_t kChunk = 256;
  std::vector<double> rows;
  for (std::size_t begin = 0; begin < n_coalitions; begin += kChunk) {
    const std::size_t end = std::min(n_coalitions, begin + kChunk);
    rows.assign((end - begin) * d, 0.0);
    for (std::size_t mask = begin; mask < end; ++mask) {
      double* row = rows.data() + (mask - begin) * d;
      std::copy(background.begin(), background.end(), row);
      for (std::size_t g = 0; g < g_count; ++g) {
        if (mask >> g & 1) {
          for (std::size_t feat : grouping.groups[g]) row[feat] = input[feat];
        }
      }
    }
    const auto out = f(rows, end - begin);
    std::copy(out.begin(), out.end(), value.begin() + static_cast<std::ptrdiff_t>(begin));
  }

  // weight[s] = s! (G - s - 1)! / G!, exact in double for G <= 12.
  std::vector<double> fact(g_count + 1, 1.0);
  for (std::size_t i = 1; i <= g_count; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> weight(g_count);
  for (std::size_t s = 0; s < g_count; ++s) weight[s] = fact[s] * fact[g_count - s - 1] / fact[g_count];
  std::vector<double> phi(g_count, 0.0);
  for (std::size_t mask = 0; mask < n_coalitions; ++mask) {
    const auto s = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t g = 0; g < g_count; ++g) {
      if (mask >> g & 1) continue;
      phi[g] += weight[s] * (value[mask | (std::size_t{1} << g)] - value[mask]);
    }
  }
  return phi;
}

ShapReport shap_attribution(const BatchFunction& f, std::span<const double> inputs, std::size_t n_inputs,
                            std::span<const double> background, const FeatureGrouping& grouping,
                            std::size_t n_permutations, std::uint64_t seed) {
  grouping.validate();
  if (n_inputs == 0) throw DataError("shap_attribution: no inputs");
  const std::size_t d = grouping.n_features;
  if (inputs.size() != n_inputs * d) throw ShapeError("shap_attribution: input buffer size mismatch");
  ShapReport report;
  report.grouping = grouping.name;
  report.labels = grouping.labels;
  report.n_inputs = n_inputs;
  report.n_permutations = n_permutations;
  report.seed = seed;
  report.mean_abs_phi.assign(grouping.size(), 0.0);
  report.mean_phi.assign(grouping.size(), 0.0);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    const auto phi = shapley_values(f, inputs.subspan(i * d, d), background, grouping, n_permutations,
                                    derive_seed(seed, "shap", i));
    for (std::size_t g = 0; g < phi.size(); ++g) {
      report.mean_abs_phi[g] += std::abs(phi[g]);
      report.mean_phi[g] += phi[g];
    }
  }
  for (std::size_t g = 0; g < grouping.size(); ++g) {
    report.mean_abs_phi[g] /= static_cast<double>(n_inputs);
    report.mean_phi[g] /= static_cast<double>(n_inputs);
  }
  return report;
}

std::vector<double> mean_row(std::span<const double> rows, std::size_t n_rows) {
  if (n_rows == 0 || rows.size() % n_rows != 0) throw ShapeError("mean_row: bad row count");
  const std::size_t d = rows.size() / n_rows;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += rows[i * d + j];
  }
  for (double& v : mean) v /= static_cast<double>(n_rows);
  return mean;
}

}  // namespace eegrel
