#include "eegrel/analysis.hpp"
#include "eegrel/spectral.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace eegrel {
namespace {

std::vector<double> gaussian_rows(std::size_t n, std::size_t dim, double mean, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> g(mean, sd);
  std::vector<double> x(n * dim);
  for (double& v : x) v = g(rng);
  return x;
}

TEST(Gmm, SingleComponentIsSampleMoments) {
  std::mt19937_64 rng(1);
  const std::size_t n = 500, dim = 3;
  const auto x = gaussian_rows(n, dim, 2.0, 1.5, rng);
  const auto fit = gmm_fit(x, dim, {.components = 1, .seed = 7});
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * dim + j];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) var += (x[i * dim + j] - mean) * (x[i * dim + j] - mean);
    var /= n;
    EXPECT_NEAR(fit.model.means[j], mean, 1e-9);
    EXPECT_NEAR(fit.model.variances[j], var, 1e-9);
  }
  EXPECT_NEAR(fit.model.weights[0], 1.0, 1e-12);
}

TEST(Gmm, LogLikelihoodMatchesClosedFormForOneComponent) {
  Gmm g;
  g.dim = 2;
  g.weights = {1.0};
  g.means = {1.0, -1.0};
  g.variances = {4.0, 0.25};
  const std::vector<double> x = {0.0, 0.0, 3.0, -1.5};
  const auto ll = gmm_loglik(g, x, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    double expected = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double z = x[i * 2 + j] - g.means[j];
      expected += -0.5 * std::log(2.0 * std::numbers::pi * g.variances[j]) - 0.5 * z * z / g.variances[j];
    }
    EXPECT_NEAR(ll[i], expected, 1e-12);
  }
}

TEST(Gmm, SeparatedClustersAreRecovered) {
  std::mt19937_64 rng(2);
  auto x = gaussian_rows(300, 2, 0.0, 1.0, rng);
  const auto far = gaussian_rows(300, 2, 20.0, 1.0, rng);
  x.insert(x.end(), far.begin(), far.end());
  const auto fit = gmm_fit(x, 2, {.components = 2, .seed = 3});
  std::vector<double> mean0 = {fit.model.means[0], fit.model.means[2]};
  std::sort(mean0.begin(), mean0.end());
  EXPECT_NEAR(mean0[0], 0.0, 0.3);
  EXPECT_NEAR(mean0[1], 20.0, 0.3);
  EXPECT_NEAR(fit.model.weights[0], 0.5, 1e-9);

  const auto resp = gmm_responsibilities(fit.model, x, 2);
  for (std::size_t i = 0; i < 600; ++i) {
    const double a = resp[i * 2], b = resp[i * 2 + 1];
    ASSERT_NEAR(a + b, 1.0, 1e-12);
    ASSERT_GE(std::max(a, b), 0.999);
  }
}

TEST(Gmm, EmTraceIsMonotoneAndDeterministic) {
  std::mt19937_64 rng(4);
  auto x = gaussian_rows(400, 4, 0.0, 1.0, rng);
  const auto shifted = gaussian_rows(200, 4, 1.5, 0.5, rng);
  x.insert(x.end(), shifted.begin(), shifted.end());
  const GmmConfig config{.components = 5, .seed = 11};
  const auto fit = gmm_fit(x, 4, config);
  ASSERT_GE(fit.trace.size(), 2u);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-9) << i;
  const auto again = gmm_fit(x, 4, config);
  EXPECT_EQ(fit.trace, again.trace);
  EXPECT_EQ(fit.model.means, again.model.means);
  const auto ll = gmm_loglik(fit.model, x, 4);
  EXPECT_NEAR(std::accumulate(ll.begin(), ll.end(), 0.0) / ll.size(), fit.trace.back(), 1e-3);
}

TEST(Gmm, RejectsBadInput) {
  const std::vector<double> x = {1.0, 2.0, 3.0};
  EXPECT_THROW(gmm_fit(x, 2, {}), ShapeError);
  EXPECT_THROW(gmm_fit(x, 1, {.components = 4}), DataError);
  EXPECT_THROW(gmm_fit(x, 1, {.components = 0}), ConfigError);
  const std::vector<double> bad = {1.0, NAN};
  EXPECT_THROW(gmm_fit(bad, 1, {.components = 1}), DataError);
}

// W1 between empirical distributions of sizes n and m equals the mean
// absolute difference of sorted samples after replicating each to n*m.
double w1_oracle(std::vector<double> a, std::vector<double> b) {
  std::vector<double> ra, rb;
  for (double v : a) ra.insert(ra.end(), b.size(), v);
  for (double v : b) rb.insert(rb.end(), a.size(), v);
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  double s = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) s += std::abs(ra[i] - rb[i]);
  return s / static_cast<double>(ra.size());
}

TEST(Wasserstein, MatchesReplicationOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> a(1 + trial % 7), b(1 + trial % 5 + trial % 3);
    for (double& v : a) v = g(rng);
    for (double& v : b) v = g(rng) + 0.5;
    if (trial % 4 == 0) b[0] = a[0];  // shared support points
    EXPECT_NEAR(wasserstein1(a, b), w1_oracle(a, b), 1e-12);
  }
}

TEST(Wasserstein, BasicProperties) {
  const std::vector<double> a = {0.0, 1.0, 2.0, 5.0};
  EXPECT_EQ(wasserstein1(a, a), 0.0);
  std::vector<double> shifted(a);
  for (double& v : shifted) v += 3.0;
  EXPECT_NEAR(wasserstein1(a, shifted), 3.0, 1e-12);
  const std::vector<double> b = {1.0, 4.0, 4.5};
  EXPECT_NEAR(wasserstein1(a, b), wasserstein1(b, a), 1e-15);
  EXPECT_THROW(wasserstein1(a, {}), DataError);
}

TEST(Overlap, HistogramCountsAndDistances) {
  const std::vector<NamedSample> sets = {{"a", {0.0, 0.1, 0.2, 1.0}}, {"b", {0.5, 0.9}}};
  const auto r = overlap_report(sets, 4);
  ASSERT_EQ(r.histogram.size(), 8u);
  std::size_t total_a = 0;
  for (std::size_t b = 0; b < 4; ++b) total_a += r.histogram[b].count;
  EXPECT_EQ(total_a, 4u);
  EXPECT_EQ(r.histogram[0].count, 3u);
  EXPECT_EQ(r.histogram[3].count, 1u);  // the maximum lands in the last bin
  EXPECT_EQ(r.histogram[0].bin_lo, 0.0);
  EXPECT_EQ(r.histogram[3].bin_hi, 1.0);
  EXPECT_EQ(r.distances.size(), 4u);
  EXPECT_EQ(r.distance("a", "a"), 0.0);
  EXPECT_NEAR(r.distance("a", "b"), w1_oracle(sets[0].values, sets[1].values), 1e-12);
  EXPECT_THROW(r.distance("a", "c"), DataError);
}

TEST(Overlap, WithinSetDistanceIsSmallForOneDistribution) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> values;
  std::vector<std::size_t> group;
  for (std::size_t p = 0; p < 40; ++p) {
    for (int i = 0; i < 25; ++i) {
      values.push_back(g(rng));
      group.push_back(p);
    }
  }
  const double within = within_set_distance(values, group, 20, 9);
  EXPECT_GT(within, 0.0);
  EXPECT_LT(within, 0.15);
  EXPECT_EQ(within, within_set_distance(values, group, 20, 9));
  const std::vector<std::size_t> one_group(values.size(), 0);
  EXPECT_THROW(within_set_distance(values, one_group, 5, 1), DataError);
}

BatchFunction linear_function(std::vector<double> w, double bias) {
  return [w = std::move(w), bias](std::span<const double> rows, std::size_t n) {
    std::vector<double> out(n, bias);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w.size(); ++j) out[i] += w[j] * rows[i * w.size() + j];
    }
    return out;
  };
}

// A non-additive function with interactions between features.
BatchFunction interaction_function(std::size_t d) {
  return [d](std::span<const double> rows, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = rows.data() + i * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (j + 1) * r[j];
      out[i] = std::tanh(0.3 * s) + r[0] * r[1] - 0.5 * r[2] * r[d - 1] * r[d - 2];
    }
    return out;
  };
}

FeatureGrouping pair_grouping(std::size_t n_groups) {
  FeatureGrouping g{"pairs", 2 * n_groups, {}, {}};
  for (std::size_t k = 0; k < n_groups; ++k) {
    g.labels.push_back("g" + std::to_string(k));
    g.groups.push_back({2 * k, 2 * k + 1});
  }
  return g;
}

TEST(Shapley, LinearModelClosedForm) {
  const std::size_t groups = 6;
  const auto grouping = pair_grouping(groups);
  std::vector<double> w(12), x(12), bg(12);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t j = 0; j < 12; ++j) {
    w[j] = g(rng);
    x[j] = g(rng);
    bg[j] = g(rng);
  }
  const auto f = linear_function(w, 0.3);
  const auto exact = exact_shapley(f, x, bg, grouping);
  const auto sampled = shapley_values(f, x, bg, grouping, 10, 1);  // any permutation is exact here
  for (std::size_t k = 0; k < groups; ++k) {
    const double expected = w[2 * k] * (x[2 * k] - bg[2 * k]) + w[2 * k + 1] * (x[2 * k + 1] - bg[2 * k + 1]);
    EXPECT_NEAR(exact[k], expected, 1e-9);
    EXPECT_NEAR(sampled[k], expected, 1e-9);
  }
}

TEST(Shapley, EstimatorIsExactWithFullPermutationCoverage) {
  for (std::size_t groups : {1u, 2u, 4u, 6u}) {
    const auto grouping = pair_grouping(groups);
    const std::size_t d = grouping.n_features;
    std::mt19937_64 rng(groups);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(d), bg(d);
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = g(rng);
      bg[j] = g(rng);
    }
    const auto f = interaction_function(std::max<std::size_t>(d, 3));
    if (d < 3) continue;
    std::size_t fact = 1;
    for (std::size_t i = 2; i <= groups; ++i) fact *= i;
    const auto exact = exact_shapley(f, x, bg, grouping);
    const auto full = shapley_values(f, x, bg, grouping, fact, 0);
    for (std::size_t k = 0; k < groups; ++k) EXPECT_NEAR(full[k], exact[k], 1e-9) << groups << ":" << k;
  }
}

TEST(Shapley, EfficiencyHoldsForSampledEstimates) {
  const std::size_t d = 442;
  const auto grouping = band_grouping();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(d), bg(d);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = g(rng);
    bg[j] = g(rng);
  }
  const auto f = interaction_function(d);
  const auto phi = shapley_values(f, x, bg, grouping, 16, 3);
  const double f_x = f(x, 1)[0], f_bg = f(bg, 1)[0];
  EXPECT_NEAR(std::accumulate(phi.begin(), phi.end(), 0.0), f_x - f_bg, 1e-6);
  EXPECT_EQ(phi, shapley_values(f, x, bg, grouping, 16, 3));
}

TEST(Shapley, NullPlayerAndSymmetry) {
  const std::size_t d = 8;
  const auto grouping = pair_grouping(4);
  // Features 4, 5 (group 2) are ignored; groups 0 and 1 enter symmetrically.
  const BatchFunction f = [](std::span<const double> rows, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = rows.data() + i * d;
      out[i] = (r[0] + r[1]) * (r[2] + r[3]) + std::sin(r[6] * r[7]) + r[0] + r[1] + r[2] + r[3];
    }
    return out;
  };
  const std::vector<double> x = {1.0, 0.5, 0.5, 1.0, 9.0, -9.0, 0.3, 2.0};
  const std::vector<double> bg = {0.0, -0.2, -0.2, 0.0, 1.0, 1.0, 0.1, 0.0};
  for (const auto& phi : {exact_shapley(f, x, bg, grouping), shapley_values(f, x, bg, grouping, 64, 5)}) {
    EXPECT_NEAR(phi[2], 0.0, 1e-12);
    EXPECT_NEAR(phi[0], phi[1], 1e-12);
  }
}

TEST(Shapley, SingleGroupGetsTheWholeDifference) {
  const auto grouping = singleton_grouping(1);
  const auto f = linear_function({2.0}, 1.0);
  const std::vector<double> x = {3.0}, bg = {0.5};
  EXPECT_NEAR(shapley_values(f, x, bg, grouping, 4, 0)[0], 5.0, 1e-12);
  EXPECT_NEAR(exact_shapley(f, x, bg, grouping)[0], 5.0, 1e-12);
}

TEST(Shapley, LimitsAndShapeChecks) {
  const auto f = linear_function(std::vector<double>(442, 1.0), 0.0);
  const std::vector<double> x(442, 1.0), bg(442, 0.0);
  EXPECT_THROW(exact_shapley(f, x, bg, band_grouping()), ConfigError);
  EXPECT_THROW(shapley_values(f, x, bg, band_grouping(), 0, 0), ConfigError);
  const std::vector<double> short_x(10, 0.0);
  EXPECT_THROW(shapley_values(f, short_x, bg, band_grouping(), 1, 0), ShapeError);
}

TEST(Shapley, AttributionAveragesPerInputEstimates) {
  const auto grouping = pair_grouping(3);
  const auto f = interaction_function(6);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> inputs(4 * 6), bg(6);
  for (double& v : inputs) v = g(rng);
  for (double& v : bg) v = g(rng);
  const auto report = shap_attribution(f, inputs, 4, bg, grouping, 8, 77);
  std::vector<double> mean_abs(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto phi = shapley_values(f, std::span<const double>(inputs).subspan(i * 6, 6), bg, grouping, 8,
                                    derive_seed(77, "shap", i));
    for (std::size_t k = 0; k < 3; ++k) mean_abs[k] += std::abs(phi[k]) / 4.0;
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(report.mean_abs_phi[k], mean_abs[k], 1e-12);
  EXPECT_EQ(report.labels, grouping.labels);
}

TEST(Grouping, BuiltInsPartitionTheirFeatures) {
  const auto ch = channel_grouping_frequency();
  const auto band = band_grouping();
  const auto tch = channel_grouping_time(200);
  const auto pos = position_grouping(200);
  EXPECT_EQ(ch.size(), 17u);
  EXPECT_EQ(band.size(), 26u);
  EXPECT_EQ(tch.size(), 17u);
  EXPECT_EQ(pos.size(), 20u);
  for (const auto* g : {&ch, &band, &tch, &pos}) EXPECT_NO_THROW(g->validate()) << g->name;
  EXPECT_EQ(position_grouping(205).size(), 21u);
  EXPECT_NO_THROW(position_grouping(205).validate());
  EXPECT_EQ(band.groups[6][0], feature_index(0, 6));
}

TEST(Grouping, ValidateRejectsNonPartitions) {
  FeatureGrouping overlap{"bad", 3, {}, {{0, 1}, {1, 2}}};
  EXPECT_THROW(overlap.validate(), ConfigError);
  FeatureGrouping gap{"bad", 3, {}, {{0}, {2}}};
  EXPECT_THROW(gap.validate(), ConfigError);
  FeatureGrouping out_of_range{"bad", 2, {}, {{0}, {1, 2}}};
  EXPECT_THROW(out_of_range.validate(), ConfigError);
  FeatureGrouping labels{"bad", 2, {"x"}, {{0}, {1}}};
  EXPECT_THROW(labels.validate(), ConfigError);
}

TEST(Shapley, MeanRow) {
  const std::vector<double> rows = {1.0, 2.0, 3.0, 6.0};
  EXPECT_EQ(mean_row(rows, 2), (std::vector<double>{2.0, 4.0}));
  EXPECT_THROW(mean_row(rows, 3), ShapeError);
}

}  // namespace
}  // namespace eegrel
