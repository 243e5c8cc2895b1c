#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "eegrel/analysis.hpp"

namespace eegrel {

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("wasserstein1: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  // Integrate |F_a - F_b| across the merged support.
  std::size_t i = 0, j = 0;
  double x_prev = std::min(sa[0], sb[0]);
  double total = 0.0;
  while (i < sa.size() || j < sb.size()) {
    const double x = j == sb.size() || (i < sa.size() && sa[i] <= sb[j]) ? sa[i] : sb[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - x_prev);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    x_prev = x;
  }
  return total;
}

double OverlapReport::distance(const std::string& a, const std::string& b) const {
  for (const auto& d : distances) {
    if (d.set_a == a && d.set_b == b) return d.w1;
  }
  throw DataError("overlap report has no pair (" + a + ", " + b + ")");
}

OverlapReport overlap_report(std::span<const NamedSample> sets, std::size_t n_bins) {
  if (sets.empty()) throw DataError("overlap_report: no sets");
  if (n_bins == 0) throw ConfigError("overlap_report: need at least one bin");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : sets) {
    if (s.values.empty()) throw DataError("overlap_report: set '" + s.name + "' is empty");
    for (double v : s.values) {
      if (!std::isfinite(v)) throw DataError("overlap_report: set '" + s.name + "' has a non-finite value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(n_bins);
  OverlapReport report;
  for (const auto& s : sets) {
    std::vector<std::size_t> counts(n_bins, 0);
    for (double v : s.values) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      ++counts[std::min(b, n_bins - 1)];
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double edge_hi = b + 1 == n_bins ? hi : lo + static_cast<double>(b + 1) * width;
      report.histogram.push_back({s.name, lo + static_cast<double>(b) * width, edge_hi, counts[b]});
    }
  }
  for (const auto& a : sets) {
    for (const auto& b : sets) {
      report.distances.push_back({a.name, b.name, &a == &b ? 0.0 : wasserstein1(a.values, b.values)});
    }
  }
  return report;
}

double within_set_distance(std::span<const double> values, std::span<const std::size_t> group,
                           std::size_t n_resamples, std::uint64_t seed) {
  if (values.size() != group.size()) throw DataError("within_set_distance: values/group length mismatch");
  if (n_resamples == 0) throw ConfigError("within_set_distance: need at least one resample");
  std::map<std::size_t, std::vector<double>> by_group;
  for (std::size_t i = 0; i < values.size(); ++i) by_group[group[i]].push_back(values[i]);
  if (by_group.size() < 2) throw DataError("within_set_distance: need at least two groups");
  std::vector<const std::vector<double>*> groups;
  for (const auto& [id, v] : by_group) groups.push_back(&v);

  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    std::shuffle(groups.begin(), groups.end(), rng);
    const std::size_t half = groups.size() / 2;
    std::vector<double> a, b;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      auto& dst = g < half ? a : b;
      dst.insert(dst.end(), groups[g]->begin(), groups[g]->end());
    }
    total += wasserstein1(a, b);
  }
  return total / static_cast<double>(n_resamples);
}

}  // namespace eegrel
