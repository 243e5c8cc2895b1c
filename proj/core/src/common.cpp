#include "eegrel/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace eegrel {

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kControl:
      return "control";
    case Label::kMci:
      return "mci";
    case Label::kDementia:
      return "dementia";
  }
  return "unknown";
}

Label parse_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "control") return Label::kControl;
  if (lower == "mci") return Label::kMci;
  if (lower == "dementia") return Label::kDementia;
  throw DataError("unknown label '" + std::string(text) + "' (expected control|mci|dementia)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("malformed number '" + std::string(text) + "' for " + std::string(what));
  }
  return v;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = splitmix64(root);
  h = fnv1a64(stream, h);
  return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace eegrel
