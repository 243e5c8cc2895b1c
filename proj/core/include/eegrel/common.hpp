#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eegrel {

enum class Label : std::uint8_t { kControl = 0, kMci = 1, kDementia = 2 };

std::string_view label_name(Label label);

// Case-insensitive; throws DataError on anything but control|mci|dementia.
Label parse_label(std::string_view text);

inline bool is_condition(Label label) { return label != Label::kControl; }

// International 10-20 montage without T5/T6 and reference electrodes. The
// position of a name in this list is the channel index used everywhere.
inline constexpr std::size_t kNumChannels = 17;
inline constexpr std::array<std::string_view, kNumChannels> kCanonicalChannels = {
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3",
    "Cz",  "C4",  "T4", "P3", "Pz", "P4", "O1", "O2"};

// Malformed or inconsistent input data (files, caches, cohorts).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor or model shape incompatibility.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
// Strict decimal parse of the whole string; throws ConfigError naming `what`.
double parse_double(std::string_view text, std::string_view what);

// Stable 64-bit FNV-1a, used for cache fingerprints and seed derivation.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

// Derives an independent seed for a named random sub-stream, so that e.g.
// the split stream of repeat 3 never collides with the init stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

}  // namespace eegrel
