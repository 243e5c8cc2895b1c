#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "eegrel/cohort.hpp"
#include "eegrel/dataio.hpp"
#include "eegrel/models.hpp"
#include "eegrel/preprocess.hpp"
#include "eegrel/training.hpp"

namespace eegrel::cli {

bool is_known_key(std::string_view key);

// Flat key=value experiment configuration. Lines starting with '#' and
// blank lines are ignored; unknown keys and duplicates are rejected. Every
// key has a default, so an empty file is a complete configuration.
class RunConfig {
 public:
  RunConfig();

  // `base_dir` anchors relative paths.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& file);

  // Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::uint64_t seed() const;
  // Resolved against the config file's directory; throws if unset.
  std::filesystem::path dataset_path() const;
  ConditionChoice condition() const;
  SynthConfig synth() const;
  PreprocessConfig preprocess() const;
  Architecture architecture() const;
  ModelConfig model() const;
  TrainConfig train() const;
  SplitSpec split() const;
  // 0 stands for "all".
  std::vector<std::size_t> study_sizes() const;
  std::size_t gmm_components() const;
  std::size_t shap_permutations() const;

  // "key=value\n" lines for every key under one of `prefixes`, sorted.
  std::string canonical(std::initializer_list<std::string_view> prefixes) const;

 private:
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

}  // namespace eegrel::cli
