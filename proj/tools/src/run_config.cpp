#include "eegrel_cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace eegrel::cli {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"seed", "0"},
      {"dataset.path", ""},
      {"dataset.condition", "auto"},
      {"dataset.synth.n_patients_per_class", "10"},
      {"dataset.synth.sampling_rate_hz", "200"},
      {"dataset.synth.duration_s", "60"},
      {"dataset.synth.effect_size_delta", "0"},
      {"dataset.synth.domain_shift", "1"},
      {"dataset.synth.artifact_fraction", "0"},
      {"dataset.synth.condition", "mci"},
      {"dataset.synth.seed", ""},
      {"preprocess.band_lo", "5"},
      {"preprocess.band_hi", "20"},
      {"preprocess.target_hz", "200"},
      {"preprocess.contig_len", "200"},
      {"preprocess.norm", "meanstd"},
      {"preprocess.balance", "false"},
      {"preprocess.resample_mode", "whole"},
      {"model.kind", "mlp"},
      {"model.mlp.hidden", "256,256,128,128"},
      {"model.cnn.layers", "32,50,1,1,1;64,50,1,1,1;128,50,1,1,1;4,8,1,1,0"},
      {"model.cnn.hidden", "24"},
      {"model.transformer.heads", "4"},
      {"model.transformer.layers", "4"},
      {"model.transformer.ff_dim", "256"},
      {"model.transformer.d_model", "24"},
      {"train.lr", "1e-4"},
      {"train.batch", "16"},
      {"train.epochs", "10"},
      {"split.train_frac", "0.75"},
      {"split.repeats", "30"},
      {"study.sizes", "50,100,200"},
      {"analysis.gmm_k", "10"},
      {"analysis.shap_permutations", "64"},
  };
  return defaults;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("'" + key + "' must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

}  // namespace

bool is_known_key(std::string_view key) { return default_values().count(std::string(key)) > 0; }

RunConfig::RunConfig() : values_(default_values()) {}

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig config;
  config.base_dir_ = base_dir;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      config.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), std::filesystem::absolute(file).parent_path());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(parse_u64(get(key), key));
}

double RunConfig::get_double(const std::string& key) const {
  const double v = parse_double(get(key), key);
  if (!std::isfinite(v)) throw ConfigError("'" + key + "' must be finite");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const { return parse_u64(get("seed"), "seed"); }

std::filesystem::path RunConfig::dataset_path() const {
  const std::string& p = get("dataset.path");
  if (p.empty()) throw ConfigError("dataset.path is not set");
  std::filesystem::path path(p);
  return path.is_absolute() || base_dir_.empty() ? path : base_dir_ / path;
}

ConditionChoice RunConfig::condition() const {
  const std::string& v = get("dataset.condition");
  if (v == "auto") return std::nullopt;
  try {
    const Label label = parse_label(v);
    if (!is_condition(label)) throw ConfigError("");
    return label;
  } catch (const std::exception&) {
    throw ConfigError("dataset.condition must be auto, mci or dementia, got '" + v + "'");
  }
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.n_patients_per_class = get_size("dataset.synth.n_patients_per_class");
  s.sampling_rate_hz = get_double("dataset.synth.sampling_rate_hz");
  s.duration_s = get_double("dataset.synth.duration_s");
  s.effect_size_delta = get_double("dataset.synth.effect_size_delta");
  s.domain_shift = get_double("dataset.synth.domain_shift");
  s.artifact_fraction = get_double("dataset.synth.artifact_fraction");
  const std::string& seed_text = get("dataset.synth.seed");
  s.seed = seed_text.empty() ? derive_seed(seed(), "synth") : parse_u64(seed_text, "dataset.synth.seed");
  s.contig_len = get_size("preprocess.contig_len");
  try {
    s.condition = parse_label(get("dataset.synth.condition"));
  } catch (const DataError& e) {
    throw ConfigError(std::string("dataset.synth.condition: ") + e.what());
  }
  if (!is_condition(s.condition)) throw ConfigError("dataset.synth.condition must be mci or dementia");
  s.validate();
  return s;
}

PreprocessConfig RunConfig::preprocess() const {
  PreprocessConfig p;
  p.band_lo_hz = get_double("preprocess.band_lo");
  p.band_hi_hz = get_double("preprocess.band_hi");
  p.target_hz = get_double("preprocess.target_hz");
  p.contig_len = get_size("preprocess.contig_len");
  const std::string& mode = get("preprocess.resample_mode");
  if (mode == "whole") {
    p.resample_mode = ResampleMode::kWholeRecording;
  } else if (mode == "per_contig") {
    p.resample_mode = ResampleMode::kPerContig;
  } else {
    throw ConfigError("preprocess.resample_mode must be whole or per_contig, got '" + mode + "'");
  }
  p.validate();
  return p;
}

Architecture RunConfig::architecture() const { return parse_architecture(get("model.kind")); }

ModelConfig RunConfig::model() const {
  switch (architecture()) {
    case Architecture::kMlp: {
      MlpConfig c;
      c.hidden = MlpConfig::parse_widths(get("model.mlp.hidden"));
      return c;
    }
    case Architecture::kCnn: {
      CnnConfig c;
      c.layers = CnnConfig::parse_layers(get("model.cnn.layers"));
      c.hidden = get_size("model.cnn.hidden");
      if (c.layers.empty()) throw ConfigError("model.cnn.layers needs at least one layer");
      if (c.hidden == 0) throw ConfigError("model.cnn.hidden must be >= 1");
      return c;
    }
    case Architecture::kTransformer: {
      TransformerConfig c;
      c.heads = get_size("model.transformer.heads");
      c.layers = get_size("model.transformer.layers");
      c.ff_dim = get_size("model.transformer.ff_dim");
      c.d_model = get_size("model.transformer.d_model");
      return c;
    }
  }
  throw ConfigError("unreachable model kind");
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = get_double("train.lr");
  t.batch = get_size("train.batch");
  t.epochs = get_size("train.epochs");
  t.seed = seed();
  t.balance = get_bool("preprocess.balance");
  t.norm = parse_norm_mode(get("preprocess.norm"));
  t.contig_len = get_size("preprocess.contig_len");
  t.domain = domain_for(architecture());
  t.validate();
  return t;
}

SplitSpec RunConfig::split() const {
  SplitSpec s;
  s.train_frac = get_double("split.train_frac");
  s.repeats = get_size("split.repeats");
  s.seed = seed();
  s.validate();
  return s;
}

std::vector<std::size_t> RunConfig::study_sizes() const {
  std::vector<std::size_t> sizes;
  std::istringstream in(get("study.sizes"));
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (item == "all") {
      sizes.push_back(0);
    } else {
      const std::size_t v = static_cast<std::size_t>(parse_u64(item, "study.sizes"));
      if (v == 0) throw ConfigError("study.sizes entries must be >= 1 or 'all'");
      sizes.push_back(v);
    }
  }
  if (sizes.empty()) throw ConfigError("study.sizes is empty");
  return sizes;
}

std::size_t RunConfig::gmm_components() const {
  const std::size_t k = get_size("analysis.gmm_k");
  if (k == 0) throw ConfigError("analysis.gmm_k must be >= 1");
  return k;
}

std::size_t RunConfig::shap_permutations() const {
  const std::size_t n = get_size("analysis.shap_permutations");
  if (n == 0) throw ConfigError("analysis.shap_permutations must be >= 1");
  return n;
}

std::string RunConfig::canonical(std::initializer_list<std::string_view> prefixes) const {
  std::string out;
  for (const auto& [k, v] : values_) {
    const bool match = std::any_of(prefixes.begin(), prefixes.end(), [&](std::string_view p) {
      return std::string_view(k).substr(0, p.size()) == p;
    });
    if (!match) continue;
    out += k;
    out += '=';
    out += k == "dataset.path" && !v.empty() ? dataset_path().lexically_normal().string() : v;
    out += '\n';
  }
  return out;
}

}  // namespace eegrel::cli
