#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "eegrel/autodiff.hpp"

namespace eegrel {

enum class Architecture { kMlp, kCnn, kTransformer };
enum class Domain { kTime, kFrequency };

std::string_view architecture_name(Architecture arch);
Architecture parse_architecture(std::string_view text);
std::string_view domain_name(Domain domain);
Domain domain_for(Architecture arch);

// One conv block: conv -> [relu] -> [batchnorm] -> [maxpool(2)].
struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  bool relu = true;
  bool batchnorm = true;
  bool maxpool = true;

  bool operator==(const ConvLayerSpec&) const = default;
};

struct CnnConfig {
  std::vector<ConvLayerSpec> layers;
  std::size_t hidden = 24;

  // "32,50,1,1,1;64,50,1,1,1;128,50,1,1,1;4,8,1,1,0", hidden 24.
  static CnnConfig bigk_many_shallow();
  // Parses the "filters,kernel,relu,bn,pool;..." layer list.
  static std::vector<ConvLayerSpec> parse_layers(std::string_view text);
  static std::string format_layers(const std::vector<ConvLayerSpec>& layers);

  bool operator==(const CnnConfig&) const = default;
};

struct MlpConfig {
  // Empty means a logistic-regression head directly on the inputs.
  std::vector<std::size_t> hidden = {256, 256, 128, 128};

  static MlpConfig wide_deep() { return {}; }
  static std::vector<std::size_t> parse_widths(std::string_view text);

  bool operator==(const MlpConfig&) const = default;
};

struct TransformerConfig {
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t ff_dim = 256;
  std::size_t d_model = 24;

  bool operator==(const TransformerConfig&) const = default;
};

using ModelConfig = std::variant<MlpConfig, CnnConfig, TransformerConfig>;

Architecture architecture_of(const ModelConfig& config);

struct ModelOptions {
  std::uint64_t seed = 0;
  // Zero-initialize the logit layer so an untrained model outputs p = 0.5.
  bool zero_head = false;
};

// A binary classifier producing one logit per sample. Input batches are
// [B, 442] for the MLP and [B, 17, L] for the CNN and Transformer.
class Model {
 public:
  Model(ModelConfig config, Shape input_shape, ModelOptions options);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  Architecture architecture() const { return architecture_of(config_); }
  Domain domain() const { return domain_for(architecture()); }
  const ModelConfig& config() const { return config_; }
  const ModelOptions& options() const { return options_; }
  // Per-sample input shape.
  const Shape& input_shape() const { return input_shape_; }
  // CNN only: features entering the dense head (0 for other architectures).
  std::size_t flatten_dim() const { return flatten_dim_; }

  // key=value lines describing architecture, config and input shape.
  std::string config_echo() const;

  // Training-mode pass; returns logits [B, 1] and caches activations.
  Tensor forward(const Tensor& batch);
  // Back-propagates dL/dlogits [B, 1] into parameter gradients.
  Tensor backward(const Tensor& dlogits);

  // Evaluation-mode logits, one per sample.
  std::vector<double> logits(const Tensor& batch) const;
  std::vector<double> predict_proba(const Tensor& batch) const;

  const std::vector<Tensor*>& parameters() { return params_; }
  const std::vector<Tensor*>& buffers() { return buffers_; }
  std::vector<const Tensor*> parameters() const { return {params_.begin(), params_.end()}; }
  std::vector<const Tensor*> buffers() const { return {buffers_.begin(), buffers_.end()}; }
  std::size_t param_count() const { return param_count_; }
  void zero_grad();
  // Rounds parameters and buffers to float32, the checkpoint precision.
  void round_to_storage_precision();

  Sequential& network() { return *network_; }
  const Sequential& network() const { return *network_; }

 private:
  void check_batch(const Tensor& batch) const;

  ModelConfig config_;
  Shape input_shape_;
  ModelOptions options_;
  std::unique_ptr<Sequential> network_;
  // Point into network_, which is heap-owned, so they survive moves.
  std::vector<Tensor*> params_, buffers_;
  std::size_t param_count_ = 0;
  std::size_t flatten_dim_ = 0;
};

Model build_model(const ModelConfig& config, const Shape& input_shape, const ModelOptions& options);
Model build_mlp(const MlpConfig& config, std::size_t input_dim, const ModelOptions& options);
Model build_cnn(const CnnConfig& config, std::size_t channels, std::size_t length, const ModelOptions& options);
Model build_transformer(const TransformerConfig& config, std::size_t channels, std::size_t length,
                        const ModelOptions& options);

std::size_t param_count(const Model& model);

// Flatten dimension from the padding/pooling rules alone; throws ShapeError
// if a kernel exceeds the remaining sequence length.
std::size_t cnn_flatten_dim(const CnnConfig& config, std::size_t length);

using CheckpointMetadata = std::map<std::string, std::string>;

// "MDL1", u32-length-prefixed architecture tag, u32-length-prefixed config
// echo (including metadata as meta.<key>=<value> lines), u32 tensor count,
// then parameters and buffers as tensor blocks.
void save_checkpoint(const Model& model, const std::filesystem::path& path, const CheckpointMetadata& metadata = {});

struct Checkpoint {
  Model model;
  CheckpointMetadata metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace eegrel
