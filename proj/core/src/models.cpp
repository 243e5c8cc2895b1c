#include "eegrel/models.hpp"

#include <charconv>
#include <sstream>

namespace eegrel {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("malformed " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string_view architecture_name(Architecture arch) {
  switch (arch) {
    case Architecture::kMlp:
      return "mlp";
    case Architecture::kCnn:
      return "cnn";
    case Architecture::kTransformer:
      return "transformer";
  }
  return "mlp";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "mlp") return Architecture::kMlp;
  if (text == "cnn") return Architecture::kCnn;
  if (text == "transformer") return Architecture::kTransformer;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (mlp|cnn|transformer)");
}

std::string_view domain_name(Domain domain) { return domain == Domain::kTime ? "time" : "frequency"; }

Domain domain_for(Architecture arch) { return arch == Architecture::kMlp ? Domain::kFrequency : Domain::kTime; }

Architecture architecture_of(const ModelConfig& config) {
  switch (config.index()) {
    case 0:
      return Architecture::kMlp;
    case 1:
      return Architecture::kCnn;
    default:
      return Architecture::kTransformer;
  }
}

CnnConfig CnnConfig::bigk_many_shallow() {
  CnnConfig c;
  c.layers = {{32, 50, true, true, true}, {64, 50, true, true, true}, {128, 50, true, true, true}, {4, 8, true, true, false}};
  c.hidden = 24;
  return c;
}

std::vector<ConvLayerSpec> CnnConfig::parse_layers(std::string_view text) {
  std::vector<ConvLayerSpec> layers;
  for (auto item : split(text, ';')) {
    auto f = split(item, ',');
    if (f.size() != 5) {
      throw ConfigError("conv layer '" + std::string(item) + "' needs filters,kernel,relu,bn,pool");
    }
    ConvLayerSpec s;
    s.filters = parse_size(f[0], "conv filters");
    s.kernel = parse_size(f[1], "conv kernel");
    s.relu = parse_size(f[2], "relu flag") != 0;
    s.batchnorm = parse_size(f[3], "batchnorm flag") != 0;
    s.maxpool = parse_size(f[4], "maxpool flag") != 0;
    if (s.filters == 0 || s.kernel == 0) throw ConfigError("conv filters and kernel must be positive");
    layers.push_back(s);
  }
  return layers;
}

std::string CnnConfig::format_layers(const std::vector<ConvLayerSpec>& layers) {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    s += (i ? ";" : "") + std::to_string(l.filters) + "," + std::to_string(l.kernel) + "," +
         std::to_string(int(l.relu)) + "," + std::to_string(int(l.batchnorm)) + "," + std::to_string(int(l.maxpool));
  }
  return s;
}

std::vector<std::size_t> MlpConfig::parse_widths(std::string_view text) {
  std::vector<std::size_t> widths;
  if (text.empty() || text == "none") return widths;
  for (auto item : split(text, ',')) {
    const std::size_t w = parse_size(item, "hidden width");
    if (w == 0) throw ConfigError("hidden widths must be >= 1");
    widths.push_back(w);
  }
  return widths;
}

std::size_t cnn_flatten_dim(const CnnConfig& config, std::size_t length) {
  if (config.layers.empty()) throw ShapeError("cnn: at least one conv layer required");
  std::size_t len = length;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    if (l.kernel > len) {
      throw ShapeError("cnn: conv layer " + std::to_string(i + 1) + " kernel " + std::to_string(l.kernel) +
                       " exceeds remaining sequence length " + std::to_string(len));
    }
    if (l.maxpool) {
      if (len < 2) throw ShapeError("cnn: sequence too short to pool after layer " + std::to_string(i + 1));
      len /= 2;
    }
  }
  return config.layers.back().filters * len;
}

Model::Model(ModelConfig config, Shape input_shape, ModelOptions options)
    : config_(std::move(config)),
      input_shape_(std::move(input_shape)),
      options_(options),
      network_(std::make_unique<Sequential>()) {
  std::mt19937_64 rng(options_.seed);
  const InitScheme head_init = options_.zero_head ? InitScheme::kZero : InitScheme::kLecunUniform;
  Sequential& net = *network_;

  if (const auto* mlp = std::get_if<MlpConfig>(&config_)) {
    if (input_shape_.size() != 1) throw ShapeError("mlp: expected input [F], got " + shape_str(input_shape_));
    std::size_t width = input_shape_[0];
    for (std::size_t h : mlp->hidden) {
      if (h == 0) throw ConfigError("mlp: hidden widths must be >= 1");
      net.add(std::make_unique<Dense>(width, h, rng, InitScheme::kHeUniform));
      net.add(std::make_unique<Relu>());
      width = h;
    }
    net.add(std::make_unique<Dense>(width, 1, rng, head_init));
  } else if (const auto* cnn = std::get_if<CnnConfig>(&config_)) {
    if (input_shape_.size() != 2) throw ShapeError("cnn: expected input [C, L], got " + shape_str(input_shape_));
    flatten_dim_ = cnn_flatten_dim(*cnn, input_shape_[1]);
    if (cnn->hidden == 0) throw ConfigError("cnn: hidden width must be >= 1");
    std::size_t channels = input_shape_[0];
    for (const auto& l : cnn->layers) {
      net.add(std::make_unique<Conv1d>(channels, l.filters, l.kernel, rng));
      if (l.relu) net.add(std::make_unique<Relu>());
      if (l.batchnorm) net.add(std::make_unique<BatchNorm1d>(l.filters));
      if (l.maxpool) net.add(std::make_unique<MaxPool1d>());
      channels = l.filters;
    }
    net.add(std::make_unique<Flatten>());
    net.add(std::make_unique<Dense>(flatten_dim_, cnn->hidden, rng, InitScheme::kHeUniform));
    net.add(std::make_unique<Relu>());
    net.add(std::make_unique<Dense>(cnn->hidden, 1, rng, head_init));
  } else {
    const auto& tf = std::get<TransformerConfig>(config_);
    if (input_shape_.size() != 2) {
      throw ShapeError("transformer: expected input [C, L], got " + shape_str(input_shape_));
    }
    if (tf.heads == 0 || tf.d_model % tf.heads != 0) {
      throw ShapeError("transformer: d_model " + std::to_string(tf.d_model) + " is not divisible by heads " +
                       std::to_string(tf.heads));
    }
    if (tf.layers == 0 || tf.ff_dim == 0) throw ConfigError("transformer: layers and ff_dim must be >= 1");
    net.add(std::make_unique<SwapLastTwo>());
    net.add(std::make_unique<Dense>(input_shape_[0], tf.d_model, rng, InitScheme::kLecunUniform));
    net.add(std::make_unique<PositionalEncoding>());
    for (std::size_t i = 0; i < tf.layers; ++i) {
      net.add(std::make_unique<TransformerEncoderLayer>(tf.d_model, tf.heads, tf.ff_dim, rng));
    }
    net.add(std::make_unique<MeanPoolTime>());
    net.add(std::make_unique<Dense>(tf.d_model, 1, rng, head_init));
  }

  const Shape out = net.output_shape(input_shape_);
  if (out != Shape{1}) throw ShapeError("model output shape " + shape_str(out) + " is not [1]");
  params_ = net.parameters();
  buffers_ = net.buffers();
  for (const Tensor* p : params_) param_count_ += p->size();
}

std::string Model::config_echo() const {
  std::ostringstream out;
  out << "arch=" << architecture_name(architecture()) << '\n';
  out << "input=" << join_sizes(input_shape_) << '\n';
  out << "zero_head=" << (options_.zero_head ? 1 : 0) << '\n';
  if (const auto* mlp = std::get_if<MlpConfig>(&config_)) {
    out << "mlp.hidden=" << (mlp->hidden.empty() ? "none" : join_sizes(mlp->hidden)) << '\n';
  } else if (const auto* cnn = std::get_if<CnnConfig>(&config_)) {
    out << "cnn.layers=" << CnnConfig::format_layers(cnn->layers) << '\n';
    out << "cnn.hidden=" << cnn->hidden << '\n';
  } else {
    const auto& tf = std::get<TransformerConfig>(config_);
    out << "transformer.heads=" << tf.heads << '\n'
        << "transformer.layers=" << tf.layers << '\n'
        << "transformer.ff_dim=" << tf.ff_dim << '\n'
        << "transformer.d_model=" << tf.d_model << '\n';
  }
  return out.str();
}

void Model::check_batch(const Tensor& batch) const {
  Shape expected = input_shape_;
  expected.insert(expected.begin(), batch.rank() ? batch.dim(0) : 0);
  if (batch.shape() != expected) {
    Shape want = input_shape_;
    throw ShapeError(std::string(architecture_name(architecture())) + ": input batch " + shape_str(batch.shape()) +
                     " does not match per-sample shape " + shape_str(want));
  }
}

Tensor Model::forward(const Tensor& batch) {
  check_batch(batch);
  return network_->forward(batch);
}

Tensor Model::backward(const Tensor& dlogits) { return network_->backward(dlogits); }

std::vector<double> Model::logits(const Tensor& batch) const {
  check_batch(batch);
  Tensor out = network_->infer(batch);
  return {out.values().begin(), out.values().end()};
}

std::vector<double> Model::predict_proba(const Tensor& batch) const {
  auto z = logits(batch);
  for (double& v : z) v = sigmoid(v);
  return z;
}

void Model::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

void Model::round_to_storage_precision() {
  for (auto* group : {&params_, &buffers_}) {
    for (Tensor* t : *group) {
      for (double& v : t->values()) v = static_cast<double>(static_cast<float>(v));
    }
  }
}

Model build_model(const ModelConfig& config, const Shape& input_shape, const ModelOptions& options) {
  return Model(config, input_shape, options);
}

Model build_mlp(const MlpConfig& config, std::size_t input_dim, const ModelOptions& options) {
  return Model(config, {input_dim}, options);
}

Model build_cnn(const CnnConfig& config, std::size_t channels, std::size_t length, const ModelOptions& options) {
  return Model(config, {channels, length}, options);
}

Model build_transformer(const TransformerConfig& config, std::size_t channels, std::size_t length,
                        const ModelOptions& options) {
  return Model(config, {channels, length}, options);
}

std::size_t param_count(const Model& model) { return model.param_count(); }

}  // namespace eegrel
