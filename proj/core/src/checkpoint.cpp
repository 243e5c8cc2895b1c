#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "eegrel/models.hpp"

namespace eegrel {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'L', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::uint8_t bytes[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& where) {
  std::uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(where + ": truncated checkpoint");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& where) {
  const std::uint32_t n = get_u32(in, where);
  if (n > (1u << 24)) throw DataError(where + ": implausible string length in checkpoint");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError(where + ": truncated checkpoint");
  return s;
}

std::size_t to_size(const std::string& text, const std::string& key) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("checkpoint: bad value '" + text + "' for " + key);
  }
  return v;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint: config echo lacks '" + key + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const CheckpointMetadata& metadata) {
  std::string echo = model.config_echo();
  for (const auto& [key, value] : metadata) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint metadata '" + key + "' must be a single line without '=' in the key");
    }
    echo += "meta." + key + "=" + value + "\n";
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put_string(out, std::string(architecture_name(model.architecture())));
  put_string(out, echo);
  const auto params = model.parameters();
  const auto buffers = model.buffers();
  put_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const Tensor* t : params) write_tensor_block(out, *t);
  for (const Tensor* t : buffers) write_tensor_block(out, *t);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + where);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw DataError(where + ": not an MDL1 checkpoint");
  }
  const Architecture arch = [&] {
    try {
      return parse_architecture(get_string(in, where));
    } catch (const ConfigError& e) {
      throw DataError(where + ": " + e.what());
    }
  }();

  std::map<std::string, std::string> kv;
  CheckpointMetadata metadata;
  std::istringstream echo(get_string(in, where));
  for (std::string line; std::getline(echo, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(where + ": malformed config echo line '" + line + "'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("meta.", 0) == 0) {
      metadata[key.substr(5)] = value;
    } else {
      kv[key] = value;
    }
  }
  if (need(kv, "arch") != architecture_name(arch)) throw DataError(where + ": architecture tag disagrees with echo");

  Shape input;
  {
    std::istringstream dims(need(kv, "input"));
    for (std::string d; std::getline(dims, d, ',');) input.push_back(to_size(d, "input"));
  }
  ModelOptions options;
  options.zero_head = need(kv, "zero_head") == "1";

  ModelConfig config;
  try {
    switch (arch) {
      case Architecture::kMlp: {
        MlpConfig c;
        c.hidden = MlpConfig::parse_widths(need(kv, "mlp.hidden"));
        config = c;
        break;
      }
      case Architecture::kCnn: {
        CnnConfig c;
        c.layers = CnnConfig::parse_layers(need(kv, "cnn.layers"));
        c.hidden = to_size(need(kv, "cnn.hidden"), "cnn.hidden");
        config = c;
        break;
      }
      case Architecture::kTransformer: {
        TransformerConfig c;
        c.heads = to_size(need(kv, "transformer.heads"), "transformer.heads");
        c.layers = to_size(need(kv, "transformer.layers"), "transformer.layers");
        c.ff_dim = to_size(need(kv, "transformer.ff_dim"), "transformer.ff_dim");
        c.d_model = to_size(need(kv, "transformer.d_model"), "transformer.d_model");
        config = c;
        break;
      }
    }
  } catch (const ConfigError& e) {
    throw DataError(where + ": " + e.what());
  }

  Model model(config, input, options);
  const auto& params = model.parameters();
  const auto& buffers = model.buffers();
  const std::uint32_t count = get_u32(in, where);
  if (count != params.size() + buffers.size()) {
    throw DataError(where + ": checkpoint holds " + std::to_string(count) + " tensors, architecture needs " +
                    std::to_string(params.size() + buffers.size()));
  }
  std::size_t i = 0;
  for (auto* group : {&params, &buffers}) {
    for (Tensor* t : *group) {
      Tensor stored = read_tensor_block(in);
      if (stored.shape() != t->shape()) {
        throw DataError(where + ": tensor " + std::to_string(i) + " has shape " + shape_str(stored.shape()) +
                        ", expected " + shape_str(t->shape()));
      }
      std::copy(stored.values().begin(), stored.values().end(), t->values().begin());
      ++i;
    }
  }
  return {std::move(model), std::move(metadata)};
}

}  // namespace eegrel
