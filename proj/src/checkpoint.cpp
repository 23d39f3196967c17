#include "prodcat/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "prodcat/util.hpp"

namespace prodcat {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'K', 'P'};
constexpr unsigned char kVersion = 1;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32_le(const std::string& data, std::size_t pos) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 1]))
             << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 2]))
             << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + 3]))
             << 24;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out.append(parts[i]);
  }
  return out;
}

class HeaderReader {
 public:
  explicit HeaderReader(std::map<std::string, std::string> kv)
      : kv_(std::move(kv)) {}

  const std::string& require(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
      throw DataError("checkpoint header lacks key '" + key + "'");
    }
    return it->second;
  }
  std::string get(const std::string& key, std::string fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }
  double require_double(const std::string& key) const {
    return std::stod(require(key));
  }
  std::uint64_t require_u64(const std::string& key) const {
    return std::stoull(require(key));
  }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

vocab::Vocabulary Checkpoint::vocabulary() const {
  return vocab::Vocabulary::from_tokens(vocab_tokens);
}

std::uint64_t Checkpoint::vocab_hash() const {
  std::string joined;
  for (const std::string& tok : vocab_tokens) {
    joined.append(tok);
    joined.push_back('\n');
  }
  return fnv1a64(joined);
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));

  std::ostringstream header;
  header << "arch=" << models::arch_name(config.arch) << '\n';
  header << "vocab_size=" << config.vocab_size << '\n';
  header << "embed_dim=" << config.embed_dim << '\n';
  header << "max_len=" << config.max_len << '\n';
  header << "spatial_dropout=" << format_double(config.spatial_dropout_rate)
         << '\n';
  header << "head_dropout=" << format_double(config.head_dropout) << '\n';
  header << "pooling="
         << (config.pooling == models::Pooling::first ? "first" : "mean")
         << '\n';
  {
    std::vector<std::string> layer_specs;
    for (const models::LstmLayerSpec& l : config.lstm_layers) {
      layer_specs.push_back(std::to_string(l.units) + ":" +
                            format_double(l.dropout));
    }
    header << "lstm_layers=" << join(layer_specs, ',') << '\n';
  }
  header << "attn_num_heads=" << config.attention.num_heads << '\n';
  header << "attn_d_model=" << config.attention.d_model << '\n';
  header << "attn_d_k=" << config.attention.d_k << '\n';
  header << "attn_ff_dim=" << config.attention.ff_dim << '\n';
  header << "attn_num_blocks=" << config.attention.num_blocks << '\n';
  header << "norm.min_token_len=" << norm.min_token_len << '\n';
  header << "norm.units=" << join(norm.units, ',') << '\n';
  header << "norm.keep_chars=" << norm.keep_chars << '\n';
  for (int l = 0; l < corpus::kNumLevels; ++l) {
    const auto& labels_l = labels.labels[static_cast<std::size_t>(l)];
    const char* name = corpus::level_name(static_cast<corpus::Level>(l));
    header << "labels." << name << ".count=" << labels_l.size() << '\n';
    for (std::size_t i = 0; i < labels_l.size(); ++i) {
      header << "labels." << name << "." << i << "=" << labels_l[i] << '\n';
    }
  }
  header << "seed=" << seed << '\n';
  {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(vocab_hash()));
    header << "vocab_hash=" << hex << '\n';
  }
  header << "vocab.count=" << vocab_tokens.size() << '\n';
  for (std::size_t i = 0; i < vocab_tokens.size(); ++i) {
    header << "vocab." << i << "=" << vocab_tokens[i] << '\n';
  }
  {
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const auto& [name, values] : params) names.push_back(name);
    header << "params=" << join(names, ',') << '\n';
  }
  out += header.str();
  out.push_back('\n');  // blank line terminates the header

  for (const auto& [name, values] : params) {
    out += name;
    out.push_back('\n');
    put_u32_le(out, static_cast<std::uint32_t>(values.size()));
    for (float f : values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
      put_u32_le(out, bits);
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint file: " + path.string());
  std::stringstream buf;
  buf << file.rdbuf();
  const std::string data = buf.str();

  if (data.size() < 5 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  if (static_cast<unsigned char>(data[4]) != kVersion) {
    throw DataError("unknown checkpoint version " +
                    std::to_string(static_cast<unsigned char>(data[4])));
  }

  const std::size_t header_end = data.find("\n\n", 5);
  if (header_end == std::string::npos) {
    throw DataError("checkpoint header is not terminated");
  }
  std::map<std::string, std::string> kv;
  std::vector<std::string> param_names;
  {
    std::size_t pos = 5;
    while (pos <= header_end) {
      std::size_t nl = data.find('\n', pos);
      std::string line = data.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) break;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw DataError("malformed checkpoint header line: " + line);
      }
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  HeaderReader header(std::move(kv));

  Checkpoint ckpt;
  ckpt.config.arch = models::arch_from_name(header.require("arch"));
  ckpt.config.vocab_size =
      static_cast<std::size_t>(header.require_u64("vocab_size"));
  ckpt.config.embed_dim =
      static_cast<std::size_t>(header.require_u64("embed_dim"));
  ckpt.config.max_len = static_cast<std::size_t>(header.require_u64("max_len"));
  ckpt.config.spatial_dropout_rate = header.require_double("spatial_dropout");
  ckpt.config.head_dropout = header.require_double("head_dropout");
  ckpt.config.pooling = header.get("pooling", "first") == "mean"
                            ? models::Pooling::mean
                            : models::Pooling::first;
  {
    ckpt.config.lstm_layers.clear();
    std::stringstream ss(header.require("lstm_layers"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      std::size_t colon = item.find(':');
      if (colon == std::string::npos) {
        throw DataError("malformed lstm_layers entry: " + item);
      }
      models::LstmLayerSpec spec;
      spec.units = std::stoull(item.substr(0, colon));
      spec.dropout = std::stod(item.substr(colon + 1));
      ckpt.config.lstm_layers.push_back(spec);
    }
  }
  ckpt.config.attention.num_heads =
      static_cast<std::size_t>(header.require_u64("attn_num_heads"));
  ckpt.config.attention.d_model =
      static_cast<std::size_t>(header.require_u64("attn_d_model"));
  ckpt.config.attention.d_k =
      static_cast<std::size_t>(header.require_u64("attn_d_k"));
  ckpt.config.attention.ff_dim =
      static_cast<std::size_t>(header.require_u64("attn_ff_dim"));
  ckpt.config.attention.num_blocks =
      static_cast<std::size_t>(header.require_u64("attn_num_blocks"));

  ckpt.norm.min_token_len =
      static_cast<std::size_t>(header.require_u64("norm.min_token_len"));
  {
    ckpt.norm.units.clear();
    std::stringstream ss(header.require("norm.units"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) ckpt.norm.units.push_back(item);
    }
  }
  ckpt.norm.keep_chars = header.get("norm.keep_chars", "");

  for (int l = 0; l < corpus::kNumLevels; ++l) {
    const char* name = corpus::level_name(static_cast<corpus::Level>(l));
    const std::size_t count = static_cast<std::size_t>(
        header.require_u64(std::string("labels.") + name + ".count"));
    auto& labels_l = ckpt.labels.labels[static_cast<std::size_t>(l)];
    labels_l.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      labels_l[i] = header.require(std::string("labels.") + name + "." +
                                   std::to_string(i));
      ckpt.labels.index[static_cast<std::size_t>(l)][labels_l[i]] =
          static_cast<int>(i);
    }
    ckpt.config.head_sizes[static_cast<std::size_t>(l)] = count;
  }

  ckpt.seed = header.require_u64("seed");
  const std::size_t vocab_count =
      static_cast<std::size_t>(header.require_u64("vocab.count"));
  ckpt.vocab_tokens.resize(vocab_count);
  for (std::size_t i = 0; i < vocab_count; ++i) {
    ckpt.vocab_tokens[i] = header.require("vocab." + std::to_string(i));
  }
  {
    const std::string stored = header.require("vocab_hash");
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(ckpt.vocab_hash()));
    if (stored != hex) {
      throw DataError("checkpoint vocabulary hash mismatch");
    }
  }
  {
    std::stringstream ss(header.require("params"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) param_names.push_back(item);
    }
  }

  std::size_t pos = header_end + 2;
  for (const std::string& expected : param_names) {
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      throw DataError("checkpoint truncated before parameter " + expected);
    }
    std::string name = data.substr(pos, nl - pos);
    if (name != expected) {
      throw DataError("checkpoint parameter order mismatch: expected " +
                      expected + ", found " + name);
    }
    pos = nl + 1;
    if (pos + 4 > data.size()) throw DataError("checkpoint truncated");
    const std::uint32_t count = get_u32_le(data, pos);
    pos += 4;
    if (pos + 4ull * count > data.size()) {
      throw DataError("checkpoint truncated in parameter " + name);
    }
    std::vector<float> values(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<float>(get_u32_le(data, pos));
      pos += 4;
    }
    ckpt.params.emplace_back(std::move(name), std::move(values));
  }
  if (pos != data.size()) {
    throw DataError("checkpoint has trailing bytes");
  }
  return ckpt;
}

std::vector<std::pair<std::string, std::vector<float>>> snapshot_params(
    models::Model& model) {
  std::vector<std::pair<std::string, std::vector<float>>> out;
  for (const models::NamedParam& p : model.parameters()) {
    std::vector<float> values(p.tensor.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = static_cast<float>(p.tensor.data()[i]);
    }
    out.emplace_back(p.name, std::move(values));
  }
  return out;
}

std::unique_ptr<models::Model> restore_model(const Checkpoint& ckpt) {
  std::unique_ptr<models::Model> model = models::make_model(ckpt.config, 0);
  std::vector<models::NamedParam> live = model->parameters();
  if (live.size() != ckpt.params.size()) {
    throw DataError("checkpoint parameter count mismatch: model has " +
                    std::to_string(live.size()) + ", file has " +
                    std::to_string(ckpt.params.size()));
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    const auto& [name, values] = ckpt.params[i];
    if (live[i].name != name) {
      throw DataError("checkpoint parameter name mismatch: " + live[i].name +
                      " vs " + name);
    }
    if (live[i].tensor.size() != values.size()) {
      throw DataError("checkpoint parameter size mismatch for " + name);
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      live[i].tensor.data()[j] = static_cast<double>(values[j]);
    }
  }
  return model;
}

}  // namespace prodcat
