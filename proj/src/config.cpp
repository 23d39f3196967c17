#include "prodcat/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "prodcat/util.hpp"

namespace prodcat::config {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(line_no) +
                      ": expected key = value");
    }
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) {
      throw DataError("config line " + std::to_string(line_no) +
                      ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KeyValueConfig::get(const std::string& key,
                                std::string fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': not a number: " + it->second);
  }
}

long long KeyValueConfig::get_int(const std::string& key,
                                  long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("config key '" + key +
                    "': not an integer: " + it->second);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw DataError("config key '" + key + "': not a boolean: " + v);
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_strings(key)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': not a number: " + s);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(
    const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  return split_csv_list(it->second);
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
}

void KeyValueConfig::validate() const {
  if (has("split.ratios")) {
    std::vector<double> r = get_doubles("split.ratios");
    if (r.size() != 3) {
      throw DataError("config key 'split.ratios': expected three fractions");
    }
    double sum = r[0] + r[1] + r[2];
    if (r[0] <= 0 || r[1] <= 0 || r[2] <= 0 || std::abs(sum - 1.0) > 1e-9) {
      throw DataError(
          "config key 'split.ratios': fractions must be > 0 and sum to 1");
    }
  }
  if (has("norm.min_token_len") && get_int("norm.min_token_len", 2) < 0) {
    throw DataError("config key 'norm.min_token_len': must be >= 0");
  }
  for (const char* key : {"train.lr", "train.batch_size", "train.epochs"}) {
    if (has(key) && get_double(key, 1.0) <= 0) {
      throw DataError(std::string("config key '") + key +
                      "': must be positive");
    }
  }
}

textnorm::NormalizerConfig norm_config_from(const KeyValueConfig& cfg) {
  textnorm::NormalizerConfig norm;
  norm.min_token_len = static_cast<std::size_t>(
      cfg.get_int("norm.min_token_len",
                  static_cast<long long>(norm.min_token_len)));
  if (cfg.has("norm.units")) {
    norm.units = cfg.get_strings("norm.units");
  }
  norm.keep_chars = cfg.get("norm.keep_chars", norm.keep_chars);
  return norm;
}

}  // namespace prodcat::config
