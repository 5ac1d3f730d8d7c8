#include "granenc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace granenc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key \"" + std::string(key) + "\": expected a non-negative integer, got \"" +
                      std::string(v) + "\"");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw ConfigError("config key \"" + std::string(key) + "\": expected a number, got \"" + s + "\"");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key \"" + std::string(key) + "\": expected true or false, got \"" + std::string(v) + "\"");
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

struct Field {
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define GRANENC_SIZE(name) \
  {#name, {[](TrainConfig& c, std::string_view v) { c.name = parse_size(#name, v); }, \
           [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define GRANENC_DOUBLE(name) \
  {#name, {[](TrainConfig& c, std::string_view v) { c.name = parse_double(#name, v); }, \
           [](const TrainConfig& c) { return fmt_double(c.name); }}}
#define GRANENC_BOOL(name) \
  {#name, {[](TrainConfig& c, std::string_view v) { c.name = parse_bool(#name, v); }, \
           [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      GRANENC_DOUBLE(alpha),
      GRANENC_SIZE(epochs),
      GRANENC_SIZE(warm_start_slu),
      GRANENC_BOOL(shuffle),
      {"seed", {[](TrainConfig& c, std::string_view v) { c.seed = parse_size("seed", v); },
                [](const TrainConfig& c) { return std::to_string(c.seed); }}},
      {"optimizer", {[](TrainConfig& c, std::string_view v) { c.optimizer = std::string(v); },
                     [](const TrainConfig& c) { return c.optimizer; }}},
      GRANENC_DOUBLE(lr),
      GRANENC_DOUBLE(clip_norm),
      GRANENC_SIZE(batch_size_mrc),
      GRANENC_SIZE(batch_size_slu),
      GRANENC_SIZE(word_dim),
      GRANENC_SIZE(char_dim),
      GRANENC_SIZE(char_filters),
      GRANENC_SIZE(char_kernel),
      GRANENC_SIZE(max_word_chars),
      GRANENC_SIZE(ctx_dim),
      GRANENC_SIZE(lstm_hidden),
      GRANENC_SIZE(attn_dim),
      GRANENC_SIZE(decoder_hidden),
      GRANENC_SIZE(mrc_hidden),
      GRANENC_SIZE(min_count),
      GRANENC_SIZE(max_passage_len),
      {"glove_path", {[](TrainConfig& c, std::string_view v) { c.glove_path = std::string(v); },
                      [](const TrainConfig& c) { return c.glove_path; }}},
      {"inject_scope", {[](TrainConfig& c, std::string_view v) { c.inject_scope = parse_inject_scope(v); },
                        [](const TrainConfig& c) { return std::string(to_string(c.inject_scope)); }}},
      GRANENC_BOOL(detach_injection),
      GRANENC_DOUBLE(null_threshold),
      GRANENC_SIZE(max_answer_len),
  };
  return table;
}

#undef GRANENC_SIZE
#undef GRANENC_DOUBLE
#undef GRANENC_BOOL

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v < 1) throw ConfigError(std::string("config key \"") + key + "\" must be positive");
  };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("config key \"alpha\" must be finite and >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("config key \"lr\" must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("config key \"clip_norm\" must be positive");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("config key \"optimizer\" must be sgd or adam");
  positive(epochs, "epochs");
  positive(batch_size_mrc, "batch_size_mrc");
  positive(batch_size_slu, "batch_size_slu");
  positive(word_dim, "word_dim");
  positive(char_dim, "char_dim");
  positive(char_filters, "char_filters");
  positive(char_kernel, "char_kernel");
  positive(max_word_chars, "max_word_chars");
  positive(lstm_hidden, "lstm_hidden");
  positive(decoder_hidden, "decoder_hidden");
  positive(mrc_hidden, "mrc_hidden");
  positive(min_count, "min_count");
  positive(max_passage_len, "max_passage_len");
  positive(max_answer_len, "max_answer_len");
  if (!std::isfinite(null_threshold)) throw ConfigError("config key \"null_threshold\" must be finite");
}

void set_config_value(TrainConfig& config, std::string_view key, std::string_view value) {
  auto it = fields().find(std::string(key));
  if (it == fields().end()) throw ConfigError("unknown config key \"" + std::string(key) + "\"");
  try {
    it->second.set(config, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key \"" + std::string(key) + "\": " + e.what());
  }
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(config, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_string(const TrainConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, field] : fields()) k.push_back(key);
    return k;
  }();
  return keys;
}

}  // namespace granenc
