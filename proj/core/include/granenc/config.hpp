#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "granenc/mrc_head.hpp"

namespace granenc {

// Every hyperparameter of a run. Serialised as flat "key = value" lines.
struct TrainConfig {
  // objective and schedule
  double alpha = 0.5;
  std::size_t epochs = 11;
  std::size_t warm_start_slu = 0;
  bool shuffle = true;
  std::uint64_t seed = 1;

  // optimisation
  std::string optimizer = "sgd";
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::size_t batch_size_mrc = 32;
  std::size_t batch_size_slu = 32;

  // dimensions
  std::size_t word_dim = 512;
  std::size_t char_dim = 16;
  std::size_t char_filters = 50;
  std::size_t char_kernel = 5;
  std::size_t max_word_chars = 16;
  std::size_t ctx_dim = 0;
  std::size_t lstm_hidden = 128;  // per direction
  std::size_t attn_dim = 256;
  std::size_t decoder_hidden = 128;
  std::size_t mrc_hidden = 100;

  // data
  std::size_t min_count = 1;
  std::size_t max_passage_len = 400;
  std::string glove_path;

  // MRC
  InjectScope inject_scope = InjectScope::both;
  bool detach_injection = false;
  double null_threshold = 0.0;
  std::size_t max_answer_len = 30;

  // Throws ConfigError on the first invalid value.
  void validate() const;
};

// Parse "key = value" lines; '#' starts a comment. Unknown keys and bad
// values raise ConfigError naming the key.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
// Apply a single override; the same validation as the file parser.
void set_config_value(TrainConfig& config, std::string_view key, std::string_view value);
std::string config_to_string(const TrainConfig& config);
const std::vector<std::string>& config_keys();

}  // namespace granenc
