#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "granenc/config.hpp"

namespace granenc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitCheckpoint = 4;
inline constexpr int kExitCoverage = 5;

// Runs one command line (without the program name). Never throws; every
// failure is reported on err and mapped to an exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunManifest {
  std::string config;  // key=value snapshot
  std::filesystem::path squad_dir;
  std::filesystem::path snips_dir;
  std::string code_version;
  std::string code_hash;  // git-style blob hash of code_version
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

RunManifest make_manifest(const TrainConfig& config, const std::filesystem::path& squad_dir,
                          const std::filesystem::path& snips_dir, const std::filesystem::path& out_dir);
std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

// SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(std::string_view content);

const std::string& code_version();

// Applies GRANENC_SEED when set. Throws ConfigError if it is not an integer.
void apply_seed_override(TrainConfig& config);

}  // namespace granenc::cli
