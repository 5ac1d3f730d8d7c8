#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "granenc/error.hpp"
#include "granenc_cli/cli.hpp"

namespace granenc::cli {

std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

const std::string& code_version() {
  static const std::string v = "granenc " GRANENC_VERSION;
  return v;
}

void apply_seed_override(TrainConfig& config) {
  const char* env = std::getenv("GRANENC_SEED");
  if (!env || !*env) return;
  set_config_value(config, "seed", env);
}

RunManifest make_manifest(const TrainConfig& config, const std::filesystem::path& squad_dir,
                          const std::filesystem::path& snips_dir, const std::filesystem::path& out_dir) {
  RunManifest m;
  m.config = config_to_string(config);
  m.squad_dir = squad_dir;
  m.snips_dir = snips_dir;
  m.code_version = code_version();
  m.code_hash = git_blob_hash(m.code_version);
  m.seed = config.seed;
  m.out_dir = out_dir;
  return m;
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["code_version"] = m.code_version;
  j["code_hash"] = m.code_hash;
  j["seed"] = m.seed;
  j["squad_dir"] = m.squad_dir.string();
  j["snips_dir"] = m.snips_dir.string();
  j["out_dir"] = m.out_dir.string();
  j["config"] = m.config;
  return j.dump(2);
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(manifest) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace granenc::cli
