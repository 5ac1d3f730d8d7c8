#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "granenc/model.hpp"

namespace granenc {

enum class DType : std::uint8_t { f64 = 0, i64 = 1, u8 = 2 };

// Flat, versioned archive of named tensors. Each entry stores its name,
// dtype, shape and row-major little-endian payload.
class TensorArchive {
 public:
  static constexpr char kMagic[8] = {'G', 'R', 'N', 'C', 'K', 'P', 'T', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    DType dtype = DType::f64;
    Shape shape;
    std::vector<unsigned char> bytes;
  };

  void put(const std::string& name, const Tensor& t);
  void put(const std::string& name, const IndexTensor& t);
  void put_text(const std::string& name, std::string_view text);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  Tensor tensor(const std::string& name) const;
  IndexTensor index_tensor(const std::string& name) const;
  std::string text(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  void put_entry(Entry e);

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Writes parameters plus everything needed to rebuild the model.
void save_checkpoint(JointModel& model, const std::filesystem::path& path);

struct LoadedCheckpoint {
  TrainConfig config;
  ModelVocab vocab;
  TensorArchive archive;
};
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

// Copies archived parameter values into the model. Throws IntegrationError
// if a tensor is missing or its shape differs.
void load_parameters(JointModel& model, const TensorArchive& archive);

// Rebuilds a model from a checkpoint. A non-null override config replaces the
// stored one (the stored vocabularies are kept).
std::unique_ptr<JointModel> load_model(const std::filesystem::path& path, const TrainConfig* override_config = nullptr);

}  // namespace granenc
