#include "granenc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace granenc {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f64:
    case DType::i64:
      return 8;
    case DType::u8:
      return 1;
  }
  throw ParseError("unknown dtype");
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated checkpoint " + path.string());
  return v;
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& s : items) {
    out += s;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (begin < text.size()) {
    const std::size_t nl = text.find('\n', begin);
    out.push_back(text.substr(begin, nl - begin));
    begin = nl + 1;
  }
  return out;
}

}  // namespace

void TensorArchive::put_entry(Entry e) {
  auto it = index_.find(e.name);
  if (it != index_.end()) {
    entries_[it->second] = std::move(e);
    return;
  }
  index_[e.name] = entries_.size();
  entries_.push_back(std::move(e));
}

void TensorArchive::put(const std::string& name, const Tensor& t) {
  Entry e{name, DType::f64, t.shape(), std::vector<unsigned char>(t.size() * 8)};
  if (t.size()) std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  put_entry(std::move(e));
}

void TensorArchive::put(const std::string& name, const IndexTensor& t) {
  Entry e{name, DType::i64, t.shape(), std::vector<unsigned char>(t.size() * 8)};
  if (t.size()) std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  put_entry(std::move(e));
}

void TensorArchive::put_text(const std::string& name, std::string_view text) {
  put_entry(Entry{name, DType::u8, {text.size()}, std::vector<unsigned char>(text.begin(), text.end())});
}

const TensorArchive::Entry& TensorArchive::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IntegrationError("checkpoint has no entry \"" + name + "\"");
  return entries_[it->second];
}

Tensor TensorArchive::tensor(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::f64) throw IntegrationError("checkpoint entry " + name + " is not f64");
  Tensor t(e.shape);
  if (t.size()) std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

IndexTensor TensorArchive::index_tensor(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::i64) throw IntegrationError("checkpoint entry " + name + " is not i64");
  IndexTensor t(e.shape);
  if (t.size()) std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

std::string TensorArchive::text(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::u8) throw IntegrationError("checkpoint entry " + name + " is not text");
  return std::string(e.bytes.begin(), e.bytes.end());
}

void TensorArchive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint64_t>(out, entries_.size());
    for (const Entry& e : entries_) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
      for (std::size_t d : e.shape) write_pod<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path.string() + " is not a checkpoint archive");
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw ParseError("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint64_t>(in, path);
  TensorArchive archive;
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name.resize(read_pod<std::uint32_t>(in, path));
    if (!in.read(e.name.data(), static_cast<std::streamsize>(e.name.size())))
      throw ParseError("truncated checkpoint " + path.string());
    const auto dtype = read_pod<std::uint8_t>(in, path);
    if (dtype > 2) throw ParseError("checkpoint entry " + e.name + " has unknown dtype");
    e.dtype = static_cast<DType>(dtype);
    const auto rank = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(read_pod<std::uint64_t>(in, path));
    e.bytes.resize(shape_numel(e.shape) * dtype_size(e.dtype));
    if (!in.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size())))
      throw ParseError("truncated checkpoint " + path.string() + " in entry " + e.name);
    archive.put_entry(std::move(e));
  }
  return archive;
}

void save_checkpoint(JointModel& model, const std::filesystem::path& path) {
  TensorArchive archive;
  archive.put_text("meta.config", config_to_string(model.config()));
  archive.put_text("meta.words", join_lines(model.vocab().words.tokens()));
  archive.put_text("meta.chars", join_lines(model.vocab().chars.tokens()));
  archive.put_text("meta.intents", join_lines(model.vocab().intents.labels()));
  archive.put_text("meta.slots", join_lines(model.vocab().slots.labels()));
  for (Parameter* p : model.registry().all()) archive.put(p->name, p->value);
  archive.save(path);
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  LoadedCheckpoint out;
  out.archive = TensorArchive::load(path);
  out.config = parse_config(out.archive.text("meta.config"));
  out.vocab.words = Vocabulary::from_tokens(split_lines(out.archive.text("meta.words")));
  out.vocab.chars = Vocabulary::from_tokens(split_lines(out.archive.text("meta.chars")));
  out.vocab.intents = LabelSet(split_lines(out.archive.text("meta.intents")));
  out.vocab.slots = LabelSet(split_lines(out.archive.text("meta.slots")));
  return out;
}

void load_parameters(JointModel& model, const TensorArchive& archive) {
  for (Parameter* p : model.registry().all()) {
    if (!archive.contains(p->name)) throw IntegrationError("checkpoint is missing parameter " + p->name);
    const auto& e = archive.entry(p->name);
    if (e.shape != p->value.shape()) {
      throw IntegrationError("parameter " + p->name + " has shape " + shape_to_string(e.shape) +
                             " in checkpoint but " + shape_to_string(p->value.shape()) + " in the model");
    }
    p->value = archive.tensor(p->name);
  }
}

std::unique_ptr<JointModel> load_model(const std::filesystem::path& path, const TrainConfig* override_config) {
  LoadedCheckpoint ckpt = read_checkpoint(path);
  auto model = std::make_unique<JointModel>(override_config ? *override_config : ckpt.config, std::move(ckpt.vocab));
  load_parameters(*model, ckpt.archive);
  return model;
}

}  // namespace granenc
