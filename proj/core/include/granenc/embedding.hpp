#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "granenc/autograd.hpp"
#include "granenc/datasets.hpp"

namespace granenc {

// Character CNN: embed characters, convolve with one kernel width, max-pool
// over positions. The output width is num_filters for any word length.
class CharCnn {
 public:
  CharCnn(std::size_t char_vocab_size, std::size_t char_embed_dim, std::size_t kernel_width, std::size_t num_filters,
          Rng& rng);

  std::size_t kernel_width() const { return kernel_width_; }
  std::size_t output_dim() const { return filters_.value.cols(); }

  // One output row per word. Each entry holds the word's character ids
  // (trailing PAD ids allowed); words shorter than the kernel are padded.
  ag::Var forward(ag::Graph& g, const std::vector<std::vector<std::int64_t>>& words);

  // char_ids: [B, T, C] -> [B, T, num_filters].
  Tensor embed_chars(const IndexTensor& char_ids);

  std::vector<Parameter*> parameters() { return {&char_table_, &filters_, &bias_}; }

 private:
  std::size_t kernel_width_;
  Parameter char_table_;
  Parameter filters_;
  Parameter bias_;
};

// Word vectors with an all-zero PAD row that never receives updates.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable(std::size_t vocab_size, std::size_t dim, Rng& rng, bool trainable = true);

  std::size_t dim() const { return table_.value.cols(); }
  bool trainable() const { return table_.trainable; }
  ag::Var forward(ag::Graph& g, std::span<const std::int64_t> ids) { return ag::lookup(g, table_, ids); }
  Parameter& table() { return table_; }
  const Parameter& table() const { return table_; }

 private:
  Parameter table_;
};

// Copies vectors from a "token v1 ... vd" text file into the rows of known
// tokens. Returns the number of rows overwritten.
std::size_t load_glove(const std::filesystem::path& path, const Vocabulary& vocab, WordEmbeddingTable& table);

// Fixed per-token features from an external model. Never trained.
class ContextualFeatureProvider {
 public:
  virtual ~ContextualFeatureProvider() = default;
  virtual std::size_t dim() const = 0;
  // [tokens.size(), dim()]
  virtual Tensor features(std::span<const std::string> tokens) const = 0;
};

class ZeroProvider final : public ContextualFeatureProvider {
 public:
  explicit ZeroProvider(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Tensor features(std::span<const std::string> tokens) const override { return Tensor({tokens.size(), dim_}, 0.0); }

 private:
  std::size_t dim_;
};

// Leading run of non-PAD ids in row (b, t) of a char-id tensor.
std::vector<std::int64_t> word_chars(const IndexTensor& char_ids, std::size_t b, std::size_t t);

// Per-token input representation: char-CNN output, word vector and
// contextual features, concatenated in that order.
class InputEmbedder {
 public:
  InputEmbedder(std::size_t word_vocab, std::size_t word_dim, std::size_t char_vocab, std::size_t char_dim,
                std::size_t char_kernel, std::size_t char_filters, std::size_t ctx_dim, Rng& rng);

  std::size_t output_dim() const { return chars_.output_dim() + words_.dim() + ctx_dim_; }
  std::size_t ctx_dim() const { return ctx_dim_; }
  std::size_t char_kernel() const { return chars_.kernel_width(); }

  // Replaces the contextual provider; its dim() must equal ctx_dim.
  void set_provider(std::shared_ptr<const ContextualFeatureProvider> provider);

  // [length(b), output_dim()] for row b of the batch.
  ag::Var forward(ag::Graph& g, const SequenceBatch& batch, std::size_t b,
                  const ContextualFeatureProvider* provider = nullptr);

  // [B, T, output_dim()]; positions past each length are zero.
  Tensor embed_tokens(const SequenceBatch& batch);

  CharCnn& chars() { return chars_; }
  WordEmbeddingTable& words() { return words_; }
  std::vector<Parameter*> parameters();

 private:
  CharCnn chars_;
  WordEmbeddingTable words_;
  std::size_t ctx_dim_;
  std::shared_ptr<const ContextualFeatureProvider> provider_;
};

// Copies rows [0, rows) of a [r, c] matrix into slice b of a [B, T, c] tensor.
void write_rows(Tensor& dst, std::size_t b, const Tensor& rows);
// Slice b of a [B, T, c] tensor restricted to its first `length` rows.
Tensor read_rows(const Tensor& src, std::size_t b, std::size_t length);

}  // namespace granenc
