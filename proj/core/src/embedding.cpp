#include "granenc/embedding.hpp"

#include <fstream>
#include <sstream>

namespace granenc {

namespace {
constexpr double kInitScale = 0.1;
}

CharCnn::CharCnn(std::size_t char_vocab_size, std::size_t char_embed_dim, std::size_t kernel_width,
                 std::size_t num_filters, Rng& rng)
    : kernel_width_(kernel_width),
      char_table_("embeddings.char_table", Tensor({char_vocab_size, char_embed_dim})),
      filters_("embeddings.char_filters", Tensor({kernel_width * char_embed_dim, num_filters})),
      bias_("embeddings.char_bias", Tensor({1, num_filters})) {
  if (kernel_width < 1 || num_filters < 1 || char_embed_dim < 1 || char_vocab_size < 2) {
    throw ConfigError("char CNN needs kernel_width, num_filters and char_embed_dim >= 1");
  }
  char_table_.frozen_row = Vocabulary::kPadId;
  char_table_.init_uniform(rng, -kInitScale, kInitScale);
  filters_.init_uniform(rng, -kInitScale, kInitScale);
  bias_.init_uniform(rng, -kInitScale, kInitScale);
}

ag::Var CharCnn::forward(ag::Graph& g, const std::vector<std::vector<std::int64_t>>& words) {
  std::vector<std::int64_t> flat;
  std::vector<ag::WordSpan> spans;
  for (const auto& w : words) {
    std::size_t n = w.size();
    while (n > 0 && w[n - 1] == Vocabulary::kPadId) --n;
    const std::size_t width = std::max(n, kernel_width_);
    spans.push_back({flat.size(), width});
    flat.insert(flat.end(), w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
    flat.insert(flat.end(), width - n, Vocabulary::kPadId);
  }
  ag::Var chars = ag::lookup(g, char_table_, flat);
  return ag::conv_maxpool(chars, spans, g.param(filters_), g.param(bias_), kernel_width_);
}

std::vector<std::int64_t> word_chars(const IndexTensor& char_ids, std::size_t b, std::size_t t) {
  std::vector<std::int64_t> out;
  for (std::size_t c = 0; c < char_ids.dim(2); ++c) {
    const std::int64_t id = char_ids.at(b, t, c);
    if (id == Vocabulary::kPadId) break;
    out.push_back(id);
  }
  return out;
}

Tensor CharCnn::embed_chars(const IndexTensor& char_ids) {
  if (char_ids.rank() != 3) throw ShapeError("embed_chars: expected [B, T, C], got " + shape_to_string(char_ids.shape()));
  const std::size_t bsz = char_ids.dim(0), steps = char_ids.dim(1), width = char_ids.dim(2);
  if (width < 1) throw ShapeError("embed_chars: character axis is empty");
  if (width < kernel_width_) {
    throw ShapeError("embed_chars: character axis " + std::to_string(width) + " narrower than kernel " +
                     std::to_string(kernel_width_));
  }
  Tensor out({bsz, steps, output_dim()}, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    if (steps == 0) continue;
    std::vector<std::vector<std::int64_t>> words;
    for (std::size_t t = 0; t < steps; ++t) words.push_back(word_chars(char_ids, b, t));
    ag::Graph g;
    write_rows(out, b, forward(g, words).value());
  }
  return out;
}

WordEmbeddingTable::WordEmbeddingTable(std::size_t vocab_size, std::size_t dim, Rng& rng, bool trainable)
    : table_("embeddings.word_table", Tensor({vocab_size, dim})) {
  if (dim < 1 || vocab_size < 2) throw ConfigError("word embedding needs dim >= 1 and PAD/UNK rows");
  table_.trainable = trainable;
  table_.frozen_row = Vocabulary::kPadId;
  table_.init_uniform(rng, -kInitScale, kInitScale);
}

std::size_t load_glove(const std::filesystem::path& path, const Vocabulary& vocab, WordEmbeddingTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::string line;
  std::size_t lineno = 0, loaded = 0;
  const std::size_t d = table.dim();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vec;
    double v;
    while (ss >> v) vec.push_back(v);
    if (!ss.eof()) throw ParseError(path.string() + " line " + std::to_string(lineno) + ": non-numeric component");
    if (vec.size() != d) {
      throw ParseError(path.string() + " line " + std::to_string(lineno) + ": expected " + std::to_string(d) +
                       " components, found " + std::to_string(vec.size()));
    }
    if (!vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.lookup(token));
    if (id == static_cast<std::size_t>(Vocabulary::kPadId)) continue;
    std::copy(vec.begin(), vec.end(), table.table().value.row(id).begin());
    ++loaded;
  }
  return loaded;
}

InputEmbedder::InputEmbedder(std::size_t word_vocab, std::size_t word_dim, std::size_t char_vocab,
                             std::size_t char_dim, std::size_t char_kernel, std::size_t char_filters,
                             std::size_t ctx_dim, Rng& rng)
    : chars_(char_vocab, char_dim, char_kernel, char_filters, rng),
      words_(word_vocab, word_dim, rng),
      ctx_dim_(ctx_dim),
      provider_(std::make_shared<ZeroProvider>(ctx_dim)) {}

void InputEmbedder::set_provider(std::shared_ptr<const ContextualFeatureProvider> provider) {
  if (!provider || provider->dim() != ctx_dim_) {
    throw IntegrationError("contextual provider width does not match ctx_dim " + std::to_string(ctx_dim_));
  }
  provider_ = std::move(provider);
}

ag::Var InputEmbedder::forward(ag::Graph& g, const SequenceBatch& batch, std::size_t b,
                               const ContextualFeatureProvider* provider) {
  const std::size_t n = batch.length(b);
  if (n == 0) throw ContractError("embedding an empty sequence");
  if (batch.char_ids.dim(2) < chars_.kernel_width()) {
    throw ShapeError("character axis narrower than the char-CNN kernel");
  }
  std::vector<std::int64_t> ids(n);
  std::vector<std::vector<std::int64_t>> words(n);
  for (std::size_t t = 0; t < n; ++t) {
    ids[t] = batch.token_ids.at(b, t);
    words[t] = word_chars(batch.char_ids, b, t);
  }
  std::vector<ag::Var> parts{chars_.forward(g, words), words_.forward(g, ids)};
  if (ctx_dim_ > 0) {
    if (!provider) provider = provider_.get();
    if (provider->dim() != ctx_dim_) throw IntegrationError("contextual provider width does not match ctx_dim");
    Tensor ctx = provider->features(batch.tokens.at(b));
    if (ctx.rank() != 2 || ctx.rows() != n || ctx.cols() != ctx_dim_) {
      throw IntegrationError("contextual provider returned " + shape_to_string(ctx.shape()) + " for " +
                             std::to_string(n) + " tokens");
    }
    parts.push_back(g.constant(std::move(ctx)));
  }
  return ag::concat_cols(parts);
}

Tensor InputEmbedder::embed_tokens(const SequenceBatch& batch) {
  Tensor out({batch.batch_size(), batch.max_length(), output_dim()}, 0.0);
  for (std::size_t b = 0; b < batch.batch_size(); ++b) {
    ag::Graph g;
    write_rows(out, b, forward(g, batch, b).value());
  }
  return out;
}

std::vector<Parameter*> InputEmbedder::parameters() {
  auto p = chars_.parameters();
  p.push_back(&words_.table());
  return p;
}

void write_rows(Tensor& dst, std::size_t b, const Tensor& rows) {
  if (dst.rank() != 3 || rows.cols() != dst.dim(2) || rows.rows() > dst.dim(1) || b >= dst.dim(0)) {
    throw ShapeError("write_rows: " + shape_to_string(rows.shape()) + " into " + shape_to_string(dst.shape()));
  }
  std::copy(rows.storage().begin(), rows.storage().end(),
            dst.storage().begin() + static_cast<std::ptrdiff_t>(b * dst.dim(1) * dst.dim(2)));
}

Tensor read_rows(const Tensor& src, std::size_t b, std::size_t length) {
  if (src.rank() != 3 || length > src.dim(1) || b >= src.dim(0)) {
    throw ShapeError("read_rows: slice out of range of " + shape_to_string(src.shape()));
  }
  const std::size_t c = src.dim(2);
  const auto first = src.storage().begin() + static_cast<std::ptrdiff_t>(b * src.dim(1) * c);
  return Tensor({length, c}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(length * c)));
}

}  // namespace granenc
