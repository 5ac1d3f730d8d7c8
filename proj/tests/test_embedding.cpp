#include <gtest/gtest.h>

#include "granenc/embedding.hpp"
#include "support.hpp"

using namespace granenc;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

struct Fixture {
  Vocabulary words = build_vocab({{"play", "some", "jazz", "now", "a"}}, 1);
  Vocabulary chars = build_char_vocab({{"play", "some", "jazz", "now", "a"}}, 1);
  TextEncoder enc() const { return TextEncoder{&words, &chars, 16, 3}; }
};

// Counts an incoming constant feature row per token.
class CountingProvider final : public ContextualFeatureProvider {
 public:
  explicit CountingProvider(std::size_t d, std::size_t extra = 0) : d_(d), extra_(extra) {}
  std::size_t dim() const override { return d_; }
  Tensor features(std::span<const std::string> tokens) const override {
    Tensor t({tokens.size() + extra_, d_});
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < d_; ++j) t.at(i, j) = static_cast<double>(i + 1);
    return t;
  }

 private:
  std::size_t d_, extra_;
};

}  // namespace

TEST(CharCnn, OutputShape) {
  Rng rng(1);
  CharCnn cnn(10, 4, 3, 50, rng);
  IndexTensor ids({2, 3, 6}, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(2 + i % 8);
  EXPECT_EQ(cnn.embed_chars(ids).shape(), (Shape{2, 3, 50}));
}

TEST(CharCnn, SameWordSameVectorAnywhere) {
  Rng rng(2);
  CharCnn cnn(10, 4, 2, 5, rng);
  IndexTensor ids({2, 2, 4}, 0);
  const std::int64_t w[] = {3, 4, 5};
  for (int c = 0; c < 3; ++c) {
    ids.at(0, 0, c) = w[c];
    ids.at(1, 1, c) = w[c];
  }
  ids.at(0, 1, 0) = 7;
  ids.at(1, 0, 0) = 8;
  ids.at(1, 0, 1) = 9;
  const Tensor out = cnn.embed_chars(ids);
  for (std::size_t f = 0; f < 5; ++f) EXPECT_DOUBLE_EQ(out.at(0, 0, f), out.at(1, 1, f));
}

TEST(CharCnn, ShortWordIsPaddedToKernel) {
  Rng rng(3);
  CharCnn cnn(10, 4, 3, 6, rng);
  IndexTensor ids({1, 1, 3}, 0);
  ids.at(0, 0, 0) = 5;
  const Tensor out = cnn.embed_chars(ids);
  EXPECT_TRUE(all_finite(out));
}

TEST(CharCnn, RejectsEmptyOrNarrowCharAxis) {
  Rng rng(4);
  CharCnn cnn(10, 4, 3, 6, rng);
  EXPECT_THROW(cnn.embed_chars(IndexTensor({1, 1, 0})), ShapeError);
  EXPECT_THROW(cnn.embed_chars(IndexTensor({1, 1, 2})), ShapeError);
}

TEST(CharCnn, ExtraPaddingDoesNotChangeWordVector) {
  Rng rng(5);
  CharCnn cnn(10, 4, 3, 6, rng);
  IndexTensor narrow({1, 1, 4}, 0), wide({1, 1, 9}, 0);
  for (int c = 0; c < 4; ++c) narrow.at(0, 0, c) = wide.at(0, 0, c) = 2 + c;
  EXPECT_LT(max_abs_diff(Tensor({6}, std::vector<double>(cnn.embed_chars(narrow).storage())),
                         Tensor({6}, std::vector<double>(cnn.embed_chars(wide).storage()))),
            1e-15);
}

TEST(WordTable, PadRowIsZeroAndFrozen) {
  Rng rng(6);
  WordEmbeddingTable table(8, 5, rng);
  for (double v : table.table().value.row(0)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(table.table().frozen_row, std::optional<std::size_t>(0));
  for (double v : table.table().value.storage()) EXPECT_LE(std::abs(v), 0.1);
}

TEST(InputEmbedder, WidthIsSumOfParts) {
  Fixture f;
  Rng rng(7);
  InputEmbedder emb(f.words.size(), 300, f.chars.size(), 8, 3, 50, 0, rng);
  EXPECT_EQ(emb.output_dim(), 350u);
  InputEmbedder wide(f.words.size(), 512, f.chars.size(), 8, 3, 50, 8, rng);
  EXPECT_EQ(wide.output_dim(), 570u);
}

TEST(InputEmbedder, ConcatenationOrderAndZeroProvider) {
  Fixture f;
  Rng rng(8);
  InputEmbedder emb(f.words.size(), 300, f.chars.size(), 8, 3, 50, 8, rng);
  const std::vector<std::string> s = {"play", "some", "jazz"};
  const SequenceBatch batch = encode_sequences({&s}, f.enc());
  const Tensor out = emb.embed_tokens(batch);
  ASSERT_EQ(out.shape(), (Shape{1, 3, 358}));
  const Tensor chars = emb.chars().embed_chars(batch.char_ids);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 50; ++j) EXPECT_DOUBLE_EQ(out.at(0, t, j), chars.at(0, t, j));
    const auto row = emb.words().table().value.row(static_cast<std::size_t>(batch.token_ids.at(0, t)));
    for (std::size_t j = 0; j < 300; ++j) EXPECT_DOUBLE_EQ(out.at(0, t, 50 + j), row[j]);
    for (std::size_t j = 350; j < 358; ++j) EXPECT_EQ(out.at(0, t, j), 0.0);
  }
}

TEST(InputEmbedder, ProviderFeaturesAreAppended) {
  Fixture f;
  Rng rng(9);
  InputEmbedder emb(f.words.size(), 4, f.chars.size(), 4, 3, 5, 2, rng);
  emb.set_provider(std::make_shared<CountingProvider>(2));
  const std::vector<std::string> s = {"play", "now"};
  const Tensor out = emb.embed_tokens(encode_sequences({&s}, f.enc()));
  EXPECT_EQ(out.at(0, 1, 9), 2.0);
  EXPECT_EQ(out.at(0, 0, 10), 1.0);
}

TEST(InputEmbedder, ProviderMismatchIsAnIntegrationError) {
  Fixture f;
  Rng rng(10);
  InputEmbedder emb(f.words.size(), 4, f.chars.size(), 4, 3, 5, 2, rng);
  EXPECT_THROW(emb.set_provider(std::make_shared<CountingProvider>(3)), IntegrationError);
  emb.set_provider(std::make_shared<CountingProvider>(2, 1));
  const std::vector<std::string> s = {"play"};
  EXPECT_THROW(emb.embed_tokens(encode_sequences({&s}, f.enc())), IntegrationError);
}

TEST(InputEmbedder, DeterministicAndPaddingInvariant) {
  Fixture f;
  Rng rng(11);
  InputEmbedder emb(f.words.size(), 6, f.chars.size(), 4, 3, 5, 0, rng);
  const std::vector<std::string> s0 = {"a"}, s1 = {"play", "some", "jazz", "now"};
  const Tensor alone = emb.embed_tokens(encode_sequences({&s0}, f.enc()));
  const Tensor batched = emb.embed_tokens(encode_sequences({&s0, &s1}, f.enc()));
  for (std::size_t j = 0; j < emb.output_dim(); ++j) EXPECT_EQ(alone.at(0, 0, j), batched.at(0, 0, j));
  EXPECT_EQ(emb.embed_tokens(encode_sequences({&s0, &s1}, f.enc())), batched);
}

TEST(InputEmbedder, PadWordRowHasZeroGradient) {
  Fixture f;
  Rng rng(12);
  InputEmbedder emb(f.words.size(), 3, f.chars.size(), 3, 2, 3, 0, rng);
  const std::vector<std::string> s0 = {"a"}, s1 = {"play", "some", "jazz"};
  const SequenceBatch batch = encode_sequences({&s0, &s1}, f.enc());
  Parameter& table = emb.words().table();
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      ag::Graph g;
      for (double v : emb.forward(g, batch, b).value().storage()) total += v * v;
    }
    return total;
  };
  // Finite differences over the PAD row: perturbations never reach the output.
  const double base = loss();
  for (std::size_t j = 0; j < 3; ++j) {
    table.value.at(0, j) += 1e-3;
    EXPECT_EQ(loss(), base);
    table.value.at(0, j) -= 1e-3;
  }
  for (Parameter* p : emb.parameters()) p->zero_grad();
  for (std::size_t b = 0; b < 2; ++b) {
    ag::Graph g;
    ag::Var out = emb.forward(g, batch, b);
    g.backward(ag::sum(ag::mul(out, out)));
  }
  for (double v : table.grad.row(0)) EXPECT_EQ(v, 0.0);
}

TEST(Glove, LoadsKnownRowsAndRejectsBadWidth) {
  Fixture f;
  Rng rng(13);
  WordEmbeddingTable table(f.words.size(), 3, rng);
  TempDir tmp("glove");
  write_file(tmp / "v.txt", "jazz 1 2 3\nunknownword 4 5 6\n<pad> 9 9 9\n");
  EXPECT_EQ(load_glove(tmp / "v.txt", f.words, table), 1u);
  const auto row = table.table().value.row(static_cast<std::size_t>(f.words.lookup("jazz")));
  EXPECT_EQ(row[0], 1.0);
  EXPECT_EQ(row[2], 3.0);
  for (double v : table.table().value.row(0)) EXPECT_EQ(v, 0.0);
  write_file(tmp / "bad.txt", "jazz 1 2\n");
  EXPECT_THROW(load_glove(tmp / "bad.txt", f.words, table), ParseError);
  EXPECT_THROW(load_glove(tmp / "missing.txt", f.words, table), IoError);
}
