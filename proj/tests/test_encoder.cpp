#include <gtest/gtest.h>

#include "granenc/encoder.hpp"
#include "granenc/gradcheck.hpp"
#include "support.hpp"

using namespace granenc;
using testing_support::random_tensor;

namespace {

IndexTensor lengths_of(std::initializer_list<std::int64_t> n) { return IndexTensor({n.size()}, std::vector<std::int64_t>(n)); }

}  // namespace

TEST(BiLstm, SingleStepSummaryEqualsState) {
  Rng rng(1);
  BiLstm lstm("l", 3, 4, rng);
  const Tensor x = random_tensor({2, 1, 3}, rng);
  const auto out = bilstm_encode(lstm, x, lengths_of({1, 1}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out.summary.at(b, j), out.states.at(b, 0, j));
}

TEST(BiLstm, ZeroParametersGiveZeroStates) {
  Rng rng(2);
  BiLstm lstm("l", 3, 4, rng);
  for (Parameter* p : lstm.parameters()) p->value.fill(0.0);
  const auto out = bilstm_encode(lstm, random_tensor({1, 5, 3}, rng), lengths_of({5}));
  for (double v : out.states.storage()) EXPECT_EQ(v, 0.0);
}

TEST(BiLstm, SummaryUsesTrueLength) {
  Rng rng(3);
  BiLstm lstm("l", 2, 3, rng);
  const Tensor x = random_tensor({1, 6, 2}, rng);
  const auto out = bilstm_encode(lstm, x, lengths_of({4}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(out.summary.at(0, j), out.states.at(0, 3, j));          // forward at last real token
    EXPECT_EQ(out.summary.at(0, 3 + j), out.states.at(0, 0, 3 + j));  // backward at the first token
  }
  for (std::size_t t = 4; t < 6; ++t)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(out.states.at(0, t, j), 0.0);
}

TEST(BiLstm, RejectsNonFiniteAndEmpty) {
  Rng rng(4);
  BiLstm lstm("l", 2, 3, rng);
  Tensor x({1, 2, 2}, 0.0);
  x[3] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(bilstm_encode(lstm, x, lengths_of({2})), NumericError);
  EXPECT_THROW(bilstm_encode(lstm, Tensor({1, 2, 2}), lengths_of({0})), ContractError);
}

TEST(BiLstm, GradientsOnSmallBatch) {
  GradcheckReport r = gradcheck("bilstm");
  EXPECT_TRUE(r.pass) << r.to_string();
}

TEST(SelfAttention, SingleTokenReturnsItsValue) {
  Rng rng(5);
  SelfAttention attn("a", 4, 3, rng);
  const Tensor x = random_tensor({1, 1, 4}, rng);
  const Tensor out = self_attend(attn, x, IndexTensor({1, 1}, 1));
  const Tensor w = attention_weights(attn, x, IndexTensor({1, 1}, 1));
  EXPECT_EQ(w[0], 1.0);
  for (std::size_t j = 0; j < 3; ++j) {
    double v = 0.0;
    for (std::size_t k = 0; k < 4; ++k) v += x[k] * attn.w_value().value.at(k, j);
    EXPECT_EQ(out[j], v);
  }
}

TEST(SelfAttention, IdenticalKeysGiveEqualWeights) {
  Rng rng(6);
  SelfAttention attn("a", 3, 2, rng);
  Tensor x({1, 2, 3});
  for (std::size_t j = 0; j < 3; ++j) x.at(0, 0, j) = x.at(0, 1, j) = 0.3 * static_cast<double>(j + 1);
  const Tensor w = attention_weights(attn, x, IndexTensor({1, 2}, 1));
  for (double v : w.storage()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(SelfAttention, HandInstanceMatchesDirectArithmetic) {
  Rng rng(7);
  SelfAttention attn("a", 2, 2, rng);
  attn.w_query().value = Tensor::matrix(2, 2, {1, 0, 0, 1});
  attn.w_key().value = Tensor::matrix(2, 2, {1, 0, 0, 1});
  attn.w_value().value = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor x({1, 3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1});
  // Q = K = x, V = x W_V = [[1,2],[3,4],[4,6]]; scores = x x^T / sqrt(2).
  const double s = 1.0 / std::sqrt(2.0);
  const double scores[3][3] = {{1 * s, 0, 1 * s}, {0, 1 * s, 1 * s}, {1 * s, 1 * s, 2 * s}};
  const double v[3][2] = {{1, 2}, {3, 4}, {4, 6}};
  const Tensor out = self_attend(attn, x, IndexTensor({1, 3}, 1));
  for (int i = 0; i < 3; ++i) {
    double z = 0.0;
    for (int j = 0; j < 3; ++j) z += std::exp(scores[i][j]);
    for (int c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) expect += std::exp(scores[i][j]) / z * v[j][c];
      EXPECT_NEAR(out.at(0, i, c), expect, 1e-6);
    }
  }
}

TEST(SelfAttention, MaskedRowsSumToOneAndMaskedOutputsAreZero) {
  Rng rng(8);
  SelfAttention attn("a", 4, 3, rng);
  const Tensor x = random_tensor({2, 5, 4}, rng);
  IndexTensor mask({2, 5}, 1);
  mask.at(0, 1) = 0;
  mask.at(0, 4) = 0;
  mask.at(1, 3) = 0;
  const Tensor w = attention_weights(attn, x, mask);
  const Tensor out = self_attend(attn, x, mask);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 5; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        total += w.at(b, i, j);
        if (!mask.at(b, j)) EXPECT_EQ(w.at(b, i, j), 0.0);
      }
      if (mask.at(b, i)) {
        EXPECT_NEAR(total, 1.0, 1e-6);
      } else {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(b, i, c), 0.0);
      }
    }
  }
}

TEST(SelfAttention, AllMaskedRowIsAContractError) {
  Rng rng(9);
  SelfAttention attn("a", 2, 2, rng);
  IndexTensor mask({2, 2}, 1);
  mask.at(1, 0) = mask.at(1, 1) = 0;
  EXPECT_THROW(self_attend(attn, random_tensor({2, 2, 2}, rng), mask), ContractError);
}

TEST(SelfAttention, Gradients) {
  GradcheckReport r = gradcheck("self_attention");
  EXPECT_TRUE(r.pass) << r.to_string();
}

TEST(SharedEncoder, WidthArithmetic) {
  Rng rng(10);
  SharedEncoder enc(16, 128, 256, rng);
  EXPECT_EQ(enc.output_dim(), 512u);
  SharedEncoder no_attn(16, 8, 0, rng);
  EXPECT_EQ(no_attn.output_dim(), 16u);
  EXPECT_EQ(no_attn.attention(), nullptr);
}

TEST(SharedEncoder, TokenStatesConcatenateBranches) {
  Rng rng(11);
  SharedEncoder enc(4, 3, 5, rng);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  const IndexTensor lengths = lengths_of({4});
  const IndexTensor mask = mask_from_lengths(lengths, 4);
  const EncoderOutput out = encode(enc, x, lengths, mask);
  const auto lstm = bilstm_encode(enc.bilstm(), x, lengths);
  const Tensor attn = self_attend(*enc.attention(), x, mask);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(out.token_states.at(0, t, j), lstm.states.at(0, t, j));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.token_states.at(0, t, 6 + j), attn.at(0, t, j));
  }
}

TEST(SharedEncoder, PaddingInvariance) {
  Rng rng(12);
  SharedEncoder enc(3, 4, 4, rng);
  const Tensor short_x = random_tensor({1, 3, 3}, rng);
  Tensor padded({1, 7, 3}, 0.0);
  for (std::size_t i = 0; i < short_x.size(); ++i) padded[i] = short_x[i];
  for (std::size_t i = short_x.size(); i < padded.size(); ++i) padded[i] = 5.0;  // garbage in the tail
  const auto a = encode(enc, short_x, lengths_of({3}), mask_from_lengths(lengths_of({3}), 3));
  const auto b = encode(enc, padded, lengths_of({3}), mask_from_lengths(lengths_of({3}), 7));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < enc.output_dim(); ++j)
      EXPECT_NEAR(a.token_states.at(0, t, j), b.token_states.at(0, t, j), 1e-6);
  for (std::size_t t = 3; t < 7; ++t)
    for (std::size_t j = 0; j < enc.output_dim(); ++j) EXPECT_EQ(b.token_states.at(0, t, j), 0.0);
  EXPECT_EQ(a.summary, b.summary);
}

TEST(SharedEncoder, MaskMustAgreeWithLengths) {
  Rng rng(13);
  SharedEncoder enc(3, 2, 2, rng);
  EXPECT_THROW(encode(enc, random_tensor({1, 3, 3}, rng), lengths_of({2}), IndexTensor({1, 3}, 1)), ContractError);
}

TEST(SharedEncoder, GradientsOnTwoSequenceBatch) {
  GradcheckReport r = gradcheck("encoder");
  EXPECT_TRUE(r.pass) << r.to_string();
}
