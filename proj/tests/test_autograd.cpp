#include <gtest/gtest.h>

#include "granenc/gradcheck.hpp"
#include "support.hpp"

using namespace granenc;
using testing_support::random_tensor;

namespace {

Parameter make_param(const std::string& name, Shape shape, Rng& rng) {
  return Parameter(name, random_tensor(std::move(shape), rng));
}

void expect_pass(const GradcheckReport& r) {
  EXPECT_TRUE(r.pass) << r.to_string();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook LSTM recurrences, one step at a time.
Tensor reference_lstm(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b, bool reverse) {
  const std::size_t steps = x.rows(), h = wh.rows();
  Tensor out({steps, h});
  std::vector<double> hp(h, 0.0), cp(h, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    std::vector<double> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      z[j] = b.at(0, j);
      for (std::size_t k = 0; k < x.cols(); ++k) z[j] += x.at(t, k) * wx.at(k, j);
      for (std::size_t k = 0; k < h; ++k) z[j] += hp[k] * wh.at(k, j);
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double c = sigmoid(z[h + k]) * cp[k] + sigmoid(z[k]) * std::tanh(z[2 * h + k]);
      cp[k] = c;
      hp[k] = sigmoid(z[3 * h + k]) * std::tanh(c);
      out.at(t, k) = hp[k];
    }
  }
  return out;
}

}  // namespace

TEST(Autograd, ElementwiseAndMatrixOpsMatchFiniteDifferences) {
  Rng rng(3);
  Parameter a = make_param("a", {3, 4}, rng);
  Parameter b = make_param("b", {4, 2}, rng);
  Parameter c = make_param("c", {3, 4}, rng);
  Parameter row = make_param("row", {1, 4}, rng);
  Parameter col = make_param("col", {3, 1}, rng);
  expect_pass(gradcheck_function("ops", {&a, &b, &c, &row, &col}, [&](ag::Graph& g) {
    ag::Var va = g.param(a), vb = g.param(b), vc = g.param(c);
    ag::Var m = ag::matmul(ag::tanh(va), vb);
    ag::Var n = ag::matmul_nt(ag::sigmoid(vc), va);
    ag::Var e = ag::sub(ag::mul(va, vc), ag::scale(ag::add_row(vc, g.param(row)), 0.5));
    ag::Var f = ag::add_col(ag::mul_row(va, g.param(row)), g.param(col));
    return std::vector<ag::Var>{m, n, e, f, ag::transpose(va), ag::broadcast_rows(g.param(row), 2)};
  }));
}

TEST(Autograd, ShapeOpsAndReductionsMatchFiniteDifferences) {
  Rng rng(4);
  Parameter a = make_param("a", {3, 5}, rng);
  Parameter b = make_param("b", {2, 5}, rng);
  expect_pass(gradcheck_function("shape", {&a, &b}, [&](ag::Graph& g) {
    ag::Var va = g.param(a), vb = g.param(b);
    const ag::Var rows[] = {va, vb};
    const ag::Var side[] = {ag::slice_cols(va, 0, 2), ag::slice_cols(va, 3, 2)};
    return std::vector<ag::Var>{ag::concat_rows(rows), ag::concat_cols(side), ag::slice_rows(va, 1, 2),
                                ag::sum(vb), ag::max_cols(va), ag::softmax_rows(va), ag::log_softmax_rows(vb)};
  }));
}

TEST(Autograd, CrossEntropyMatchesFiniteDifferences) {
  Rng rng(5);
  Parameter logits = make_param("logits", {4, 3}, rng);
  const std::vector<std::int64_t> targets = {0, 2, 1, 2};
  expect_pass(gradcheck_function("ce", {&logits}, [&](ag::Graph& g) {
    return std::vector<ag::Var>{ag::cross_entropy_sum(g.param(logits), targets)};
  }));
}

TEST(Autograd, CrossEntropyRejectsOutOfRangeTarget) {
  ag::Graph g;
  ag::Var logits = g.constant(Tensor({2, 3}, 0.0));
  const std::vector<std::int64_t> bad = {0, 3};
  EXPECT_THROW(ag::cross_entropy_sum(logits, bad), LabelError);
}

TEST(Autograd, CrossEntropyOfUniformLogitsIsLogK) {
  ag::Graph g;
  const std::vector<std::int64_t> targets = {4};
  ag::Var loss = ag::cross_entropy_sum(g.constant(Tensor({1, 5}, 0.7)), targets);
  EXPECT_NEAR(loss.value()[0], std::log(5.0), 1e-12);
}

TEST(Autograd, SoftmaxRowsSumToOne) {
  Rng rng(6);
  ag::Graph g;
  ag::Var s = ag::softmax_rows(g.constant(random_tensor({5, 7}, rng, 30.0)));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (double v : s.value().row(r)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Autograd, LstmForwardMatchesReferenceRecurrence) {
  Rng rng(7);
  const Tensor x = random_tensor({5, 3}, rng), wx = random_tensor({3, 8}, rng), wh = random_tensor({2, 8}, rng),
               b = random_tensor({1, 8}, rng);
  for (bool reverse : {false, true}) {
    ag::Graph g;
    ag::Var out = ag::lstm(g.constant(x), g.constant(wx), g.constant(wh), g.constant(b), reverse);
    EXPECT_LT(max_abs_diff(out.value(), reference_lstm(x, wx, wh, b, reverse)), 1e-12);
  }
}

TEST(Autograd, LstmRejectsNonFiniteInput) {
  ag::Graph g;
  Tensor x({2, 1}, 0.0);
  x[1] = std::nan("");
  EXPECT_THROW(ag::lstm(g.constant(x), g.constant(Tensor({1, 4})), g.constant(Tensor({1, 4})),
                        g.constant(Tensor({1, 4})), false),
               NumericError);
}

TEST(Autograd, LstmGradientsMatchFiniteDifferences) {
  Rng rng(8);
  Parameter x = make_param("x", {4, 3}, rng);
  Parameter wx = make_param("wx", {3, 8}, rng);
  Parameter wh = make_param("wh", {2, 8}, rng);
  Parameter b = make_param("b", {1, 8}, rng);
  for (bool reverse : {false, true}) {
    expect_pass(gradcheck_function("lstm", {&x, &wx, &wh, &b}, [&](ag::Graph& g) {
      return std::vector<ag::Var>{ag::lstm(g.param(x), g.param(wx), g.param(wh), g.param(b), reverse)};
    }));
  }
}

TEST(Autograd, ConvMaxpoolMatchesDirectWindowScan) {
  Rng rng(9);
  const std::size_t e = 2, k = 2, nf = 3;
  const Tensor chars = random_tensor({7, e}, rng), filters = random_tensor({k * e, nf}, rng),
               bias = random_tensor({1, nf}, rng);
  const std::vector<ag::WordSpan> spans = {{0, 3}, {3, 2}, {5, 2}};
  ag::Graph g;
  ag::Var out = ag::conv_maxpool(g.constant(chars), spans, g.constant(filters), g.constant(bias), k);
  for (std::size_t w = 0; w < spans.size(); ++w) {
    for (std::size_t f = 0; f < nf; ++f) {
      double best = -1e300;
      for (std::size_t p = 0; p + k <= spans[w].width; ++p) {
        double acc = bias.at(0, f);
        for (std::size_t r = 0; r < k; ++r)
          for (std::size_t c = 0; c < e; ++c) acc += chars.at(spans[w].offset + p + r, c) * filters.at(r * e + c, f);
        best = std::max(best, acc);
      }
      EXPECT_NEAR(out.value().at(w, f), best, 1e-12);
    }
  }
}

TEST(Autograd, LookupSkipsFrozenRow) {
  Parameter table("table", Tensor::matrix(3, 2, {0, 0, 1, 2, 3, 4}));
  table.frozen_row = 0;
  table.grad = Tensor({3, 2}, 0.0);
  ag::Graph g;
  const std::vector<std::int64_t> ids = {0, 2, 2};
  g.backward(ag::sum(ag::lookup(g, table, ids)));
  EXPECT_EQ(table.grad.at(0, 0), 0.0);
  EXPECT_EQ(table.grad.at(0, 1), 0.0);
  EXPECT_EQ(table.grad.at(1, 0), 0.0);
  EXPECT_EQ(table.grad.at(2, 0), 2.0);
}

TEST(Autograd, DetachBlocksGradient) {
  Parameter a("a", Tensor::matrix(1, 2, {1.0, 2.0}));
  ag::Graph g;
  ag::Var v = g.param(a);
  g.backward(ag::sum(ag::add(ag::detach(ag::scale(v, 3.0)), v)));
  EXPECT_EQ(a.grad[0], 1.0);
  EXPECT_EQ(a.grad[1], 1.0);
}

TEST(Autograd, ParameterGradientsAccumulateAcrossUses) {
  Parameter a("a", Tensor::matrix(1, 1, {2.0}));
  ag::Graph g;
  ag::Var v = g.param(a);
  g.backward(ag::sum(ag::mul(v, v)));
  EXPECT_DOUBLE_EQ(a.grad[0], 4.0);
}

TEST(Autograd, ShapeErrorsAreReported) {
  ag::Graph g;
  EXPECT_THROW(ag::matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), ShapeError);
  EXPECT_THROW(ag::add(g.constant(Tensor({2, 3})), g.constant(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0}), ShapeError);
}

TEST(Gradcheck, CorruptedGradientIsReportedByName) {
  GradcheckOptions opts;
  opts.corrupt = "attention.w_key";
  GradcheckReport r = gradcheck("self_attention", opts);
  EXPECT_FALSE(r.pass);
  ASSERT_NE(r.first_failure(), nullptr);
  EXPECT_EQ(r.first_failure()->name, "attention.w_key");
  for (const auto& e : r.entries)
    if (e.name != "attention.w_key") EXPECT_TRUE(e.pass) << e.name;
}

TEST(Gradcheck, UnknownSelectorIsRejected) { EXPECT_THROW(gradcheck("nope"), ConfigError); }

TEST(Gradcheck, RelativeErrorUsesFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-3);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  std::vector<int> x = {1, 2, 3, 4, 5, 6}, y = x;
  Rng c(5), d(5);
  c.shuffle(x);
  d.shuffle(y);
  EXPECT_EQ(x, y);
}

TEST(Rng, UniformStaysInRange) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(-0.1, 0.1);
    EXPECT_GE(u, -0.1);
    EXPECT_LT(u, 0.1);
    EXPECT_LT(r.below(7), 7u);
  }
}
