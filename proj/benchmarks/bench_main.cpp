#include <benchmark/benchmark.h>

#include "granenc/encoder.hpp"
#include "granenc/mrc_head.hpp"
#include "granenc/synthetic.hpp"
#include "granenc/training.hpp"

using namespace granenc;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.storage()) v = rng.uniform(-1, 1);
  return t;
}

void BM_BiLstmForwardBackward(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  BiLstm lstm("bench", 64, 32, rng);
  const Tensor x = random_matrix(steps, 64, rng);
  for (auto _ : state) {
    ag::Graph g;
    ag::Var out = lstm.forward(g, g.constant(x)).states;
    g.backward(ag::sum(out));
    benchmark::DoNotOptimize(out.value().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(steps));
}
BENCHMARK(BM_BiLstmForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_SelfAttention(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  SelfAttention attn("bench", 64, 64, rng);
  const Tensor x = random_matrix(steps, 64, rng);
  for (auto _ : state) {
    ag::Graph g;
    ag::Var out = attn.forward(g, g.constant(x));
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(BM_SelfAttention)->Arg(16)->Arg(64)->Arg(256);

void BM_DecodeAnswer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> s(n + 1), e(n + 1);
  for (auto& v : s) v = rng.uniform(-3, 3);
  for (auto& v : e) v = rng.uniform(-3, 3);
  for (auto _ : state) benchmark::DoNotOptimize(decode_answer(s, e, 30));
}
BENCHMARK(BM_DecodeAnswer)->Arg(50)->Arg(400);

void BM_ToyTrainStep(benchmark::State& state) {
  const TrainConfig config = toy_config();
  const auto mrc = toy_mrc_examples({});
  const auto slu = toy_slu_examples();
  JointModel model(config, build_model_vocab(config, mrc, slu));
  Trainer trainer(model, make_optimizer(config));
  const auto enc = model.text_encoder();
  const MRCBatch mb = make_batches(mrc, enc, 32, 1, false).front();
  const SLUBatch sb = make_batches(slu, enc, model.vocab().intents, model.vocab().slots, 32, 1, false).front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.train_step(Task::mrc, mb).loss);
    benchmark::DoNotOptimize(trainer.train_step(Task::slu, sb).loss);
  }
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
