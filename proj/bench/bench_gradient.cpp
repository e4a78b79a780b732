// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP batch gradient, plus encoder and decoding cost.
#include <benchmark/benchmark.h>

#include "support.hpp"
#include "treenmt/inference.hpp"
#include "treenmt/training.hpp"

using namespace treenmt;

namespace {

struct Fixture {
  Model model;
  std::vector<Example> data;
  std::vector<std::size_t> batch;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    ModelConfig cfg;
    cfg.src_vocab = 200;
    cfg.tgt_vocab = 200;
    cfg.emb_dim = 32;
    cfg.hidden_dim = 64;
    cfg.beta = BetaMode::gating();
    Fixture x{Model::create(cfg, 1), {}, {}};
    Rng rng(2);
    for (std::size_t s = 0; s < 16; ++s) {
      Example ex;
      const std::size_t n = 10 + rng.below(11);
      for (std::size_t i = 0; i < n; ++i) ex.source.push_back(4 + static_cast<int>(rng.below(196)));
      ex.tree = support::random_binary_tree(rng, n);
      for (std::size_t i = 0; i < n; ++i) ex.target.push_back(4 + static_cast<int>(rng.below(196)));
      ex.target.push_back(Vocab::kEos);
      x.data.push_back(std::move(ex));
      x.batch.push_back(s);
    }
    return x;
  }();
  return f;
}

void BM_BatchGradientSerial(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient_serial(f.model, f.data, f.batch).loss_sum);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.size()));
}
BENCHMARK(BM_BatchGradientSerial)->Unit(benchmark::kMillisecond);

void BM_BatchGradientParallel(benchmark::State& state) {
  const Fixture& f = fixture();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(batch_gradient_parallel(f.model, f.data, f.batch, threads).loss_sum);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.size()));
}
BENCHMARK(BM_BatchGradientParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto beam = static_cast<std::size_t>(state.range(0));
  const Example& ex = f.data[0];
  for (auto _ : state) benchmark::DoNotOptimize(translate_beam(f.model, ex.source, ex.tree, beam, 30).log_prob);
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
