#include <benchmark/benchmark.h>

#include "lomar/corpus.hpp"
#include "lomar/trainer.hpp"

using namespace lomar;

namespace {

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.sampler = {4, 2, 0.8};
  cfg.encoder.num_layers = static_cast<std::size_t>(state.range(0));
  cfg.batch_size = 8;
  cfg.data.augment = false;
  cfg.threads = 1;
  Trainer<float> trainer(cfg, images_of(synthetic_corpus(64, 64, 10, 0)));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().loss);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cfg.batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Patchify(benchmark::State& state) {
  const auto img = synthetic_corpus(1, 224, 10, 0).front().image;
  for (auto _ : state) benchmark::DoNotOptimize(patchify(img, 16).patches.data());
}
BENCHMARK(BM_Patchify);

}  // namespace

BENCHMARK_MAIN();
