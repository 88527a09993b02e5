#include <benchmark/benchmark.h>

#include <vector>

#include "nll/losses.hpp"

namespace {

std::vector<nll::Logits> random_batch(std::size_t batch, std::size_t c, std::uint64_t seed) {
  nll::RandomStream rng(seed);
  std::vector<nll::Logits> out;
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<double> z(c);
    for (auto& v : z) v = 3.0 * rng.normal();
    out.emplace_back(std::move(z));
  }
  return out;
}

void BM_NlPlus(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto logits = random_batch(1, c, 1);
  nll::RandomStream rng(2);
  const auto ybar = nll::sample_complementary(nll::ClassLabel{0}, c, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nll::nlplus_loss(logits[0], ybar));
}
BENCHMARK(BM_NlPlus)->Arg(10)->Arg(100);

void BM_PlPlus(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto logits = random_batch(1, c, 3);
  const nll::JnplConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(nll::plplus_loss(logits[0], nll::ClassLabel{0}, cfg));
}
BENCHMARK(BM_PlPlus)->Arg(10)->Arg(100);

void BM_JnplBatch(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto logits = random_batch(128, c, 4);
  std::vector<nll::ClassLabel> given(128);
  for (std::size_t i = 0; i < given.size(); ++i) given[i] = nll::ClassLabel{i % c};
  const nll::JnplConfig cfg;
  std::uint64_t step = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nll::jnpl_loss(logits, given, 1, cfg, nll::RandomStream(step++)));
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_JnplBatch)->Arg(4)->Arg(10)->Arg(100);

}  // namespace
