#include <benchmark/benchmark.h>

#include "nll/datasets.hpp"
#include "nll/losses.hpp"
#include "nll/model.hpp"
#include "nll/pipeline.hpp"

namespace {

// One forward, loss, backward and SGD step on a 128-sample batch of the
// canonical task.
void BM_TrainStep(benchmark::State& state) {
  const nll::Dataset d = nll::gen_blobs(4, 128, 8, 6.0, nll::RandomStream(17));
  const nll::TrainingView view(d);
  nll::MlpParams params = nll::init_params(nll::default_mlp_spec(8, 4), nll::RandomStream(1));
  nll::OptimizerState opt = nll::OptimizerState::for_params(params);
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto fwd = nll::forward(params, view.features());
    std::vector<nll::Logits> logits;
    for (std::size_t i = 0; i < view.size(); ++i) logits.emplace_back(fwd.logits.row(i));
    const auto res = nll::jnpl_loss(logits, view.given_labels(), 1, nll::JnplConfig{},
                                    nll::RandomStream(step++));
    nll::RowMatrix grad(view.size(), 4);
    for (std::size_t i = 0; i < view.size(); ++i) {
      std::copy(res.grads[i].begin(), res.grads[i].end(), grad.row(i).begin());
    }
    nll::sgd_step(params, nll::backward(params, fwd.cache, grad), opt, 1e-3);
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_TrainStep);

// A full JNPL epoch over the 4000-sample canonical training set.
void BM_JnplEpoch(benchmark::State& state) {
  const nll::Dataset d = nll::gen_blobs(4, 4000, 8, 6.0, nll::RandomStream(17));
  const nll::TrainingView view(d);
  nll::TrainRunConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(nll::train_jnpl(view, cfg));
}
BENCHMARK(BM_JnplEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
