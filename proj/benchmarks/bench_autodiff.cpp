#include <benchmark/benchmark.h>

#include "vaest/graph.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

using namespace vaest;

namespace {

TensorPtr randt(Rng& rng, Shape shape, bool grad = true) {
  return Tensor::create(shape, rng.uniform_vec(shape_size(shape), -1.0, 1.0), grad);
}

// Forward plus backward through a projection-sized matmul chain, the dominant
// cost of a training step.
void BM_MatmulTrainStep(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(42);
  auto x = randt(rng, {t, 512}, false);
  auto w1 = randt(rng, {512, 256});
  auto w2 = randt(rng, {256, 256});
  for (auto _ : state) {
    w1->zero_grad();
    w2->zero_grad();
    Graph g;
    auto h = g.tanh(g.matmul(x, w1));
    auto loss = g.mean(g.square(g.matmul(h, w2)));
    g.backward(loss);
    benchmark::DoNotOptimize(w1->grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t));
}

void BM_DilatedConvStack(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(42);
  auto x = randt(rng, {t, 256}, false);
  auto w = randt(rng, {3, 256, 256});
  auto b = randt(rng, {256});
  for (auto _ : state) {
    w->zero_grad();
    b->zero_grad();
    Graph g;
    TensorPtr h = x;
    for (std::size_t d : {1u, 2u, 4u, 8u}) h = g.relu(g.causal_dilated_conv1d(h, w, b, d));
    g.backward(g.mean(g.square(h)));
    benchmark::DoNotOptimize(w->grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t));
}

}  // namespace

BENCHMARK(BM_MatmulTrainStep)->Arg(20)->Arg(100);
BENCHMARK(BM_DilatedConvStack)->Arg(20)->Arg(100);

BENCHMARK_MAIN();
