#include <benchmark/benchmark.h>

#include <cmath>

#include "gridseek/contrast.hpp"
#include "gridseek/index.hpp"
#include "gridseek/net.hpp"
#include "gridseek/rng.hpp"

namespace {

using namespace gridseek;

ndgrad::Tensor uniform(const ndgrad::Shape& shape, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(ndgrad::numel(shape));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return ndgrad::Tensor::from(shape, std::move(v), true);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({8, c, 32, 32}, 1);
  const auto w = uniform({c, c, 3, 3}, 2);
  const auto b = uniform({c}, 3);
  for (auto _ : state) {
    ndgrad::Tape tape;
    const auto y = ndgrad::ops::conv2d(tape, x, w, b, 1, 1);
    ndgrad::backward(tape, ndgrad::ops::sum(tape, y));
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_EncodeImage(benchmark::State& state) {
  const net::Model model(net::ModelConfig{});
  imops::Image img(64, 64);
  CounterRng rng(5);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(model.encode_image(img));
}
BENCHMARK(BM_EncodeImage)->Unit(benchmark::kMillisecond);

void BM_IndexQuery(benchmark::State& state) {
  const int dim = 32;
  index::RetrievalIndex idx(dim);
  CounterRng rng(4);
  auto unit = [&] {
    std::vector<double> v(dim);
    double n = 0;
    for (auto& x : v) {
      x = rng.uniform(-1, 1);
      n += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n);
    return v;
  };
  for (int i = 0; i < state.range(0); ++i) {
    net::PyramidEmbeddings pyr;
    for (int l = 0; l < net::kLevels; ++l) {
      auto& g = pyr.grids[static_cast<std::size_t>(l)];
      g.level = l;
      g.rows = g.cols = 16 >> l;
      g.dim = dim;
      for (int c = 0; c < g.rows * g.cols; ++c) {
        const auto v = unit();
        g.cells.insert(g.cells.end(), v.begin(), v.end());
      }
    }
    idx.add("img" + std::to_string(i), "", pyr);
  }
  const net::Embedding q{unit()};
  for (auto _ : state) benchmark::DoNotOptimize(idx.query(q, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IndexQuery)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
