#include <benchmark/benchmark.h>

#include "socnn/cdu.hpp"
#include "socnn/linalg.hpp"
#include "socnn/nn.hpp"
#include "socnn/rng.hpp"

using namespace socnn;

namespace {

Tensor random(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random(Shape{n, n}, 1), b = random(Shape{n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_SymEig(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = symmetrize(random(Shape{n, n}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(a));
}
BENCHMARK(BM_SymEig)->Arg(8)->Arg(32)->Arg(65);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const TensorF x = random(Shape{32, 32, c}, 4).cast<float>();
  Conv2dParams<float> p;
  p.weights = random(Shape{3, 3, c, c}, 5).cast<float>();
  p.bias = TensorF(Shape{c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

void BM_CduForward(benchmark::State& state) {
  CduConfig cfg;
  cfg.o2t_dims = {50, 50};
  cfg.pv_dim = 50;
  const auto chain = build_cdu(cfg, 64);
  const Tensor x = random(Shape{64, 64}, 6);
  std::vector<Tensor> weights;
  std::uint64_t seed = 10;
  for (const auto& layer : chain) {
    if (layer.kind == CduLayerKind::O2T) weights.push_back(random(Shape{layer.dout, layer.din}, seed++));
    if (layer.kind == CduLayerKind::PV) weights.push_back(random(Shape{layer.din, layer.dout}, seed++));
  }
  for (auto _ : state) {
    Graph<double> g;
    std::vector<Var<double>> params;
    for (const auto& w : weights) params.push_back(g.constant(w));
    const Var<double> pv_w = params.back();
    params.pop_back();
    benchmark::DoNotOptimize(cdu_forward<double>(g.constant(x), cfg, chain, params, pv_w).value());
  }
}
BENCHMARK(BM_CduForward);

}  // namespace
BENCHMARK_MAIN();
