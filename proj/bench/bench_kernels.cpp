// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "immfm/kernels.hpp"
#include "immfm/regressor.hpp"
#include "immfm/rng.hpp"
#include "immfm/simulate.hpp"

using namespace immfm;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  Tensor t(r, c, 0.0);
  for (auto& x : t.data()) x = standard_normal(rng);
  return t;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(n, 128, 1);
  const Tensor b = random_tensor(128, 128, 2);
  Tensor c(n, 128, 0.0);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm_parallel(kernels::Transpose::no, kernels::Transpose::no, a, b, c, false);
    } else {
      kernels::gemm_serial(kernels::Transpose::no, kernels::Transpose::no, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 128 * 128));
}

template <bool Parallel>
void BM_Distances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng = make_stream(3, 0);
  std::vector<Vec> a(n, Vec(2)), b(n, Vec(2));
  for (auto& p : a) p = {standard_normal(rng), standard_normal(rng)};
  for (auto& p : b) p = {standard_normal(rng), standard_normal(rng)};
  for (auto _ : state) {
    Tensor d = Parallel ? kernels::squared_distances_parallel(a, b)
                        : kernels::squared_distances_serial(a, b);
    benchmark::DoNotOptimize(d.data().data());
  }
}

template <bool Parallel>
void BM_Rollouts(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.hidden_width = 64;
  const model::SdeModel net(cfg, 7);
  std::vector<simulate::ForecastRequest> reqs(static_cast<std::size_t>(state.range(0)));
  for (std::size_t k = 0; k < reqs.size(); ++k) {
    auto& r = reqs[k];
    r.prefix.times = {0.0, 0.2};
    r.prefix.states = {{0.0, 0.0}, {0.1, 0.1 * static_cast<double>(k % 5)}};
    r.t_end = 1.0;
    r.dt = 0.02;
    r.mode = simulate::Mode::sde;
    r.seed = 11;
  }
  for (auto _ : state) {
    auto out = Parallel ? simulate::forecast_many_parallel(net, reqs)
                        : simulate::forecast_many_serial(net, reqs);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(128)->Arg(512);
BENCHMARK(BM_Distances<false>)->Name("sqdist/serial")->Arg(200)->Arg(1000);
BENCHMARK(BM_Distances<true>)->Name("sqdist/parallel")->Arg(200)->Arg(1000);
BENCHMARK(BM_Rollouts<false>)->Name("rollouts/serial")->Arg(64);
BENCHMARK(BM_Rollouts<true>)->Name("rollouts/parallel")->Arg(64);

BENCHMARK_MAIN();
