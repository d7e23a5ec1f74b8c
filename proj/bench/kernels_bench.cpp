#include <benchmark/benchmark.h>

#include <vector>

#include "ssgan/autograd.hpp"
#include "ssgan/kernels.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/random.hpp"

namespace {

using ssgan::kernels::Trans;

std::vector<float> random_buffer(int64_t n, uint64_t seed) {
  ssgan::Rng rng(seed);
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int64_t m = state.range(0), n = state.range(1), k = state.range(2);
  auto a = random_buffer(m * k, 1), b = random_buffer(n * k, 2);
  std::vector<float> c(static_cast<size_t>(m * n));
  for (auto _ : state) {
    if constexpr (Parallel)
      ssgan::kernels::parallel::gemm<float>(Trans::No, Trans::Yes, m, n, k, 1.f, a.data(), b.data(), 0.f, c.data());
    else
      ssgan::kernels::serial::gemm<float>(Trans::No, Trans::Yes, m, n, k, 1.f, a.data(), b.data(), 0.f, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  ssgan::kernels::ConvGeometry g{32, 16, 16, state.range(0), 3, 1, 1};
  auto x = random_buffer(g.batch * g.height * g.width * g.channels, 3);
  std::vector<float> cols(static_cast<size_t>(g.rows() * g.patch()));
  for (auto _ : state) {
    if constexpr (Parallel)
      ssgan::kernels::parallel::im2col<float>(g, x.data(), cols.data());
    else
      ssgan::kernels::serial::im2col<float>(g, x.data(), cols.data());
    benchmark::DoNotOptimize(cols.data());
  }
}

template <bool Parallel>
void BM_Covariance(benchmark::State& state) {
  const int64_t n = state.range(0), f = state.range(1);
  ssgan::Rng rng(4);
  std::vector<double> x(static_cast<size_t>(n * f)), mean(static_cast<size_t>(f), 0.0), out(static_cast<size_t>(f * f));
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) {
    if constexpr (Parallel)
      ssgan::kernels::parallel::covariance(x.data(), mean.data(), n, f, out.data());
    else
      ssgan::kernels::serial::covariance(x.data(), mean.data(), n, f, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

// Forward + backward of one 3x3 conv layer, as used in the discriminator.
void BM_ConvLayer(benchmark::State& state) {
  const int64_t batch = 64, size = state.range(0), ch = state.range(1);
  ssgan::Rng rng(5);
  ssgan::ag::VarF x(rng.normal_tensor<float>({batch, size, size, ch}), true);
  ssgan::ag::VarF w(rng.normal_tensor<float>({ch, 3, 3, ch}, 0.05), true);
  for (auto _ : state) {
    auto y = ssgan::ops::conv2d(x, w, 1, 1);
    ssgan::ag::backward(ssgan::ops::sum(y));
    w.zero_grad();
    x.zero_grad();
  }
  state.counters["GFLOP/s"] = benchmark::Counter(3 * 2.0 * batch * size * size * ch * 9 * ch,
                                                 benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Args({256, 64, 576})->Args({1024, 128, 1152});
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Args({256, 64, 576})->Args({1024, 128, 1152})->Args({4096, 128, 1152});
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_Im2col<true>)->Name("im2col/parallel")->Arg(32)->Arg(128);
BENCHMARK(BM_Covariance<false>)->Name("covariance/serial")->Args({1000, 128});
BENCHMARK(BM_Covariance<true>)->Name("covariance/parallel")->Args({1000, 128});
BENCHMARK(BM_ConvLayer)->Name("conv3x3_fwd_bwd")->Args({16, 64})->Args({8, 128})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
