// SPDX-License-Identifier: Apache-2.0
// OpenMP kernels against their serial references, plus whole-layer forward
// and backward passes.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "rotdcf/arch.hpp"
#include "rotdcf/kernels.hpp"
#include "rotdcf/network.hpp"

using namespace rotdcf;
using kernels::Op;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<double> v(n);
  for (double& x : v) x = n01(rng);
  return v;
}

// Shapes of the joint layer contraction in conv3-rotdcf: (M x M_prev K K_alpha) times
// (M_prev K K_alpha x N H W).
template <bool Parallel>
void BM_Gemm(benchmark::State& st) {
  const int m = static_cast<int>(st.range(0)), k = static_cast<int>(st.range(1)), n = static_cast<int>(st.range(2));
  const auto A = noise(static_cast<std::size_t>(m) * k, 1), B = noise(static_cast<std::size_t>(k) * n, 2);
  std::vector<double> C(static_cast<std::size_t>(m) * n);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::gemm(Op::N, Op::N, m, n, k, A.data(), k, B.data(), n, false, C.data(), n);
    else kernels::reference::gemm(Op::N, Op::N, m, n, k, A.data(), k, B.data(), n, false, C.data(), n);
    benchmark::DoNotOptimize(C.data());
  }
  st.counters["flops"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Args({16, 120, 8 * 196})->Args({32, 240, 8 * 49})->Args({64, 64, 4096});
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Args({16, 120, 8 * 196})->Args({32, 240, 8 * 49})->Args({64, 64, 4096});

template <bool Parallel>
void BM_Im2col(benchmark::State& st) {
  const int H = static_cast<int>(st.range(0)), L = 5;
  const auto x = noise(static_cast<std::size_t>(H) * H, 3);
  std::vector<double> col(static_cast<std::size_t>(L) * L * H * H);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::im2col(x.data(), H, H, L, col.data(), H * H);
    else kernels::reference::im2col(x.data(), H, H, L, col.data(), H * H);
    benchmark::DoNotOptimize(col.data());
  }
}
BENCHMARK(BM_Im2col<true>)->Name("im2col/omp")->Arg(14)->Arg(28);
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial")->Arg(14)->Arg(28);

// Full network pass at a given thread count: 1 runs the same code path
// serially, 0 uses every available thread.
void BM_Forward(benchmark::State& st) {
  const int saved = omp_get_max_threads();
  const int threads = st.range(0) > 0 ? static_cast<int>(st.range(0)) : saved;  // 0: all threads
  omp_set_num_threads(threads);
  Network net(make_preset("conv3-rotdcf"));
  net.init(1);
  Tensor x({16, 1, 28, 28});
  const auto v = noise(x.size(), 4);
  std::copy(v.begin(), v.end(), x.data());
  for (auto _ : st) benchmark::DoNotOptimize(net.forward(x));
  omp_set_num_threads(saved);
  st.SetItemsProcessed(st.iterations() * 16);
}
BENCHMARK(BM_Forward)->Name("conv3_rotdcf_forward_b16/threads")->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& st) {
  const int saved = omp_get_max_threads();
  const int threads = st.range(0) > 0 ? static_cast<int>(st.range(0)) : saved;  // 0: all threads
  omp_set_num_threads(threads);
  Network net(make_preset("conv3-rotdcf"));
  net.init(1);
  Tensor x({16, 1, 28, 28});
  const auto v = noise(x.size(), 5);
  std::copy(v.begin(), v.end(), x.data());
  std::vector<int> y(16);
  for (int i = 0; i < 16; ++i) y[i] = i % 10;
  Tensor d;
  for (auto _ : st) {
    Trace t;
    const Tensor logits = net.forward(x, &t);
    Network::softmax_loss(logits, y, &d);
    net.zero_grad();
    net.backward(t, d);
  }
  omp_set_num_threads(saved);
  st.SetItemsProcessed(st.iterations() * 16);
}
BENCHMARK(BM_Backward)->Name("conv3_rotdcf_train_step_b16/threads")->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
