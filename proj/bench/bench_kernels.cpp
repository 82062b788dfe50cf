// Parallel kernels against their serial references.
//   bench_kernels --benchmark_filter=field_forward

#include <benchmark/benchmark.h>

#include <random>

#include "ba/field_kernel.hpp"
#include "ba/fieldops.hpp"

using namespace ba;

namespace {

const PatchSupervision<double>* const kNoSup = nullptr;

struct KernelInput {
  int H, W, C;
  std::vector<double> params, image, gfbar, gdbar, gnuf, gnuv;
};

KernelInput kernel_input(int side) {
  std::mt19937_64 rng(side);
  std::uniform_real_distribution<double> U(-1.0, 1.0), P(0.0, 1.0);
  KernelInput in{side, side, 3, {}, {}, {}, {}, {}, {}};
  const int N = side * side;
  for (int k = 0; k < N; ++k) {
    for (int i = 0; i < 3; ++i) in.params.push_back(3.0 * U(rng));
    for (int w = 0; w < 2; ++w) {
      double a[3], s = 0;
      for (double& v : a) s += (v = std::exp(U(rng)));
      for (double v : a) in.params.push_back(v / s);
    }
  }
  for (int i = 0; i < N * 3; ++i) {
    in.image.push_back(P(rng));
    in.gfbar.push_back(U(rng));
  }
  for (int i = 0; i < N; ++i) {
    in.gdbar.push_back(U(rng));
    in.gnuf.push_back(U(rng));
    in.gnuv.push_back(U(rng));
  }
  return in;
}

template <bool Parallel>
void field_forward_bench(benchmark::State& state) {
  const auto in = kernel_input(static_cast<int>(state.range(0)));
  const FieldKernelOptions opt;
  FieldForward<double> fwd;
  for (auto _ : state) {
    if constexpr (Parallel)
      field_forward(in.H, in.W, in.C, in.params.data(), in.image.data(), opt, kNoSup, fwd);
    else
      reference::field_forward(in.H, in.W, in.C, in.params.data(), in.image.data(), opt, kNoSup, fwd);
    benchmark::DoNotOptimize(fwd.fbar.data());
  }
  state.SetItemsProcessed(state.iterations() * in.H * in.W);
}

template <bool Parallel>
void field_backward_bench(benchmark::State& state) {
  const auto in = kernel_input(static_cast<int>(state.range(0)));
  const FieldKernelOptions opt;
  FieldForward<double> fwd;
  field_forward(in.H, in.W, in.C, in.params.data(), in.image.data(), opt, kNoSup, fwd);
  const FieldUpstream<double> up{in.gfbar.data(), in.gdbar.data(), in.gnuf.data(), in.gnuv.data(), 0, 0, 0};
  std::vector<double> grad(in.params.size());
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    if constexpr (Parallel)
      field_backward(in.params.data(), in.image.data(), opt, kNoSup, fwd, up, grad.data());
    else
      reference::field_backward(in.params.data(), in.image.data(), opt, kNoSup, fwd, up, grad.data());
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * in.H * in.W);
}

struct OpsInput {
  JunctionField field;
  ImageF image;
};

OpsInput ops_input(int side) {
  std::mt19937_64 rng(side + 1);
  std::uniform_real_distribution<double> U(-1.0, 1.0), A(0.0, kTwoPi), P(0.05, 1.0);
  OpsInput in{JunctionField(side, side), ImageF(side, side, 3)};
  for (std::size_t k = 0; k < in.field.size(); ++k)
    in.field.junction(k) = make_junction({4 * U(rng), 4 * U(rng)}, A(rng), {P(rng), P(rng), P(rng)});
  for (double& v : in.image.data()) v = P(rng);
  return in;
}

template <bool Parallel>
void gather_bench(benchmark::State& state) {
  const auto in = ops_input(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto w = Parallel ? gather(in.image, in.field) : reference::gather(in.image, in.field);
    benchmark::DoNotOptimize(w);
  }
}

template <bool Parallel>
void slice_bench(benchmark::State& state) {
  const auto in = ops_input(static_cast<int>(state.range(0)));
  const auto wedges = gather(in.image, in.field);
  for (auto _ : state) {
    auto m = Parallel ? slice_means(in.field, wedges) : reference::slice_means(in.field, wedges);
    benchmark::DoNotOptimize(m);
  }
}

template <bool Parallel>
void boundary_bench(benchmark::State& state) {
  const auto in = ops_input(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto b = Parallel ? global_boundary_map(in.field, kDefaultEta, 0.5)
                      : reference::global_boundary_map(in.field, kDefaultEta, 0.5);
    benchmark::DoNotOptimize(b);
  }
}

}  // namespace

BENCHMARK(field_forward_bench<true>)->Name("field_forward/parallel")->Arg(21)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(field_forward_bench<false>)->Name("field_forward/reference")->Arg(21)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(field_backward_bench<true>)->Name("field_backward/parallel")->Arg(21)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(field_backward_bench<false>)->Name("field_backward/reference")->Arg(21)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(gather_bench<true>)->Name("gather/parallel")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(gather_bench<false>)->Name("gather/reference")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(slice_bench<true>)->Name("slice_means/parallel")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(slice_bench<false>)->Name("slice_means/reference")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(boundary_bench<true>)->Name("boundary_map/parallel")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(boundary_bench<false>)->Name("boundary_map/reference")->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
