#include <benchmark/benchmark.h>

#include <random>

#include "vern/training.hpp"

using namespace vern;

namespace {

std::vector<Point> points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 5000.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return Tensor(m);
}

WsiGraph slide(std::size_t n, const ModelDims& dims) {
  std::mt19937_64 rng(n);
  return build_graph("bench", points(n, n), random_tensor(n, dims.dim_a, rng), random_tensor(n, dims.dim_b, rng),
                     kDefaultNeighbours, 1);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor(n, 1024, rng);
  const Tensor b = random_tensor(1024, 512, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * 1024 * 512);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(256);

static void BM_KnnGraph(benchmark::State& state) {
  const auto pts = points(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(knn_graph(pts, kDefaultNeighbours));
}
BENCHMARK(BM_KnnGraph)->Arg(40)->Arg(200)->Arg(2000);

static void BM_VernForward(benchmark::State& state) {
  const ModelDims dims;
  const VernParams p = init_params(dims, 3);
  const WsiGraph g = slide(static_cast<std::size_t>(state.range(0)), dims);
  for (auto _ : state) benchmark::DoNotOptimize(vern_forward(g, p, Mode::eval).prob);
}
BENCHMARK(BM_VernForward)->Arg(30)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  keep_heap_warm();
  TrainConfig cfg;
  VernParams p = init_params(cfg.dims, 4);
  const WsiGraph g = slide(static_cast<std::size_t>(state.range(0)), cfg.dims);
  RmsState st;
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(p, g, st, cfg, rng));
}
BENCHMARK(BM_TrainStep)->Arg(30)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y).auc);
}
BENCHMARK(BM_RocAuc)->Arg(200)->Arg(100000);

BENCHMARK_MAIN();
