#include <benchmark/benchmark.h>

#include <random>

#include "seqrec/decode.hpp"
#include "seqrec/pathopt.hpp"

namespace {

using namespace seqrec;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ChainScores make_scores(std::size_t m, int l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChainScores cs = ChainScores::zeros(0, l, m);
  for (int t = 1; t < l; ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      cs.unary(static_cast<std::size_t>(t), p) = uniform01(rng);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) cs.pairwise(i, j) = uniform01(rng);
  }
  return cs;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const int l = static_cast<int>(state.range(1));
  const ChainScores cs = make_scores(m, l, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_backward(cs));
  }
}
BENCHMARK(BM_ForwardBackward)->Args({25, 5})->Args({25, 13})->Args({100, 8});

void BM_Viterbi(benchmark::State& state) {
  const ChainScores cs = make_scores(25, static_cast<int>(state.range(0)), 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(viterbi(cs));
  }
}
BENCHMARK(BM_Viterbi)->Arg(5)->Arg(13);

void BM_ListViterbiTopK(benchmark::State& state) {
  const ChainScores cs = make_scores(25, 6, 13);
  const auto k = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(list_viterbi(cs, k, SequencePredicate::path()));
  }
}
BENCHMARK(BM_ListViterbiTopK)->Arg(1)->Arg(10)->Arg(100);

void BM_BestPathExact(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const int l = static_cast<int>(state.range(1));
  const ChainScores cs = make_scores(m, l, 17);
  for (auto _ : state) {
    benchmark::DoNotOptimize(best_path_exact(cs));
  }
}
BENCHMARK(BM_BestPathExact)->Args({12, 6})->Args({16, 8})->Args({20, 10});

void BM_LossAugment(benchmark::State& state) {
  const ChainScores cs = make_scores(25, 8, 19);
  const Trajectory truth{0, 1, 2, 3, 4, 5, 6, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_augment(cs, truth));
  }
}
BENCHMARK(BM_LossAugment);

}  // namespace
