#include "s2s/s2s.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace s2s;

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_mat(32, n, 1);
    const auto b = random_mat(n, 4 * n, 2);
    Mat c(32, 4 * n);
    for (auto _ : state) {
        kernels::gemm_acc(a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 32 * static_cast<std::int64_t>(n * 4 * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_LstmStep(benchmark::State& state) {
    const auto corpus = generate_sarcasm_corpus(100, 1);
    const auto vocab = build_vocab(corpus);
    const auto m = init_model(vocab, 64, 128, 1);
    const std::vector<double> x(64, 0.1), h(128, 0.0), c(128, 0.0);
    for (auto _ : state) benchmark::DoNotOptimize(lstm_step(x, h, c, m.enc));
}
BENCHMARK(BM_LstmStep);

void BM_TrainBatch(benchmark::State& state) {
    const auto corpus = generate_sarcasm_corpus(300, 42);
    const auto vocab = build_vocab(corpus);
    const auto m = init_model(vocab, 64, 128, 42);
    const auto batches = make_batches(corpus, vocab, 32, 42);
    auto grads = zeros_like(m);
    for (auto _ : state) benchmark::DoNotOptimize(forward_backward(m, batches.front(), &grads));
}
BENCHMARK(BM_TrainBatch)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
    const auto corpus = generate_sarcasm_corpus(300, 42);
    const auto vocab = build_vocab(corpus);
    const auto m = init_model(vocab, 64, 128, 42);
    for (auto _ : state) benchmark::DoNotOptimize(greedy_decode(corpus.pairs.front().question, m, vocab));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
