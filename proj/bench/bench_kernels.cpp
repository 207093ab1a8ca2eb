// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS to vary the team.
#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/kernels.hpp"
#include "agqr/retriever.hpp"

namespace k = agqr::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  return v;
}

template <bool Parallel>
void BM_DenseScores(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 64;
  const auto m = random_values(n * dim, 1), q = random_values(dim, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) k::dense_scores(m, dim, q, out);
    else k::serial::dense_scores(m, dim, q, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

struct SparseInput {
  std::vector<k::PostingList> postings;
  std::vector<k::WeightedTerm> terms;
};

SparseInput sparse_input(std::size_t n_docs) {
  std::mt19937_64 rng(3);
  SparseInput in;
  const std::size_t n_terms = 2000;
  in.postings.resize(n_terms);
  for (std::uint32_t d = 0; d < n_docs; ++d)
    for (int i = 0; i < 40; ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const auto t = static_cast<std::size_t>(u * u * n_terms);
      auto& pl = in.postings[t];
      if (pl.empty() || pl.back().doc != d) pl.push_back({d, 1.0});
      else pl.back().tf += 1.0;
    }
  for (std::uint32_t t = 0; t < 24; ++t) in.terms.push_back({t * 7, 0.5 + t * 0.1});
  return in;
}

template <bool Parallel>
void BM_SparseScores(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const SparseInput in = sparse_input(n);
  std::vector<double> out(n);
  for (auto _ : state) {
    std::fill(out.begin(), out.end(), 0.0);
    if constexpr (Parallel) k::sparse_scores(in.postings, in.terms, out);
    else k::serial::sparse_scores(in.postings, in.terms, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

agqr::Corpus bench_corpus() {
  std::mt19937_64 rng(4);
  std::vector<agqr::Document> docs;
  for (int d = 0; d < 2000; ++d) {
    std::string text;
    for (int i = 0; i < 60; ++i) text += " w" + std::to_string(rng() % 3000);
    docs.push_back({"doc" + std::to_string(d), "", text});
  }
  return agqr::Corpus::from_documents(std::move(docs));
}

template <bool Parallel, bool Dense>
void BM_IntegratedGradients(benchmark::State& state) {
  static const agqr::Corpus corpus = bench_corpus();
  static const auto stats = agqr::CollectionStats::of(corpus);
  static const agqr::DenseModel dense = agqr::DenseModel::build(stats, {1, 64});
  static const agqr::SparseModel sparse = agqr::SparseModel::build(stats, {1, 3});
  const agqr::DifferentiableScorer& scorer = Dense ? static_cast<const agqr::DifferentiableScorer&>(dense) : sparse;
  const std::vector<std::string> tokens{"w1", "w17", "w256", "w999", "w2048", "w7"};
  std::vector<std::string> ids;
  for (int i = 0; i < 5; ++i) ids.push_back("doc" + std::to_string(i * 37));
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto r = Parallel ? k::integrated_gradients(scorer, tokens, ids, steps)
                      : k::serial::integrated_gradients(scorer, tokens, ids, steps);
    benchmark::DoNotOptimize(r.data());
  }
}

}  // namespace

BENCHMARK(BM_DenseScores<false>)->Name("dense_scores/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_DenseScores<true>)->Name("dense_scores/omp")->Arg(10000)->Arg(100000);
BENCHMARK(BM_SparseScores<false>)->Name("sparse_scores/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_SparseScores<true>)->Name("sparse_scores/omp")->Arg(10000)->Arg(100000);
BENCHMARK(BM_IntegratedGradients<false, false>)->Name("ig_sparse/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_IntegratedGradients<true, false>)->Name("ig_sparse/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_IntegratedGradients<false, true>)->Name("ig_dense/serial")->Arg(64);
BENCHMARK(BM_IntegratedGradients<true, true>)->Name("ig_dense/omp")->Arg(64);

BENCHMARK_MAIN();
