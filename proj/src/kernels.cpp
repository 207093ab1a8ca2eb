#include "agqr/kernels.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include "agqr/attribution.hpp"
#include "agqr/retriever.hpp"

namespace agqr::kernels {
namespace {

// Documents per block in the doc-partitioned sparse kernel.
constexpr std::size_t kSparseBlock = 2048;

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

}  // namespace

void dense_scores(std::span<const double> doc_matrix, std::size_t dim, std::span<const double> query,
                  std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  const double* m = doc_matrix.data();
  const double* q = query.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t d = 0; d < n; ++d) {
    out[d] = dot(m + d * dim, q, dim);
  }
}

void sparse_scores(std::span<const PostingList> postings, std::span<const WeightedTerm> terms,
                   std::span<double> out) {
  const std::size_t n_docs = out.size();
  const auto n_blocks = static_cast<std::ptrdiff_t>((n_docs + kSparseBlock - 1) / kSparseBlock);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < n_blocks; ++b) {
    const auto lo = static_cast<std::uint32_t>(b * kSparseBlock);
    const auto hi = static_cast<std::uint32_t>(std::min(n_docs, (b + 1) * kSparseBlock));
    for (const WeightedTerm& t : terms) {
      const PostingList& list = postings[t.term];
      auto it = std::lower_bound(list.begin(), list.end(), lo,
                                 [](const Posting& p, std::uint32_t doc) { return p.doc < doc; });
      for (; it != list.end() && it->doc < hi; ++it) out[it->doc] += t.weight * it->tf;
    }
  }
}

std::vector<AttributionVector> integrated_gradients(const DifferentiableScorer& scorer,
                                                    std::span<const std::string> tokens,
                                                    std::span<const std::string> doc_ids, int steps) {
  std::vector<AttributionVector> out(doc_ids.size());
  std::vector<std::exception_ptr> errors(doc_ids.size());
  const auto n = static_cast<std::ptrdiff_t>(doc_ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = ig_single(tokens, doc_ids[i], steps, scorer);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  // First failure by rank position, as the serial path would report it.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<ScoredDoc> top_k(std::span<const double> scores, std::span<const std::string> ids,
                             std::size_t k, bool positive_only) {
  std::vector<std::uint32_t> order;
  order.reserve(scores.size());
  for (std::uint32_t d = 0; d < scores.size(); ++d) {
    if (!positive_only || scores[d] > 0.0) order.push_back(d);
  }
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
  std::vector<ScoredDoc> result;
  result.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) result.push_back({ids[order[r]], scores[order[r]]});
  return result;
}

namespace serial {

void dense_scores(std::span<const double> doc_matrix, std::size_t dim, std::span<const double> query,
                  std::span<double> out) {
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = dot(doc_matrix.data() + d * dim, query.data(), dim);
}

void sparse_scores(std::span<const PostingList> postings, std::span<const WeightedTerm> terms,
                   std::span<double> out) {
  for (const WeightedTerm& t : terms) {
    for (const Posting& p : postings[t.term]) out[p.doc] += t.weight * p.tf;
  }
}

std::vector<AttributionVector> integrated_gradients(const DifferentiableScorer& scorer,
                                                    std::span<const std::string> tokens,
                                                    std::span<const std::string> doc_ids, int steps) {
  std::vector<AttributionVector> out;
  out.reserve(doc_ids.size());
  for (const std::string& id : doc_ids) out.push_back(ig_single(tokens, id, steps, scorer));
  return out;
}

}  // namespace serial
}  // namespace agqr::kernels
