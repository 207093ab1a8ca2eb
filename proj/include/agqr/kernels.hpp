#pragma once

// Data-parallel inner loops of the engine. Each kernel has an OpenMP version
// (agqr::kernels) and a plain serial reference (agqr::kernels::serial) kept
// for testing and benchmarking. For every input both produce bit-identical
// output: per-element arithmetic is the same expression evaluated in the same
// order, only the distribution of elements across threads differs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agqr/types.hpp"

namespace agqr {
class DifferentiableScorer;
}

namespace agqr::kernels {

struct Posting {
  std::uint32_t doc = 0;
  double tf = 0.0;
};
/// Postings of one term, sorted by ascending doc index.
using PostingList = std::vector<Posting>;

/// A query-side term with its precomputed multiplier (idf * saturation).
struct WeightedTerm {
  std::uint32_t term = 0;
  double weight = 0.0;
};

/// out[d] = <doc_matrix row d, query>. doc_matrix is row-major, `dim` wide.
void dense_scores(std::span<const double> doc_matrix, std::size_t dim, std::span<const double> query,
                  std::span<double> out);

/// out[d] = sum over terms (in the given order) of weight * tf_term(d).
/// `out` must be zero-initialised by the caller.
void sparse_scores(std::span<const PostingList> postings, std::span<const WeightedTerm> terms,
                   std::span<double> out);

/// Integrated gradients of `tokens` against each document.
std::vector<AttributionVector> integrated_gradients(const DifferentiableScorer& scorer,
                                                    std::span<const std::string> tokens,
                                                    std::span<const std::string> doc_ids, int steps);

/// The k best (score, id) pairs under the ranking rule. With `positive_only`,
/// documents scoring <= 0 are skipped.
std::vector<ScoredDoc> top_k(std::span<const double> scores, std::span<const std::string> ids,
                             std::size_t k, bool positive_only);

namespace serial {

void dense_scores(std::span<const double> doc_matrix, std::size_t dim, std::span<const double> query,
                  std::span<double> out);
void sparse_scores(std::span<const PostingList> postings, std::span<const WeightedTerm> terms,
                   std::span<double> out);
std::vector<AttributionVector> integrated_gradients(const DifferentiableScorer& scorer,
                                                    std::span<const std::string> tokens,
                                                    std::span<const std::string> doc_ids, int steps);

}  // namespace serial

}  // namespace agqr::kernels
