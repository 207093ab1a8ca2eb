#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/types.hpp"

namespace agqr {

class DifferentiableScorer;
class Retriever;

enum class Normalization { none, l1, minmax, zscore };

/// Throws agqr::Error for names other than none, l1, minmax, zscore.
Normalization parse_normalization(std::string_view name);
std::string_view to_string(Normalization scheme);

/// Integrated gradients of s(q, d) from the scorer's baseline to the query's
/// input point, by the midpoint rule with `steps` intervals:
///
///   IG_i = sum_j (x_ij - x'_ij) * (1/m) * sum_{s=1..m} dS/dx_ij at x' + ((s - 0.5)/m)(x - x')
///
/// The per-token reduction over input dimensions is a signed sum, so the
/// entries add up to s(x) - s(x') up to quadrature error.
/// Throws agqr::Error when steps < 1 or the token list is empty.
AttributionVector ig_single(std::span<const std::string> tokens, std::string_view doc_id, int steps,
                            const DifferentiableScorer& scorer);

/// Elementwise mean of exactly `k` equal-length vectors, summed in the order given.
std::vector<double> aggregate(std::span<const AttributionVector> per_doc, std::size_t k);

struct NormalizedScores {
  std::vector<double> values;
  /// Set when the scheme's denominator vanished and `values` are the raw scores.
  bool degenerate = false;
};

/// Per-query normalization. l1 divides by sum |a_j| (sign preserving);
/// minmax maps to [0, 1]; zscore uses the population standard deviation.
NormalizedScores normalize(std::span<const double> raw, Normalization scheme);

struct AttributedQuery {
  Query query;
  std::vector<double> raw;
  std::vector<double> normalized;
  Normalization scheme = Normalization::l1;
  bool degenerate = false;
  /// The ranked list was empty; raw scores are uniform 1/n.
  bool no_evidence = false;
  std::size_t k_used = 0;
  std::vector<std::string> doc_ids;
  std::vector<AttributionVector> per_doc;
};

/// Attributes the query against the head of `ranked` (at most k documents),
/// averages the per-document vectors and normalizes the result.
AttributedQuery attribute_query(const Query& query, const RankedList& ranked, std::size_t k, int steps,
                                const Retriever& retriever, Normalization scheme);

}  // namespace agqr
