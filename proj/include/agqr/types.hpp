#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace agqr {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Descending by score, ties broken by ascending doc id, no duplicate ids.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  /// Ids of the first min(limit, size()) entries.
  std::vector<std::string> head_ids(std::size_t limit) const;
};

/// Orders by the ranking rule: higher score first, then smaller doc id.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

/// A point in a scorer's query-side input space: `tokens` rows of `width`
/// values each, row-major. Dense scorers use one embedding row per token
/// (width = dimension); the sparse scorer uses one weight per token (width 1).
struct InputPoint {
  std::size_t tokens = 0;
  std::size_t width = 0;
  std::vector<double> values;

  InputPoint() = default;
  InputPoint(std::size_t n, std::size_t w, double fill = 0.0) : tokens(n), width(w), values(n * w, fill) {}

  double& at(std::size_t token, std::size_t j) { return values[token * width + j]; }
  double at(std::size_t token, std::size_t j) const { return values[token * width + j]; }
  bool same_shape(const InputPoint& o) const { return tokens == o.tokens && width == o.width; }
};

/// Token attributions of one query against one document.
struct AttributionVector {
  std::string doc_id;
  std::vector<double> values;  // one per query token, in query order
  int steps = 0;
  std::string baseline = "zero";
  /// sum(values) - (s(q,d) - s(baseline,d)); NaN when not measured.
  double completeness_residual = 0.0;
};

}  // namespace agqr
