#include "agqr/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "agqr/error.hpp"
#include "agqr/retriever.hpp"

namespace agqr {

Normalization parse_normalization(std::string_view name) {
  if (name == "none") return Normalization::none;
  if (name == "l1") return Normalization::l1;
  if (name == "minmax") return Normalization::minmax;
  if (name == "zscore") return Normalization::zscore;
  throw Error("unknown normalization scheme '" + std::string(name) + "'");
}

std::string_view to_string(Normalization scheme) {
  switch (scheme) {
    case Normalization::none: return "none";
    case Normalization::l1: return "l1";
    case Normalization::minmax: return "minmax";
    case Normalization::zscore: return "zscore";
  }
  return "none";
}

AttributionVector ig_single(std::span<const std::string> tokens, std::string_view doc_id, int steps,
                            const DifferentiableScorer& scorer) {
  if (steps < 1) throw Error("integrated gradients needs at least one step");
  if (tokens.empty()) throw Error("integrated gradients of a query with no tokens");

  const InputPoint input = scorer.input_of(tokens);
  const InputPoint baseline = scorer.baseline_of(tokens);
  if (!input.same_shape(baseline) || input.tokens != tokens.size())
    throw Error("scorer returned input and baseline of different shapes");

  InputPoint grad_sum(input.tokens, input.width);
  InputPoint point(input.tokens, input.width);
  for (int s = 1; s <= steps; ++s) {
    const double alpha = (static_cast<double>(s) - 0.5) / steps;
    for (std::size_t j = 0; j < point.values.size(); ++j)
      point.values[j] = baseline.values[j] + alpha * (input.values[j] - baseline.values[j]);
    const InputPoint g = scorer.gradient(tokens, point, doc_id);
    for (std::size_t j = 0; j < grad_sum.values.size(); ++j) grad_sum.values[j] += g.values[j];
  }

  AttributionVector out;
  out.doc_id = std::string(doc_id);
  out.steps = steps;
  out.values.assign(input.tokens, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < input.tokens; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < input.width; ++j)
      acc += (input.at(i, j) - baseline.at(i, j)) * (grad_sum.at(i, j) / steps);
    out.values[i] = acc;
    total += acc;
  }
  out.completeness_residual =
      total - (scorer.score_at(tokens, input, doc_id) - scorer.score_at(tokens, baseline, doc_id));
  return out;
}

std::vector<double> aggregate(std::span<const AttributionVector> per_doc, std::size_t k) {
  if (k == 0) throw Error("aggregation over zero documents");
  if (per_doc.size() != k)
    throw Error("aggregation expected " + std::to_string(k) + " vectors, got " + std::to_string(per_doc.size()));
  const std::size_t n = per_doc.front().values.size();
  std::vector<double> mean(n, 0.0);
  for (const AttributionVector& v : per_doc) {
    if (v.values.size() != n) throw Error("attribution vectors differ in length");
    for (std::size_t i = 0; i < n; ++i) mean[i] += v.values[i];
  }
  for (double& m : mean) m /= static_cast<double>(k);
  return mean;
}

NormalizedScores normalize(std::span<const double> raw, Normalization scheme) {
  if (raw.empty()) throw Error("normalization of an empty score vector");
  NormalizedScores out{std::vector<double>(raw.begin(), raw.end()), false};
  switch (scheme) {
    case Normalization::none:
      break;
    case Normalization::l1: {
      double denom = 0.0;
      for (double a : raw) denom += std::abs(a);
      if (denom == 0.0) {
        out.degenerate = true;
        break;
      }
      for (double& v : out.values) v /= denom;
      break;
    }
    case Normalization::minmax: {
      const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
      const double range = *hi - *lo;
      if (range == 0.0) {
        out.degenerate = true;
        break;
      }
      const double base = *lo;
      for (double& v : out.values) v = (v - base) / range;
      break;
    }
    case Normalization::zscore: {
      double mean = 0.0;
      for (double a : raw) mean += a;
      mean /= static_cast<double>(raw.size());
      double var = 0.0;
      for (double a : raw) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(raw.size()));
      if (sd == 0.0) {
        out.degenerate = true;
        break;
      }
      for (double& v : out.values) v = (v - mean) / sd;
      break;
    }
  }
  return out;
}

AttributedQuery attribute_query(const Query& query, const RankedList& ranked, std::size_t k, int steps,
                                const Retriever& retriever, Normalization scheme) {
  if (k == 0) throw Error("attribution needs k >= 1");
  if (query.tokens.empty()) throw Error("query " + query.id + " has no tokens");

  AttributedQuery aq;
  aq.query = query;
  aq.scheme = scheme;
  aq.doc_ids = ranked.head_ids(k);
  aq.k_used = aq.doc_ids.size();
  const std::size_t n = query.tokens.size();
  if (aq.doc_ids.empty()) {
    aq.no_evidence = true;
    aq.raw.assign(n, 1.0 / static_cast<double>(n));
  } else {
    aq.per_doc = retriever.attribute(query, aq.doc_ids, steps);
    aq.raw = aggregate(aq.per_doc, aq.k_used);
  }
  NormalizedScores norm = normalize(aq.raw, scheme);
  aq.normalized = std::move(norm.values);
  aq.degenerate = norm.degenerate;
  return aq;
}

}  // namespace agqr
