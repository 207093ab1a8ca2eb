#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/types.hpp"

namespace agqr {

enum class Metric { ndcg, map, precision };

inline constexpr Metric kAllMetrics[] = {Metric::ndcg, Metric::map, Metric::precision};

std::string_view to_string(Metric m);
/// Accepts "ndcg", "map", "p" / "precision" (case-insensitive).
Metric parse_metric(std::string_view name);

/// Relevant documents in the top k over a fixed denominator k.
double precision_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k);

/// Linear-gain nDCG with log2(rank + 1) discount. Returns 0 when the row has
/// no positive grade (callers exclude such queries).
double ndcg_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k);

/// Sum of precision at each relevant rank <= k, divided by the total number of
/// relevant documents in the row (map_cut semantics).
double map_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k);

double metric_at_k(Metric m, std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k);

struct RunResult {
  std::string method;
  std::map<std::string, RankedList> rankings;  // by query id
};

struct MetricKey {
  Metric metric;
  std::size_t cutoff;

  auto operator<=>(const MetricKey&) const = default;
};

struct EvalReport {
  std::string method;
  std::vector<std::size_t> cutoffs;
  /// query id -> (metric, cutoff) -> value, for evaluated queries only.
  std::map<std::string, std::map<MetricKey, double>> per_query;
  std::map<MetricKey, double> macro;
  std::size_t evaluated = 0;
  /// Queries in the run with no positive judgment.
  std::vector<std::string> excluded;
};

/// Per-query metrics for every (metric, cutoff), then the arithmetic mean over
/// queries with at least one relevant document. Throws on empty cutoffs.
EvalReport evaluate_run(const RunResult& run, const Qrels& qrels, std::vector<std::size_t> cutoffs);

/// One JSON object per evaluated query: {"query_id", "method", "metrics": {"ndcg@10": ...}}.
void write_per_query_jsonl(const std::filesystem::path& path, const EvalReport& report);
/// Aggregate TSV: header `method metric cutoff value`, one row per cell.
/// `preamble` lines are written first, each prefixed with "# ".
void write_report_tsv(const std::filesystem::path& path, const EvalReport& report,
                      const std::vector<std::string>& preamble = {});
/// Reads back a report written by the two functions above.
EvalReport read_report(const std::filesystem::path& report_tsv, const std::filesystem::path& per_query_jsonl);

}  // namespace agqr
