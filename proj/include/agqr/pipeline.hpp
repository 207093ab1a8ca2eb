#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "agqr/attribution.hpp"
#include "agqr/config.hpp"
#include "agqr/corpus.hpp"
#include "agqr/eval.hpp"
#include "agqr/retriever.hpp"
#include "agqr/rewrite.hpp"

namespace agqr {

/// Everything recorded about one query under one method.
struct QueryTrace {
  std::string query_id;
  MethodTag method = MethodTag::Org;
  std::string original;
  std::vector<std::string> tokens;

  bool attributed = false;
  std::vector<std::string> attribution_docs;
  std::vector<double> raw;
  std::vector<double> normalized;
  Normalization normalization = Normalization::l1;
  bool degenerate = false;
  bool no_evidence = false;

  std::string prompt_hash;
  std::string rewrite;
  std::vector<std::string> rewrite_tokens;
  bool fallback = false;
  bool cache_hit = false;
  /// Set when the rewrite failed and the Org ranking was reported instead.
  std::string error;

  std::vector<std::string> top_ids;  // head of the final ranking
};

struct MethodRun {
  RunResult result;
  std::vector<QueryTrace> traces;  // in query order
};

/// The one-shot loop: search, attribute over the head of the original
/// ranking, rewrite once, search again with the same retriever.
class Pipeline {
 public:
  /// `rewriter` is required for LLM and GLLM; `cache` is optional.
  Pipeline(RunConfig config, const Retriever& retriever, Rewriter* rewriter, ResponseCache* cache);

  const RunConfig& config() const noexcept { return config_; }

  /// Runs one method over all queries on a worker pool of `concurrency`
  /// threads. Results are collected by query position, so output order does
  /// not depend on scheduling. A rewriter failure degrades that query to its
  /// Org ranking with `error` set; any other failure is rethrown.
  MethodRun run_method(std::span<const Query> queries, MethodTag method) const;

  /// Same loop for a single query.
  QueryTrace run_query(const Query& query, MethodTag method, RankedList* final_ranking) const;

 private:
  RunConfig config_;
  const Retriever& retriever_;
  Rewriter* rewriter_;
  ResponseCache* cache_;
};

std::string trace_to_json(const QueryTrace& trace);
void write_traces(const std::filesystem::path& path, std::span<const QueryTrace> traces);
/// TREC run format: qid Q0 docid rank score tag.
void write_trec_run(const std::filesystem::path& path, const RunResult& run);

/// Writes trace.jsonl, run.trec, per_query.jsonl and report.tsv (with the
/// resolved config embedded as comment lines) into `dir`.
void write_method_outputs(const std::filesystem::path& dir, const RunConfig& config, const MethodRun& run,
                          const EvalReport& report);

/// Metric x cutoff x method grid of macro means.
struct Comparison {
  std::vector<std::string> methods;
  std::vector<std::size_t> cutoffs;
  /// values[{metric, cutoff}][method index]
  std::map<MetricKey, std::vector<double>> values;
  /// best[{metric, cutoff}][method index]: the maximum of the row (ties all flagged).
  std::map<MetricKey, std::vector<bool>> best;

  std::size_t cell_count() const;
};

/// Throws agqr::Error when reports differ in cutoffs or evaluated query sets;
/// the message lists the symmetric difference of the query ids.
Comparison compare(std::span<const EvalReport> reports);
std::string render_comparison_tsv(const Comparison& c);
/// Aligned text table; the best value of each (metric, cutoff) carries a '*'.
std::string render_comparison_text(const Comparison& c);

/// Token / raw / normalized table plus a one-line `token (score), ...` row.
std::string attribution_table(const AttributedQuery& aq);

/// Builds the retriever named by the config: the bridge process, a reference
/// scorer from `config.index`, or a reference scorer over `corpus`.
std::unique_ptr<Retriever> make_retriever(const RunConfig& config, const Corpus* corpus);
/// Builds the rewriter named by the config (identity, scripted or live).
std::unique_ptr<Rewriter> make_rewriter(const RunConfig& config);

}  // namespace agqr
