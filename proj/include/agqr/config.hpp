#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "agqr/attribution.hpp"
#include "agqr/rewrite.hpp"

namespace agqr {

/// Resolved run configuration. Read from a flat `key = value` file (blank
/// lines and `#` comments ignored) and overridable key by key.
///
/// Keys:
///   corpus, queries, qrels, index            paths; `index` is optional
///   retriever.kind                           dense | sparse | bridge
///   retriever.seed, retriever.dim, retriever.expansions
///   bridge.command                           space-separated argv
///   attribution.k_docs, attribution.steps
///   attribution.baseline                     zero (only supported value)
///   attribution.normalization                none | l1 | minmax | zscore
///   rewriter.kind                            identity | scripted | live
///   rewriter.script                          JSON file for `scripted`
///   llm.endpoint, llm.model, llm.temperature, llm.max_tokens
///   llm.api_key_env                          env var holding the credential
///   llm.cache_dir, llm.attempts, llm.backoff_ms
///   methods                                  comma list of Org, Tkn, LLM, GLLM
///   cutoffs                                  comma list, e.g. 1,3,5,10,100
///   output_dir, concurrency
struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path queries;
  std::filesystem::path qrels;
  std::filesystem::path index;

  std::string retriever_kind = "sparse";
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t expansions = 3;
  std::string bridge_command;

  std::size_t k_docs = 5;
  int steps = 64;
  std::string baseline = "zero";
  Normalization normalization = Normalization::l1;

  std::string rewriter_kind = "identity";
  std::filesystem::path rewrite_script;
  std::string llm_endpoint;
  std::string llm_model;
  double llm_temperature = kRewriteTemperature;
  int llm_max_tokens = kRewriteMaxTokens;
  std::string llm_api_key_env = "AGQR_LLM_API_KEY";
  std::filesystem::path llm_cache_dir;
  int llm_attempts = 3;
  int llm_backoff_ms = 1000;

  std::vector<MethodTag> methods{MethodTag::Org, MethodTag::Tkn, MethodTag::LLM, MethodTag::GLLM};
  std::vector<std::size_t> cutoffs{1, 3, 5, 10, 100};
  std::filesystem::path output_dir = "runs";
  int concurrency = 4;

  static RunConfig from_file(const std::filesystem::path& path);

  /// Applies one `key = value` setting. Throws agqr::Error on an unknown key
  /// or an unparseable value.
  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` string.
  void apply_override(const std::string& assignment);

  /// Throws agqr::Error when an invariant is violated (k_docs >= 1, steps >= 1,
  /// non-empty ascending cutoffs, known kinds).
  void validate() const;

  std::size_t depth() const { return cutoffs.back(); }

  /// Every key with its resolved value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> resolved() const;
};

}  // namespace agqr
