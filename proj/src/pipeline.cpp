#include "agqr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "agqr/bridge.hpp"
#include "agqr/error.hpp"
#include "agqr/tokenize.hpp"

namespace agqr {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::size_t kTraceTopIds = 10;

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> argv;
  for (std::string part; in >> part;) argv.push_back(part);
  return argv;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

Pipeline::Pipeline(RunConfig config, const Retriever& retriever, Rewriter* rewriter, ResponseCache* cache)
    : config_(std::move(config)), retriever_(retriever), rewriter_(rewriter), cache_(cache) {
  config_.validate();
}

QueryTrace Pipeline::run_query(const Query& query, MethodTag method, RankedList* final_ranking) const {
  QueryTrace t;
  t.query_id = query.id;
  t.method = method;
  t.original = query.text;
  t.tokens = query.tokens;
  t.normalization = config_.normalization;

  const std::size_t depth = config_.depth();
  RankedList original = retriever_.search(query, depth);
  RankedList final_list = original;

  std::optional<RewrittenQuery> rewritten;
  if (method == MethodTag::Tkn || method == MethodTag::GLLM) {
    const AttributedQuery aq =
        attribute_query(query, original, config_.k_docs, config_.steps, retriever_, config_.normalization);
    t.attributed = true;
    t.attribution_docs = aq.doc_ids;
    t.raw = aq.raw;
    t.normalized = aq.normalized;
    t.degenerate = aq.degenerate;
    t.no_evidence = aq.no_evidence;
    if (method == MethodTag::Tkn) {
      rewritten = select_top_tokens(query, aq.normalized);
    } else {
      PromptRequest prompt = build_guided_prompt(query, aq.normalized, config_.llm_model);
      prompt.temperature = config_.llm_temperature;
      prompt.max_tokens = config_.llm_max_tokens;
      t.prompt_hash = prompt.hash;
      if (!rewriter_) throw Error("GLLM needs a rewriter");
      try {
        rewritten = rewrite(prompt, method, *rewriter_, cache_);
      } catch (const RewriteError& e) {
        t.error = e.what();
      }
    }
  } else if (method == MethodTag::LLM) {
    PromptRequest prompt = build_plain_prompt(query, config_.llm_model);
    prompt.temperature = config_.llm_temperature;
    prompt.max_tokens = config_.llm_max_tokens;
    t.prompt_hash = prompt.hash;
    if (!rewriter_) throw Error("LLM needs a rewriter");
    try {
      rewritten = rewrite(prompt, method, *rewriter_, cache_);
    } catch (const RewriteError& e) {
      t.error = e.what();
    }
  }

  if (rewritten) {
    t.rewrite = rewritten->text;
    t.rewrite_tokens = rewritten->tokens;
    t.fallback = rewritten->fallback;
    t.cache_hit = rewritten->cache_hit;
    const Query issued{query.id, rewritten->text, rewritten->tokens};
    final_list = retriever_.search(issued, depth);
  } else {
    t.rewrite = query.text;
    t.rewrite_tokens = query.tokens;
  }
  t.top_ids = final_list.head_ids(kTraceTopIds);
  if (final_ranking) *final_ranking = std::move(final_list);
  return t;
}

MethodRun Pipeline::run_method(std::span<const Query> queries, MethodTag method) const {
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::vector<QueryTrace> traces(queries.size());
  std::vector<RankedList> rankings(queries.size());
  std::vector<std::exception_ptr> errors(queries.size());

#pragma omp parallel for schedule(dynamic) num_threads(config_.concurrency)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      traces[i] = run_query(queries[i], method, &rankings[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MethodRun run;
  run.result.method = std::string(to_string(method));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    rankings[i].query_id = queries[i].id;
    run.result.rankings[queries[i].id] = std::move(rankings[i]);
  }
  run.traces = std::move(traces);
  return run;
}

std::string trace_to_json(const QueryTrace& t) {
  ojson j;
  j["query_id"] = t.query_id;
  j["method"] = std::string(to_string(t.method));
  j["original"] = t.original;
  j["tokens"] = t.tokens;
  if (t.attributed) {
    j["attribution"] = ojson{{"docs", t.attribution_docs},
                             {"raw", t.raw},
                             {"normalized", t.normalized},
                             {"normalization", std::string(to_string(t.normalization))},
                             {"degenerate", t.degenerate},
                             {"no_evidence", t.no_evidence}};
  }
  if (!t.prompt_hash.empty()) j["prompt_hash"] = t.prompt_hash;
  j["rewrite"] = t.rewrite;
  j["rewrite_tokens"] = t.rewrite_tokens;
  j["fallback"] = t.fallback;
  j["cache_hit"] = t.cache_hit;
  j["error"] = t.error.empty() ? ojson(nullptr) : ojson(t.error);
  j["top"] = t.top_ids;
  return j.dump();
}

void write_traces(const std::filesystem::path& path, std::span<const QueryTrace> traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const QueryTrace& t : traces) out << trace_to_json(t) << '\n';
}

void write_trec_run(const std::filesystem::path& path, const RunResult& run) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  char score[64];
  for (const auto& [qid, ranked] : run.rankings) {
    for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
      std::snprintf(score, sizeof score, "%.17g", ranked.entries[r].score);
      out << qid << " Q0 " << ranked.entries[r].doc_id << ' ' << (r + 1) << ' ' << score << ' ' << run.method << '\n';
    }
  }
}

void write_method_outputs(const std::filesystem::path& dir, const RunConfig& config, const MethodRun& run,
                          const EvalReport& report) {
  std::filesystem::create_directories(dir);
  write_traces(dir / "trace.jsonl", run.traces);
  write_trec_run(dir / "run.trec", run.result);
  write_per_query_jsonl(dir / "per_query.jsonl", report);
  std::vector<std::string> preamble{"method=" + report.method};
  for (const auto& [key, value] : config.resolved()) {
    if (key == "output_dir") continue;
    preamble.push_back("config " + key + "=" + value);
  }
  write_report_tsv(dir / "report.tsv", report, preamble);
}

std::size_t Comparison::cell_count() const { return values.size() * methods.size(); }

Comparison compare(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error("nothing to compare");
  const EvalReport& first = reports.front();
  std::set<std::string> base_ids;
  for (const auto& [qid, _] : first.per_query) base_ids.insert(qid);

  Comparison c;
  c.cutoffs = first.cutoffs;
  for (const EvalReport& r : reports) {
    if (r.cutoffs != first.cutoffs)
      throw Error("report " + r.method + " uses different cutoffs than " + first.method);
    std::set<std::string> ids;
    for (const auto& [qid, _] : r.per_query) ids.insert(qid);
    if (ids != base_ids) {
      std::vector<std::string> diff;
      std::set_symmetric_difference(base_ids.begin(), base_ids.end(), ids.begin(), ids.end(),
                                    std::back_inserter(diff));
      std::string msg = "reports " + first.method + " and " + r.method + " cover different queries:";
      for (const std::string& q : diff) msg += " " + q;
      throw Error(msg);
    }
    c.methods.push_back(r.method);
  }
  for (Metric m : kAllMetrics) {
    for (std::size_t k : c.cutoffs) {
      const MetricKey key{m, k};
      std::vector<double>& row = c.values[key];
      for (const EvalReport& r : reports) {
        const auto it = r.macro.find(key);
        row.push_back(it == r.macro.end() ? 0.0 : it->second);
      }
      const double top = *std::max_element(row.begin(), row.end());
      std::vector<bool>& flags = c.best[key];
      for (double v : row) flags.push_back(v == top);
    }
  }
  return c;
}

std::string render_comparison_tsv(const Comparison& c) {
  std::ostringstream out;
  out << "metric\tcutoff\tmethod\tvalue\tbest\n";
  for (const auto& [key, row] : c.values) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << to_string(key.metric) << '\t' << key.cutoff << '\t' << c.methods[i] << '\t' << fixed(row[i], 6) << '\t'
          << (c.best.at(key)[i] ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::string render_comparison_text(const Comparison& c) {
  std::ostringstream out;
  constexpr int kCell = 8;
  out << std::left << std::setw(6) << "k";
  for (Metric m : kAllMetrics) {
    std::string label(to_string(m));
    for (char& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    out << "| " << std::setw(static_cast<int>(c.methods.size()) * kCell) << label;
  }
  out << '\n' << std::setw(6) << "";
  for (std::size_t g = 0; g < std::size(kAllMetrics); ++g) {
    out << "| ";
    for (const std::string& name : c.methods) out << std::setw(kCell) << name;
  }
  out << '\n';
  for (std::size_t k : c.cutoffs) {
    out << std::setw(6) << ("@" + std::to_string(k));
    for (Metric m : kAllMetrics) {
      out << "| ";
      const MetricKey key{m, k};
      const auto& row = c.values.at(key);
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::string cell = fixed(row[i], 3);
        if (c.best.at(key)[i]) cell += "*";
        out << std::setw(kCell) << cell;
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string attribution_table(const AttributedQuery& aq) {
  std::ostringstream out;
  out << "query " << aq.query.id << ": " << aq.query.text << '\n';
  out << "documents (" << aq.k_used << "):";
  for (const std::string& d : aq.doc_ids) out << ' ' << d;
  if (aq.no_evidence) out << " [no evidence: uniform scores]";
  out << '\n';
  std::size_t width = 5;
  for (const std::string& t : aq.query.tokens) width = std::max(width, t.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "token" << std::right << std::setw(14) << "raw"
      << std::setw(14) << to_string(aq.scheme) << '\n';
  for (std::size_t i = 0; i < aq.query.tokens.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << aq.query.tokens[i] << std::right << std::setw(14)
        << fixed(aq.raw[i], 6) << std::setw(14) << fixed(aq.normalized[i], 3) << '\n';
  }
  if (aq.degenerate) out << "(normalization degenerate: raw scores shown)\n";
  out << "Tokens (attrib.): ";
  for (std::size_t i = 0; i < aq.query.tokens.size(); ++i) {
    if (i) out << ", ";
    out << aq.query.tokens[i] << " (" << fixed(aq.normalized[i], 3) << ")";
  }
  out << '\n';
  return out.str();
}

std::unique_ptr<Retriever> make_retriever(const RunConfig& config, const Corpus* corpus) {
  if (config.retriever_kind == "bridge") return std::make_unique<BridgeRetriever>(split_command(config.bridge_command));
  RetrieverSpec spec{config.retriever_kind, config.seed, config.dim, config.expansions};
  if (!config.index.empty() && std::filesystem::exists(config.index)) {
    auto [snap_spec, stats] = read_index(config.index);
    snap_spec.kind = config.retriever_kind;
    return make_reference_retriever(snap_spec, stats);
  }
  if (!corpus) throw Error("no corpus and no index snapshot to build a retriever from");
  return make_reference_retriever(spec, CollectionStats::of(*corpus));
}

std::unique_ptr<Rewriter> make_rewriter(const RunConfig& config) {
  if (config.rewriter_kind == "identity") return std::make_unique<IdentityRewriter>();
  if (config.rewriter_kind == "scripted")
    return std::make_unique<ScriptedRewriter>(ScriptedRewriter::from_file(config.rewrite_script));
  if (config.rewriter_kind == "live") {
    ChatClientOptions opts;
    opts.endpoint = config.llm_endpoint;
    opts.model = config.llm_model;
    if (const char* key = std::getenv(config.llm_api_key_env.c_str())) opts.api_key = key;
    opts.attempts = config.llm_attempts;
    opts.initial_backoff = std::chrono::milliseconds(config.llm_backoff_ms);
    opts.max_in_flight = config.concurrency;
    return std::make_unique<ChatCompletionsClient>(std::move(opts));
  }
  throw Error("unknown rewriter kind '" + config.rewriter_kind + "'");
}

}  // namespace agqr
