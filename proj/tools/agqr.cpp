// agqr command-line driver: index, attribute, run, compare, mock-llm.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agqr/attribution.hpp"
#include "agqr/config.hpp"
#include "agqr/corpus.hpp"
#include "agqr/error.hpp"
#include "agqr/eval.hpp"
#include "agqr/pipeline.hpp"
#include "agqr/retriever.hpp"
#include "agqr/rewrite.hpp"

namespace fs = std::filesystem;

namespace {

// Flags shared by the subcommands that need a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string retriever;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "override one config key (key=value), repeatable");
    app->add_option("--retriever", retriever, "retriever kind")->check(CLI::IsMember({"dense", "sparse", "bridge"}));
  }

  agqr::RunConfig resolve() const {
    agqr::RunConfig cfg = config_path.empty() ? agqr::RunConfig{} : agqr::RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (!retriever.empty()) cfg.retriever_kind = retriever;
    cfg.validate();
    return cfg;
  }
};

// Loads the corpus unless a bridge or an index snapshot makes it unnecessary.
std::unique_ptr<agqr::Corpus> maybe_corpus(const agqr::RunConfig& cfg) {
  const bool snapshot = !cfg.index.empty() && fs::exists(cfg.index);
  if (cfg.retriever_kind == "bridge" || snapshot) return nullptr;
  if (cfg.corpus.empty()) throw agqr::Error("no corpus configured (set corpus=... or index=...)");
  return std::make_unique<agqr::Corpus>(agqr::load_corpus(cfg.corpus));
}

int cmd_index(const ConfigFlags& flags, const std::string& out) {
  agqr::RunConfig cfg = flags.resolve();
  if (cfg.retriever_kind == "bridge") throw agqr::Error("the bridge retriever has no local index");
  if (cfg.corpus.empty()) throw agqr::Error("no corpus configured");
  const agqr::Corpus corpus = agqr::load_corpus(cfg.corpus);
  const fs::path target = out.empty() ? cfg.index : fs::path(out);
  if (target.empty()) throw agqr::Error("no output path (use --out or index=...)");
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  agqr::write_index(target, {cfg.retriever_kind, cfg.seed, cfg.dim, cfg.expansions}, agqr::CollectionStats::of(corpus));
  std::printf("indexed %zu documents (%zu terms) -> %s\n", corpus.size(), corpus.vocabulary().size(),
              target.string().c_str());
  return 0;
}

int cmd_attribute(const ConfigFlags& flags, const std::string& text, const std::string& qid) {
  const agqr::RunConfig cfg = flags.resolve();
  const auto corpus = maybe_corpus(cfg);
  const auto retriever = agqr::make_retriever(cfg, corpus.get());
  const agqr::Query q = agqr::Query::from_text(qid, text);
  if (q.tokens.empty()) throw agqr::Error("query has no tokens");
  const auto ranked = retriever->search(q, cfg.k_docs);
  const auto aq = agqr::attribute_query(q, ranked, cfg.k_docs, cfg.steps, *retriever, cfg.normalization);
  std::cout << agqr::attribution_table(aq);
  std::cout << "Top tokens: " << agqr::select_top_tokens(q, aq.normalized).text << '\n';
  return 0;
}

int cmd_run(const ConfigFlags& flags, const std::vector<std::string>& methods, const std::string& output_dir) {
  agqr::RunConfig cfg = flags.resolve();
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(agqr::parse_method(m));
  }
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  cfg.validate();

  const auto corpus = maybe_corpus(cfg);
  const auto queries = agqr::load_queries(cfg.queries);
  const auto qrels = agqr::load_qrels(cfg.qrels);
  const auto retriever = agqr::make_retriever(cfg, corpus.get());

  bool needs_rewriter = false;
  for (auto m : cfg.methods) needs_rewriter |= m == agqr::MethodTag::LLM || m == agqr::MethodTag::GLLM;
  std::unique_ptr<agqr::Rewriter> rewriter = needs_rewriter ? agqr::make_rewriter(cfg) : nullptr;
  std::unique_ptr<agqr::ResponseCache> cache;
  if (needs_rewriter && !cfg.llm_cache_dir.empty()) cache = std::make_unique<agqr::ResponseCache>(cfg.llm_cache_dir);

  const agqr::Pipeline pipeline(cfg, *retriever, rewriter.get(), cache.get());
  for (agqr::MethodTag m : cfg.methods) {
    const auto run = pipeline.run_method(queries, m);
    const auto report = agqr::evaluate_run(run.result, qrels, cfg.cutoffs);
    const fs::path dir = cfg.output_dir / std::string(agqr::to_string(m));
    agqr::write_method_outputs(dir, cfg, run, report);
    std::size_t errors = 0, fallbacks = 0;
    for (const auto& t : run.traces) {
      errors += !t.error.empty();
      fallbacks += t.fallback;
    }
    const std::size_t k = cfg.cutoffs.back() >= 10 ? 10 : cfg.cutoffs.back();
    const auto cell = report.macro.find({agqr::Metric::ndcg, k});
    std::printf("%-4s queries=%zu evaluated=%zu fallbacks=%zu errors=%zu", std::string(agqr::to_string(m)).c_str(),
                queries.size(), report.evaluated, fallbacks, errors);
    if (cell != report.macro.end()) std::printf(" ndcg@%zu=%.4f", k, cell->second);
    std::printf(" -> %s\n", dir.string().c_str());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<agqr::EvalReport> reports;
  for (const auto& d : dirs) reports.push_back(agqr::read_report(fs::path(d) / "report.tsv", fs::path(d) / "per_query.jsonl"));
  const auto c = agqr::compare(reports);
  const std::string text = agqr::render_comparison_text(c);
  const fs::path target = out.empty() ? fs::path(dirs.front()).parent_path() : fs::path(out);
  if (!target.empty()) fs::create_directories(target);
  std::ofstream(target / "compare.txt") << text;
  std::ofstream(target / "compare.tsv") << agqr::render_comparison_tsv(c);
  std::cout << text;
  return 0;
}

agqr::MockChatServer* g_server = nullptr;

int cmd_mock_llm(const std::string& script_path, const std::string& host, int port) {
  agqr::MockChatServer::Script script;
  if (!script_path.empty()) {
    std::ifstream in(script_path);
    if (!in) throw agqr::Error("cannot open " + script_path);
    const auto j = nlohmann::json::parse(in);
    for (const auto& [k, v] : j.items()) script[k] = v.get<std::string>();
  }
  agqr::MockChatServer server(std::move(script));
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::fprintf(stderr, "mock chat endpoint on http://%s:%d/v1/chat/completions\n", host.c_str(), port);
  server.listen(host, port);
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution-guided query rewriting engine"};
  app.require_subcommand(1);

  ConfigFlags index_flags, attr_flags, run_flags;

  auto* index = app.add_subcommand("index", "build and persist a reference retriever index");
  index_flags.add_to(index);
  std::string index_out;
  index->add_option("-o,--out", index_out, "snapshot path (defaults to the config's index key)");

  auto* attribute = app.add_subcommand("attribute", "print the token attribution table for one query");
  attr_flags.add_to(attribute);
  std::string query_text, query_id = "query";
  attribute->add_option("-q,--query", query_text, "query text")->required();
  attribute->add_option("--id", query_id, "query id shown in the table");

  auto* run = app.add_subcommand("run", "run methods over a query set and write traces and reports");
  run_flags.add_to(run);
  std::vector<std::string> methods;
  std::string output_dir;
  run->add_option("-m,--method", methods, "Org, Tkn, LLM or GLLM (repeatable; default from config)");
  run->add_option("-o,--output-dir", output_dir, "output directory (one subdirectory per method)");

  auto* cmp = app.add_subcommand("compare", "merge method reports into one comparison table");
  std::vector<std::string> dirs;
  std::string cmp_out;
  cmp->add_option("dirs", dirs, "method output directories")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("-o,--out", cmp_out, "where to write compare.txt and compare.tsv");

  auto* mock = app.add_subcommand("mock-llm", "serve a scripted chat-completions endpoint");
  std::string script, host = "127.0.0.1";
  int port = 8089;
  mock->add_option("-s,--script", script, "JSON object mapping original query text to a rewrite")->check(CLI::ExistingFile);
  mock->add_option("--host", host, "bind address");
  mock->add_option("-p,--port", port, "port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*index) return cmd_index(index_flags, index_out);
    if (*attribute) return cmd_attribute(attr_flags, query_text, query_id);
    if (*run) return cmd_run(run_flags, methods, output_dir);
    if (*cmp) return cmd_compare(dirs, cmp_out);
    if (*mock) return cmd_mock_llm(script, host, port);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "agqr: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
