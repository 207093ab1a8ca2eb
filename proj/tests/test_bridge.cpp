#include <doctest.h>

#include "agqr/bridge.hpp"
#include "agqr/tokenize.hpp"
#include "agqr/pipeline.hpp"
#include "support/generators.hpp"
#include "support/tempdir.hpp"

using nlohmann::json;

namespace {

struct BridgeFixture {
  testing_support::TempDir dir;
  agqr::Corpus corpus = gen::random_corpus(90, 120, 60);
  std::filesystem::path corpus_path = dir.path() / "corpus.jsonl";
  BridgeFixture() { agqr::write_corpus(corpus_path, corpus); }
  std::vector<std::string> command(const std::string& fault = "") const {
    std::vector<std::string> argv{FAKE_BRIDGE_PATH, corpus_path.string()};
    if (!fault.empty()) argv.insert(argv.end(), {"--fault", fault});
    return argv;
  }
};

}  // namespace

TEST_CASE("wire messages") {
  const json req = agqr::wire::request(7, "search", {{"query", "x"}, {"k", 3}});
  CHECK(req.at("v") == 1);
  CHECK(req.at("id") == 7);
  CHECK(req.at("op") == "search");

  CHECK(agqr::wire::response_payload(R"({"v":1,"id":7,"ok":true,"payload":{"a":1}})", 7).at("a") == 1);
  CHECK_THROWS_AS(agqr::wire::response_payload(R"({"v":1,"id":8,"ok":true,"payload":{}})", 7), agqr::BridgeError);
  CHECK_THROWS_AS(agqr::wire::response_payload(R"({"v":2,"id":7,"ok":true})", 7), agqr::BridgeError);
  CHECK_THROWS_WITH_AS(agqr::wire::response_payload(R"({"v":1,"id":7,"ok":false,"error":"boom"})", 7),
                       doctest::Contains("boom"), agqr::BridgeError);
  CHECK_THROWS_AS(agqr::wire::response_payload("not json", 7), agqr::BridgeError);

  const auto ranked = agqr::wire::decode_search(
      json::parse(R"({"hits":[{"id":"b","score":1},{"id":"c","score":2},{"id":"a","score":1}]})"), "q", 2);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked.entries[0].doc_id == "c");
  CHECK(ranked.entries[1].doc_id == "a");
  CHECK_THROWS_AS(agqr::wire::decode_search(json::parse(R"({"hits":[{"id":"a","score":1},{"id":"a","score":1}]})"), "q", 5),
                  agqr::BridgeError);

  const auto q = agqr::Query::from_text("q", "chicken nuggets");
  const std::vector<std::string> docs{"d1"};
  const auto ok = agqr::wire::decode_attribution(
      json::parse(R"({"tokens":["chicken","nuggets"],"attributions":[[0.2,0.6]],"subword_totals":[0.8]})"), q, docs, 8);
  CHECK(ok[0].values == std::vector<double>{0.2, 0.6});
  CHECK(ok[0].steps == 8);
  CHECK_THROWS_AS(agqr::wire::decode_attribution(
                      json::parse(R"({"tokens":["chicken","nug"],"attributions":[[0.2,0.6]]})"), q, docs, 8),
                  agqr::BridgeError);
  CHECK_THROWS_AS(agqr::wire::decode_attribution(
                      json::parse(R"({"tokens":["chicken","nuggets"],"attributions":[[0.2,0.6]],"subword_totals":[0.9]})"),
                      q, docs, 8),
                  agqr::BridgeError);
  CHECK_THROWS_AS(agqr::wire::decode_attribution(json::parse(R"({"tokens":["chicken","nuggets"],"attributions":[[0.2]]})"),
                                                 q, docs, 8),
                  agqr::BridgeError);
}

TEST_CASE("bridge process mirrors the in-process scorer") {
  BridgeFixture f;
  agqr::BridgeRetriever bridge(f.command());
  const auto local = agqr::SparseModel::build(agqr::CollectionStats::of(f.corpus), {0, 3});
  CHECK(bridge.model() == "fake-sparse");
  CHECK(bridge.corpus_size() == f.corpus.size());

  gen::Rng rng(91);
  for (int i = 0; i < 10; ++i) {
    const auto toks = gen::random_query_tokens(rng, 60);
    const agqr::Query q{"q" + std::to_string(i), agqr::join_tokens(toks), toks};
    const auto remote = bridge.search(q, 10);
    CHECK(remote.query_id == q.id);
    CHECK(remote.entries == local.search(q, 10).entries);
    const auto ids = remote.head_ids(5);
    if (ids.empty()) continue;
    const auto a = bridge.attribute(q, ids, 16);
    const auto b = local.attribute(q, ids, 16);
    REQUIRE(a.size() == b.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
      CHECK(a[d].doc_id == ids[d]);
      CHECK(a[d].values == b[d].values);
    }
  }

  // Unknown ops are answered with an error and the process stays usable.
  CHECK_THROWS_WITH_AS(bridge.call("explode", json::object()), doctest::Contains("unknown op"), agqr::BridgeError);
  CHECK(bridge.call("info", json::object()).at("docs") == f.corpus.size());
}

TEST_CASE("pipeline over the bridge equals the in-process pipeline") {
  BridgeFixture f;
  agqr::BridgeRetriever bridge(f.command());
  const auto local = agqr::SparseModel::build(agqr::CollectionStats::of(f.corpus), {0, 3});
  std::vector<agqr::Query> queries;
  gen::Rng rng(92);
  for (int i = 0; i < 8; ++i) {
    const auto toks = gen::random_query_tokens(rng, 60);
    queries.push_back({"q" + std::to_string(i), agqr::join_tokens(toks), toks});
  }
  agqr::RunConfig cfg;
  cfg.steps = 8;
  agqr::IdentityRewriter id;
  for (agqr::MethodTag m : agqr::kAllMethods) {
    const auto a = agqr::Pipeline(cfg, bridge, &id, nullptr).run_method(queries, m);
    const auto b = agqr::Pipeline(cfg, local, &id, nullptr).run_method(queries, m);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      CHECK(agqr::trace_to_json(a.traces[i]) == agqr::trace_to_json(b.traces[i]));
      CHECK(a.result.rankings.at(queries[i].id).entries == b.result.rankings.at(queries[i].id).entries);
    }
  }
}

TEST_CASE("bridge protocol violations are reported") {
  BridgeFixture f;
  const auto q = agqr::Query::from_text("q", "w1 w2");
  const std::vector<std::string> ids{"doc0"};
  {
    agqr::BridgeRetriever bad(f.command("tokens"));
    CHECK_THROWS_WITH_AS(bad.attribute(q, ids, 4), doctest::Contains("tokenization"), agqr::BridgeError);
  }
  {
    agqr::BridgeRetriever bad(f.command("mass"));
    CHECK_THROWS_WITH_AS(bad.attribute(q, ids, 4), doctest::Contains("conserved"), agqr::BridgeError);
  }
  CHECK_THROWS_AS(agqr::BridgeRetriever(f.command("id")), agqr::BridgeError);
  CHECK_THROWS_AS(agqr::BridgeRetriever({"/nonexistent/bridge"}), agqr::BridgeError);
  CHECK_THROWS_AS(agqr::BridgeRetriever({}), agqr::BridgeError);
}
