#include <doctest.h>

#include <json.hpp>

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "agqr/rewrite.hpp"
#include "agqr/tokenize.hpp"
#include "support/generators.hpp"
#include "support/tempdir.hpp"

using agqr::MethodTag;

namespace {

const agqr::Query& table2_query() {
  static const agqr::Query q = agqr::Query::from_text("q_tbl2", "What is actually in chicken nuggets?");
  return q;
}
const std::vector<double> kTable2Scores{0.008, 0.012, 0.013, 0.018, 0.217, 0.648};

// Rewriter that returns a canned reply and counts calls.
class Canned final : public agqr::Rewriter {
 public:
  explicit Canned(std::string reply) : reply_(std::move(reply)) {}
  std::string name() const override { return "canned"; }
  agqr::RewriterReply complete(const agqr::PromptRequest&) override {
    ++calls;
    return {reply_, "canned-" + std::to_string(calls)};
  }
  int calls = 0;

 private:
  std::string reply_;
};

agqr::ChatClientOptions client_for(int port, int attempts = 3) {
  agqr::ChatClientOptions o;
  o.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  o.model = "mock-model";
  o.attempts = attempts;
  o.initial_backoff = std::chrono::milliseconds(5);
  o.timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST_CASE("method tags") {
  for (MethodTag m : agqr::kAllMethods) CHECK(agqr::parse_method(agqr::to_string(m)) == m);
  CHECK(agqr::parse_method("gllm") == MethodTag::GLLM);
  CHECK_THROWS_AS(agqr::parse_method("bm25"), agqr::Error);
}

TEST_CASE("guided prompt") {
  const auto req = agqr::build_guided_prompt(table2_query(), kTable2Scores, "m");
  CHECK(req.text.find("\"What is actually in chicken nuggets?\"") != std::string::npos);
  CHECK(req.text.find("nuggets (0.648)") != std::string::npos);
  CHECK(req.text.find(
            "Token attributions: \"what (0.008), is (0.012), actually (0.013), in (0.018), chicken (0.217), "
            "nuggets (0.648)\" ") != std::string::npos);
  CHECK(req.text.rfind("You are given:\n1) An original user query.\n2) A list of query tokens", 0) == 0);
  CHECK(req.guided);
  CHECK(req.temperature == 0.0);
  CHECK(req.max_tokens == 120);
  CHECK(req.model == "m");
  CHECK(req.hash == agqr::prompt_hash(req.text));
  CHECK(req.hash.size() == 16);
  REQUIRE(req.attributions.size() == 6);
  CHECK(req.attributions[4] == std::pair<std::string, double>{"chicken", 0.217});
  CHECK(agqr::original_query_of_prompt(req.text) == std::optional<std::string>("What is actually in chicken nuggets?"));

  const auto one = agqr::build_guided_prompt(agqr::Query::from_text("q", "nuggets"), std::vector<double>{1.0});
  CHECK(one.text.find("Token attributions: \"nuggets (1.000)\"") != std::string::npos);
  CHECK(one.attributions.size() == 1);

  const auto negzero = agqr::build_guided_prompt(agqr::Query::from_text("q", "a b"), std::vector<double>{-0.0001, 1.0});
  CHECK(negzero.text.find("a (0.000)") != std::string::npos);

  CHECK_THROWS_AS(agqr::build_guided_prompt(agqr::Query{"q", "", {}}, std::vector<double>{}), agqr::Error);
  CHECK_THROWS_AS(agqr::build_guided_prompt(table2_query(), std::vector<double>{0.5}), agqr::Error);
}

TEST_CASE("plain prompt") {
  const auto req = agqr::build_plain_prompt(table2_query());
  CHECK(req.text.find("\"What is actually in chicken nuggets?\"") != std::string::npos);
  CHECK_FALSE(std::regex_search(req.text, std::regex("[0-9]\\.[0-9]")));
  CHECK(req.text.find("attribution") == std::string::npos);
  CHECK_FALSE(req.guided);
  CHECK(req.attributions.empty());
  CHECK(agqr::build_plain_prompt(table2_query()).text == req.text);
  CHECK(req.text.ends_with("Original query: \"What is actually in chicken nuggets?\""));
  // Same prompt as the guided one minus the attribution-only lines.
  const auto guided = agqr::build_guided_prompt(table2_query(), kTable2Scores).text;
  std::string stripped;
  std::istringstream lines(guided);
  for (std::string line; std::getline(lines, line);) {
    if (line.find("attribution") != std::string::npos) continue;
    stripped += line + "\n";
  }
  stripped.pop_back();
  CHECK(stripped == req.text);
}

TEST_CASE("prompt rendering is injective over query text and rounded scores") {
  gen::Rng rng(8);
  std::set<std::string> hashes, texts;
  for (int i = 0; i < 200; ++i) {
    const auto toks = gen::random_query_tokens(rng, 50);
    std::vector<double> s(toks.size());
    for (double& x : s) x = static_cast<double>(rng.below(1000)) / 1000.0;
    agqr::Query q{"q", agqr::join_tokens(toks), toks};
    const auto req = agqr::build_guided_prompt(q, s);
    std::string key = q.text;
    for (double x : s) key += "|" + std::to_string(static_cast<int>(std::lround(x * 1000)));
    if (texts.insert(key).second) CHECK(hashes.insert(req.text).second);
  }
}

TEST_CASE("select_top_tokens") {
  const auto tkn = agqr::select_top_tokens(table2_query(), kTable2Scores);
  CHECK(tkn.text == "chicken nuggets");
  CHECK(tkn.tokens == std::vector<std::string>{"chicken", "nuggets"});
  CHECK(tkn.method == MethodTag::Tkn);
  CHECK_FALSE(tkn.fallback);

  const auto ab = agqr::Query::from_text("q", "alpha beta");
  const auto tie = agqr::select_top_tokens(ab, std::vector<double>{0.5, 0.5});
  CHECK(tie.text == "alpha beta");
  CHECK(tie.fallback);
  CHECK(agqr::select_top_tokens(ab, std::vector<double>{0.9, 0.1}).text == "alpha");
  CHECK_THROWS_AS(agqr::select_top_tokens(ab, std::vector<double>{1.0}), agqr::Error);

  gen::Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto toks = gen::random_query_tokens(rng, 20, 8);
    agqr::Query q{"q", agqr::join_tokens(toks), toks};
    std::vector<double> s(toks.size());
    for (double& x : s) x = rng.range(-1, 1);
    const auto r = agqr::select_top_tokens(q, s);
    // Ordered subsequence of the query tokens.
    std::size_t j = 0;
    for (const auto& t : r.tokens) {
      while (j < toks.size() && toks[j] != t) ++j;
      CHECK(j < toks.size());
      ++j;
    }
    CHECK(!r.tokens.empty());
    // Affine maps with positive slope do not change the selection.
    const double a = std::exp(rng.range(-3, 3)), b = rng.range(-10, 10);
    std::vector<double> t = s;
    for (double& x : t) x = a * x + b;
    CHECK(agqr::select_top_tokens(q, t).tokens == r.tokens);
  }
}

TEST_CASE("clean_response") {
  CHECK(agqr::clean_response("chicken nugget ingredients") == "chicken nugget ingredients");
  CHECK(agqr::clean_response("\n\n  Rewritten query: \"chicken nugget ingredients\"\nbecause...") ==
        "chicken nugget ingredients");
  CHECK(agqr::clean_response("**Rewritten query:** foo bar") == "foo bar");
  CHECK(agqr::clean_response("\xE2\x80\x9C" "foo" "\xE2\x80\x9D") == "foo");
  CHECK(agqr::clean_response("   \n \"\"\n") == "");
  CHECK(agqr::clean_response("") == "");
}

TEST_CASE("identity and scripted rewriters") {
  const auto plain = agqr::build_plain_prompt(table2_query());
  agqr::IdentityRewriter id;
  const auto same = agqr::rewrite(plain, MethodTag::LLM, id);
  CHECK(same.text == table2_query().text);
  CHECK(same.method == MethodTag::LLM);
  CHECK_FALSE(same.fallback);

  agqr::ScriptedRewriter scripted(agqr::ScriptedRewriter::Table{{"q_tbl2", "What are the ingredients in chicken nuggets?"}});
  const auto guided = agqr::build_guided_prompt(table2_query(), kTable2Scores);
  const auto out = agqr::rewrite(guided, MethodTag::GLLM, scripted);
  CHECK(out.text == "What are the ingredients in chicken nuggets?");
  CHECK(out.tokens == agqr::tokenize("What are the ingredients in chicken nuggets?"));
  CHECK(out.query_id == "q_tbl2");

  const auto missing = agqr::rewrite(agqr::build_plain_prompt(agqr::Query::from_text("zz", "x y")), MethodTag::LLM, scripted);
  CHECK(missing.fallback);
  CHECK(missing.text == "x y");

  testing_support::TempDir dir;
  const auto f = dir.write("s.json", R"({"guided":{"q1":"g"},"plain":{"q1":"p"}})");
  auto split = agqr::ScriptedRewriter::from_file(f);
  const auto q1 = agqr::Query::from_text("q1", "orig");
  CHECK(agqr::rewrite(agqr::build_guided_prompt(q1, std::vector<double>{1.0}), MethodTag::GLLM, split).text == "g");
  CHECK(agqr::rewrite(agqr::build_plain_prompt(q1), MethodTag::LLM, split).text == "p");
  CHECK_THROWS_AS(agqr::ScriptedRewriter::from_file(dir.write("bad.json", "[1]")), agqr::Error);
  CHECK_THROWS_AS(agqr::ScriptedRewriter::from_file(dir.write("bad2.json", R"({"q":1})")), agqr::Error);
}

TEST_CASE("empty replies fall back to the original query") {
  Canned empty("");
  const auto r = agqr::rewrite(agqr::build_plain_prompt(table2_query()), MethodTag::LLM, empty);
  CHECK(r.fallback);
  CHECK(r.text == table2_query().text);
  Canned punct("?!");
  CHECK(agqr::rewrite(agqr::build_plain_prompt(table2_query()), MethodTag::LLM, punct).fallback);
}

TEST_CASE("response cache") {
  testing_support::TempDir dir;
  agqr::ResponseCache cache(dir.path() / "cache");
  const auto req = agqr::build_plain_prompt(table2_query(), "model-a");
  Canned canned("chicken nugget ingredients");

  const auto first = agqr::rewrite(req, MethodTag::LLM, canned, &cache);
  CHECK_FALSE(first.cache_hit);
  const auto second = agqr::rewrite(req, MethodTag::LLM, canned, &cache);
  CHECK(second.cache_hit);
  CHECK(canned.calls == 1);
  CHECK(second.text == first.text);
  CHECK(second.response_id == first.response_id);

  const auto rec = nlohmann::json::parse(testing_support::slurp(cache.record_path(req.hash, "model-a")));
  CHECK(rec.at("prompt_hash") == req.hash);
  CHECK(rec.at("model") == "model-a");
  CHECK(rec.at("response") == "chicken nugget ingredients");
  CHECK(rec.contains("timestamp"));

  // A different model is a different key.
  auto other = req;
  other.model = "model-b";
  CHECK_FALSE(agqr::rewrite(other, MethodTag::LLM, canned, &cache).cache_hit);
  CHECK(canned.calls == 2);

  std::ofstream(cache.record_path(req.hash, "model-a")) << "{not json";
  CHECK_THROWS_AS(cache.get(req.hash, "model-a"), agqr::Error);
  std::ofstream(cache.record_path(req.hash, "model-a"))
      << R"({"prompt_hash":"0000000000000000","model":"model-a","response":"x"})";
  CHECK_THROWS_AS(cache.get(req.hash, "model-a"), agqr::Error);
}

TEST_CASE("live client against the mock endpoint") {
  agqr::MockChatServer server(
      agqr::MockChatServer::Script{{"What is actually in chicken nuggets?", "Rewritten query: chicken nugget ingredients"}});
  const int port = server.start();
  agqr::ChatCompletionsClient client(client_for(port));

  const auto guided = agqr::build_guided_prompt(table2_query(), kTable2Scores);
  const auto r = agqr::rewrite(guided, MethodTag::GLLM, client);
  CHECK(r.text == "chicken nugget ingredients");
  CHECK(r.response_id.rfind("mock-", 0) == 0);

  // Unknown queries are echoed.
  const auto echo = agqr::rewrite(agqr::build_plain_prompt(agqr::Query::from_text("q", "heart disease diet")),
                                  MethodTag::LLM, client);
  CHECK(echo.text == "heart disease diet");

  SUBCASE("transient failures are retried") {
    server.fail_next(2);
    const std::size_t before = server.requests_served();
    CHECK(agqr::rewrite(guided, MethodTag::GLLM, client).text == "chicken nugget ingredients");
    CHECK(server.requests_served() - before == 3);
  }
  SUBCASE("persistent failure raises with the prompt hash") {
    server.fail_next(3);
    try {
      agqr::rewrite(guided, MethodTag::GLLM, client);
      FAIL("expected RewriteError");
    } catch (const agqr::RewriteError& e) {
      CHECK(e.prompt_hash() == guided.hash);
      CHECK(std::string(e.what()).find("HTTP 500") != std::string::npos);
    }
  }
  SUBCASE("request body") {
    const auto body = nlohmann::json::parse(agqr::ChatCompletionsClient::request_body(guided, "m1"));
    CHECK(body.at("model") == "m1");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("max_tokens") == 120);
    CHECK(body.at("messages").at(0).at("content") == guided.text);
  }
}

TEST_CASE("live client reports unreachable endpoints") {
  agqr::ChatCompletionsClient client(client_for(1, 2));
  CHECK_THROWS_AS(client.complete(agqr::build_plain_prompt(table2_query())), agqr::RewriteError);
  CHECK_THROWS_AS(agqr::ChatCompletionsClient(agqr::ChatClientOptions{"ftp://x", "m", ""}), agqr::Error);
}
