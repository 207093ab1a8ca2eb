// Test double for an external retriever process: serves the stdio wire
// protocol over the in-process sparse scorer. Usage:
//   fake_bridge <corpus.jsonl> [--fault tokens|mass|id]
#include <cmath>
#include <iostream>
#include <string>

#include <json.hpp>

#include "agqr/attribution.hpp"
#include "agqr/corpus.hpp"
#include "agqr/retriever.hpp"

using json = nlohmann::json;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: fake_bridge <corpus.jsonl> [--fault tokens|mass|id]\n";
    return 2;
  }
  const std::string fault = argc >= 4 && std::string(argv[2]) == "--fault" ? argv[3] : "";
  const agqr::Corpus corpus = agqr::load_corpus(argv[1]);
  const auto model = agqr::SparseModel::build(agqr::CollectionStats::of(corpus), {0, 3});

  std::string line;
  while (std::getline(std::cin, line)) {
    json out = {{"v", 1}};
    try {
      const json req = json::parse(line);
      out["id"] = req.at("id");
      if (fault == "id") out["id"] = req.at("id").get<long>() + 1000;
      const std::string op = req.at("op");
      const json& p = req.value("payload", json::object());
      if (op == "info") {
        out["payload"] = {{"model", "fake-sparse"}, {"docs", corpus.size()}};
      } else if (op == "search") {
        const auto q = agqr::Query::from_text("q", p.at("query").get<std::string>());
        json hits = json::array();
        for (const auto& e : model.search(q, p.at("k").get<std::size_t>()).entries)
          hits.push_back({{"id", e.doc_id}, {"score", e.score}});
        out["payload"] = {{"hits", hits}};
      } else if (op == "attribute") {
        const auto q = agqr::Query::from_text("q", p.at("query").get<std::string>());
        const int steps = p.at("steps");
        json rows = json::array(), totals = json::array(), residuals = json::array();
        for (const auto& id : p.at("doc_ids")) {
          const auto v = agqr::ig_single(q.tokens, id.get<std::string>(), steps, model);
          double total = 0.0;
          for (double x : v.values) total += x;
          rows.push_back(v.values);
          totals.push_back(fault == "mass" ? total + 0.5 : total);
          residuals.push_back(v.completeness_residual);
        }
        auto tokens = q.tokens;
        if (fault == "tokens" && !tokens.empty()) tokens.back() += "##";
        out["payload"] = {{"tokens", tokens}, {"attributions", rows}, {"subword_totals", totals}, {"residuals", residuals}};
      } else {
        throw std::runtime_error("unknown op '" + op + "'");
      }
      out["ok"] = true;
    } catch (const std::exception& e) {
      out["ok"] = false;
      out["error"] = e.what();
    }
    std::cout << out.dump() << '\n' << std::flush;
  }
  return 0;
}
