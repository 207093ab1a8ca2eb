#include "agqr/bridge.hpp"

#include <algorithm>
#include <cmath>

#include <boost/process.hpp>

namespace agqr {

namespace bp = boost::process;
using json = nlohmann::json;

namespace wire {

json request(std::uint64_t id, const std::string& op, json payload) {
  return {{"v", kVersion}, {"id", id}, {"op", op}, {"payload", std::move(payload)}};
}

json response_payload(const std::string& line, std::uint64_t expected_id) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw BridgeError(std::string("bridge sent malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw BridgeError("bridge response is not an object");
  if (j.value("v", kVersion) != kVersion) throw BridgeError("bridge speaks protocol v" + j["v"].dump());
  if (!j.contains("id") || j["id"] != expected_id)
    throw BridgeError("bridge response id " + j.value("id", json()).dump() + " does not match request " +
                      std::to_string(expected_id));
  if (!j.value("ok", false)) throw BridgeError("bridge error: " + j.value("error", std::string("unspecified")));
  return j.value("payload", json::object());
}

std::vector<AttributionVector> decode_attribution(const json& payload, const Query& query,
                                                  std::span<const std::string> doc_ids, int steps) {
  try {
    const auto tokens = payload.at("tokens").get<std::vector<std::string>>();
    if (tokens != query.tokens) throw BridgeError("bridge word tokens do not match the engine tokenization of " + query.id);
    const json& rows = payload.at("attributions");
    if (rows.size() != doc_ids.size())
      throw BridgeError("bridge returned " + std::to_string(rows.size()) + " attribution rows for " +
                        std::to_string(doc_ids.size()) + " documents");
    const json* totals = payload.contains("subword_totals") ? &payload["subword_totals"] : nullptr;
    const json* residuals = payload.contains("residuals") ? &payload["residuals"] : nullptr;
    std::vector<AttributionVector> out;
    for (std::size_t d = 0; d < doc_ids.size(); ++d) {
      AttributionVector v;
      v.doc_id = doc_ids[d];
      v.steps = steps;
      v.values = rows.at(d).get<std::vector<double>>();
      if (v.values.size() != tokens.size())
        throw BridgeError("attribution row for " + v.doc_id + " is not word-aligned");
      if (totals) {
        // Word scores are sums of subword scores; their total must be conserved.
        double word_sum = 0.0;
        for (double x : v.values) word_sum += x;
        const double total = totals->at(d).get<double>();
        if (std::abs(word_sum - total) > 1e-9 * std::max(1.0, std::abs(total)))
          throw BridgeError("subword mass not conserved for " + v.doc_id);
      }
      v.completeness_residual = residuals ? residuals->at(d).get<double>() : std::nan("");
      out.push_back(std::move(v));
    }
    return out;
  } catch (const json::exception& e) {
    throw BridgeError(std::string("malformed attribute payload: ") + e.what());
  }
}

RankedList decode_search(const json& payload, const std::string& query_id, std::size_t k) {
  RankedList out{query_id, {}};
  try {
    for (const json& hit : payload.at("hits")) out.entries.push_back({hit.at("id").get<std::string>(), hit.at("score").get<double>()});
  } catch (const json::exception& e) {
    throw BridgeError(std::string("malformed search payload: ") + e.what());
  }
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  for (std::size_t i = 1; i < out.entries.size(); ++i) {
    if (out.entries[i].doc_id == out.entries[i - 1].doc_id) throw BridgeError("bridge returned a duplicate hit");
  }
  if (out.entries.size() > k) out.entries.resize(k);
  return out;
}

}  // namespace wire

struct BridgeRetriever::Process {
  bp::opstream to_child;
  bp::ipstream from_child;
  bp::child child;
};

BridgeRetriever::BridgeRetriever(std::vector<std::string> command) : proc_(std::make_unique<Process>()) {
  if (command.empty()) throw BridgeError("empty bridge command");
  boost::filesystem::path exe = command.front();
  if (command.front().find('/') == std::string::npos) exe = bp::search_path(command.front());
  if (exe.empty()) throw BridgeError("bridge executable not found: " + command.front());
  const std::vector<std::string> args(command.begin() + 1, command.end());
  try {
    proc_->child = bp::child(exe, bp::args(args), bp::std_in < proc_->to_child, bp::std_out > proc_->from_child);
  } catch (const std::exception& e) {
    throw BridgeError(std::string("cannot start bridge: ") + e.what());
  }
  const json info = call("info", json::object());
  model_ = info.value("model", std::string());
  docs_ = info.value("docs", std::size_t{0});
}

BridgeRetriever::~BridgeRetriever() {
  if (!proc_) return;
  try {
    proc_->to_child.pipe().close();
    std::error_code ec;
    if (!proc_->child.wait_for(std::chrono::seconds(2), ec)) proc_->child.terminate(ec);
  } catch (...) {
  }
}

json BridgeRetriever::call(const std::string& op, json payload) const {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = next_id_++;
  proc_->to_child << wire::request(id, op, std::move(payload)).dump() << '\n';
  proc_->to_child.flush();
  if (!proc_->to_child) throw BridgeError("bridge stdin closed");
  std::string line;
  if (!std::getline(proc_->from_child, line)) throw BridgeError("bridge closed its output");
  return wire::response_payload(line, id);
}

RankedList BridgeRetriever::search(const Query& query, std::size_t k) const {
  if (k == 0) throw Error("search depth k must be at least 1");
  const json payload = call("search", {{"query", query.text}, {"k", k}});
  return wire::decode_search(payload, query.id, k);
}

std::vector<AttributionVector> BridgeRetriever::attribute(const Query& query, std::span<const std::string> doc_ids,
                                                          int steps) const {
  if (steps < 1) throw Error("integrated gradients needs at least one step");
  const json payload = call("attribute", {{"query", query.text},
                                          {"doc_ids", std::vector<std::string>(doc_ids.begin(), doc_ids.end())},
                                          {"steps", steps}});
  return wire::decode_attribution(payload, query, doc_ids, steps);
}

}  // namespace agqr
