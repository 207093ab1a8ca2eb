#include "agqr/rewrite.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "agqr/hashing.hpp"
#include "agqr/tokenize.hpp"

namespace agqr {
namespace {

using json = nlohmann::json;

constexpr std::string_view kPromptHead =
    "You are given:\n"
    "1) An original user query.\n";
constexpr std::string_view kAttributionInput =
    "2) A list of query tokens with their attribution scores, where higher scores indicate a stronger "
    "positive contribution to retrieval effectiveness, and lower or negative scores indicate weak or "
    "misleading contributions.\n";
constexpr std::string_view kTaskAndGuidelines =
    "\n"
    "Your task is to rewrite the query to improve retrieval effectiveness.\n"
    "\n"
    "Guidelines:\n"
    "- Preserve the original user intent.\n"
    "- Do not remove important concepts.\n";
constexpr std::string_view kAttributionGuidelines =
    "- Tokens with high attribution scores should be preserved or emphasized.\n"
    "- Tokens with low or negative attribution scores may be clarified, specified, or disambiguated.\n";
constexpr std::string_view kClosingGuidelines =
    "- Avoid adding new concepts that are not implied by the original query.\n"
    "- Produce a single rewritten query, concise and well-formed.\n"
    "\n";

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Keep "-0.000" out of prompts.
  if (std::string_view(buf) == "-0.000") return "0.000";
  return buf;
}

std::string trim(std::string_view s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  auto b = std::find_if(s.begin(), s.end(), not_space);
  auto e = std::find_if(s.rbegin(), s.rend(), not_space).base();
  return b < e ? std::string(b, e) : std::string();
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

std::string strip_quotes(std::string s) {
  static const std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"'", "'"}, {"`", "`"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // “ ”
      {"\xE2\x80\x98", "\xE2\x80\x99"},                                        // ‘ ’
      {"\xC2\xAB", "\xC2\xBB"},                                                // « »
  };
  bool changed = true;
  while (changed) {
    changed = false;
    s = trim(s);
    for (const auto& [open, close] : kPairs) {
      if (s.size() >= open.size() + close.size() && starts_with(s, open) && ends_with(s, close)) {
        s = s.substr(open.size(), s.size() - open.size() - close.size());
        changed = true;
        break;
      }
    }
  }
  return s;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

PromptRequest finish(PromptRequest req) {
  req.hash = prompt_hash(req.text);
  return req;
}

}  // namespace

std::string_view to_string(MethodTag m) {
  switch (m) {
    case MethodTag::Org: return "Org";
    case MethodTag::Tkn: return "Tkn";
    case MethodTag::LLM: return "LLM";
    case MethodTag::GLLM: return "GLLM";
  }
  return "?";
}

MethodTag parse_method(std::string_view name) {
  std::string n(name);
  for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (n == "org") return MethodTag::Org;
  if (n == "tkn") return MethodTag::Tkn;
  if (n == "llm") return MethodTag::LLM;
  if (n == "gllm") return MethodTag::GLLM;
  throw Error("unknown method '" + std::string(name) + "' (expected Org, Tkn, LLM or GLLM)");
}

std::string prompt_hash(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

PromptRequest build_guided_prompt(const Query& query, std::span<const double> scores, std::string model) {
  if (scores.empty()) throw Error("guided prompt needs at least one attribution score");
  if (scores.size() != query.tokens.size())
    throw Error("query " + query.id + " has " + std::to_string(query.tokens.size()) + " tokens but " +
                std::to_string(scores.size()) + " scores");
  PromptRequest req;
  req.query_id = query.id;
  req.original_query = query.text;
  req.guided = true;
  req.model = std::move(model);
  std::string pairs;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    req.attributions.emplace_back(query.tokens[i], scores[i]);
    if (i) pairs += ", ";
    pairs += query.tokens[i] + " (" + format_score(scores[i]) + ")";
  }
  std::string& t = req.text;
  t += kPromptHead;
  t += kAttributionInput;
  t += kTaskAndGuidelines;
  t += kAttributionGuidelines;
  t += kClosingGuidelines;
  t += "Original query: \"" + query.text + "\"\n";
  t += "Token attributions: \"" + pairs + "\" ";
  return finish(std::move(req));
}

PromptRequest build_plain_prompt(const Query& query, std::string model) {
  PromptRequest req;
  req.query_id = query.id;
  req.original_query = query.text;
  req.guided = false;
  req.model = std::move(model);
  std::string& t = req.text;
  t += kPromptHead;
  t += kTaskAndGuidelines;
  t += kClosingGuidelines;
  t += "Original query: \"" + query.text + "\"";
  return finish(std::move(req));
}

RewrittenQuery select_top_tokens(const Query& query, std::span<const double> scores) {
  if (scores.size() != query.tokens.size())
    throw Error("query " + query.id + " has " + std::to_string(query.tokens.size()) + " tokens but " +
                std::to_string(scores.size()) + " scores");
  RewrittenQuery out;
  out.query_id = query.id;
  out.method = MethodTag::Tkn;
  if (!scores.empty()) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    // Rounding in the mean must not let a constant vector select anything.
    const double tol = 1e-12 * (*hi - *lo);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (*hi > *lo && scores[i] > mean + tol) out.tokens.push_back(query.tokens[i]);
    }
  }
  if (out.tokens.empty()) {
    out.tokens = query.tokens;
    out.fallback = true;
  }
  out.text = join_tokens(out.tokens);
  return out;
}

std::string clean_response(std::string_view raw) {
  static const std::regex kLabel(
      R"(^\s*[*#_]*\s*(rewritten\s+query|rewritten|rewrite|query|answer)\s*[*_]*\s*:\s*[*_]*\s*)",
      std::regex::icase);
  std::istringstream lines{std::string(raw)};
  std::string line;
  while (std::getline(lines, line)) {
    std::string s = trim(line);
    s = std::regex_replace(s, kLabel, "", std::regex_constants::format_first_only);
    s = strip_quotes(std::move(s));
    if (!s.empty()) return s;
  }
  return {};
}

RewriterReply IdentityRewriter::complete(const PromptRequest& request) {
  return {request.original_query, "identity"};
}

ScriptedRewriter ScriptedRewriter::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!j.is_object()) throw ParseError(path.string(), 0, "rewrite script must be a JSON object");
  const auto table_of = [&](const json& obj) {
    Table t;
    for (const auto& [k, v] : obj.items()) {
      if (!v.is_string()) throw ParseError(path.string(), 0, "rewrite for '" + k + "' is not a string");
      t.emplace(k, v.get<std::string>());
    }
    return t;
  };
  if (j.contains("guided") || j.contains("plain")) {
    return ScriptedRewriter(table_of(j.value("guided", json::object())), table_of(j.value("plain", json::object())));
  }
  return ScriptedRewriter(table_of(j));
}

RewriterReply ScriptedRewriter::complete(const PromptRequest& request) {
  const Table& table = request.guided ? guided_ : plain_;
  const auto it = table.find(request.query_id);
  if (it == table.end()) return {"", "scripted:missing"};
  return {it->second, "scripted"};
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::record_path(const std::string& hash, const std::string& model) const {
  return dir_ / (hash + "-" + prompt_hash(model) + ".json");
}

std::optional<RewriterReply> ResponseCache::get(const std::string& hash, const std::string& model) const {
  const auto path = record_path(hash, model);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const json j = json::parse(in);
    if (j.at("prompt_hash") != hash || j.at("model") != model)
      throw Error("cache record " + path.string() + " does not match its key");
    return RewriterReply{j.at("response").get<std::string>(), j.value("response_id", std::string())};
  } catch (const json::exception& e) {
    throw Error("corrupt cache record " + path.string() + ": " + e.what());
  }
}

void ResponseCache::put(const std::string& hash, const std::string& model, const RewriterReply& reply) {
  const json j = {{"prompt_hash", hash},
                  {"model", model},
                  {"response", reply.text},
                  {"response_id", reply.response_id},
                  {"timestamp", now_iso8601()}};
  std::lock_guard lock(write_mutex_);
  const auto path = record_path(hash, model);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

RewrittenQuery rewrite(const PromptRequest& request, MethodTag method, Rewriter& rewriter, ResponseCache* cache) {
  RewrittenQuery out;
  out.query_id = request.query_id;
  out.method = method;

  std::optional<RewriterReply> reply;
  const std::string cache_model = request.model.empty() ? rewriter.name() : request.model;
  if (cache) reply = cache->get(request.hash, cache_model);
  if (reply) {
    out.cache_hit = true;
  } else {
    reply = rewriter.complete(request);
    if (cache) cache->put(request.hash, cache_model, *reply);
  }
  out.response_id = reply->response_id;
  out.text = clean_response(reply->text);
  out.tokens = tokenize(out.text);
  if (out.tokens.empty()) {
    out.text = request.original_query;
    out.tokens = tokenize(out.text);
    out.fallback = true;
  }
  return out;
}

std::optional<std::string> original_query_of_prompt(std::string_view prompt) {
  constexpr std::string_view kMarker = "Original query: \"";
  const auto at = prompt.find(kMarker);
  if (at == std::string_view::npos) return std::nullopt;
  const auto start = at + kMarker.size();
  auto eol = prompt.find('\n', start);
  if (eol == std::string_view::npos) eol = prompt.size();
  const auto close = prompt.rfind('"', eol - 1);
  if (close == std::string_view::npos || close < start) return std::nullopt;
  return std::string(prompt.substr(start, close - start));
}

}  // namespace agqr
