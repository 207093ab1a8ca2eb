#include "agqr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include "agqr/error.hpp"

namespace agqr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw Error("config key " + key + ": '" + value + "' is not a valid number");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("config key " + key + ": '" + value + "' is not a valid number");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const std::string item = trim(value.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), lineno, "expected key = value");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "corpus") corpus = value;
  else if (key == "queries") queries = value;
  else if (key == "qrels") qrels = value;
  else if (key == "index") index = value;
  else if (key == "retriever.kind") retriever_kind = value;
  else if (key == "retriever.seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "retriever.dim") dim = parse_number<std::size_t>(key, value);
  else if (key == "retriever.expansions") expansions = parse_number<std::size_t>(key, value);
  else if (key == "bridge.command") bridge_command = value;
  else if (key == "attribution.k_docs") k_docs = parse_number<std::size_t>(key, value);
  else if (key == "attribution.steps") steps = parse_number<int>(key, value);
  else if (key == "attribution.baseline") baseline = value;
  else if (key == "attribution.normalization") normalization = parse_normalization(value);
  else if (key == "rewriter.kind") rewriter_kind = value;
  else if (key == "rewriter.script") rewrite_script = value;
  else if (key == "llm.endpoint") llm_endpoint = value;
  else if (key == "llm.model") llm_model = value;
  else if (key == "llm.temperature") llm_temperature = parse_double(key, value);
  else if (key == "llm.max_tokens") llm_max_tokens = parse_number<int>(key, value);
  else if (key == "llm.api_key_env") llm_api_key_env = value;
  else if (key == "llm.cache_dir") llm_cache_dir = value;
  else if (key == "llm.attempts") llm_attempts = parse_number<int>(key, value);
  else if (key == "llm.backoff_ms") llm_backoff_ms = parse_number<int>(key, value);
  else if (key == "methods") {
    methods.clear();
    for (const std::string& m : split_list(value)) methods.push_back(parse_method(m));
  } else if (key == "cutoffs") {
    cutoffs.clear();
    for (const std::string& c : split_list(value)) cutoffs.push_back(parse_number<std::size_t>(key, c));
  } else if (key == "output_dir") output_dir = value;
  else if (key == "concurrency") concurrency = parse_number<int>(key, value);
  else throw Error("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (k_docs < 1) throw Error("attribution.k_docs must be >= 1");
  if (steps < 1) throw Error("attribution.steps must be >= 1");
  if (baseline != "zero") throw Error("attribution.baseline: only 'zero' is supported");
  if (cutoffs.empty()) throw Error("cutoffs must not be empty");
  if (!std::is_sorted(cutoffs.begin(), cutoffs.end()) ||
      std::adjacent_find(cutoffs.begin(), cutoffs.end()) != cutoffs.end())
    throw Error("cutoffs must be strictly ascending");
  if (cutoffs.front() == 0) throw Error("cutoffs must be >= 1");
  if (retriever_kind != "dense" && retriever_kind != "sparse" && retriever_kind != "bridge")
    throw Error("retriever.kind must be dense, sparse or bridge");
  if (retriever_kind == "bridge" && bridge_command.empty()) throw Error("bridge.command is required for the bridge retriever");
  if (rewriter_kind != "identity" && rewriter_kind != "scripted" && rewriter_kind != "live")
    throw Error("rewriter.kind must be identity, scripted or live");
  if (rewriter_kind == "scripted" && rewrite_script.empty()) throw Error("rewriter.script is required for rewriter.kind=scripted");
  if (rewriter_kind == "live" && llm_endpoint.empty()) throw Error("llm.endpoint is required for rewriter.kind=live");
  if (methods.empty()) throw Error("methods must not be empty");
  if (concurrency < 1) throw Error("concurrency must be >= 1");
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
  std::string method_list;
  for (MethodTag m : methods) method_list += (method_list.empty() ? "" : ",") + std::string(to_string(m));
  std::string cutoff_list;
  for (std::size_t c : cutoffs) cutoff_list += (cutoff_list.empty() ? "" : ",") + std::to_string(c);
  return {
      {"corpus", corpus.string()},
      {"queries", queries.string()},
      {"qrels", qrels.string()},
      {"index", index.string()},
      {"retriever.kind", retriever_kind},
      {"retriever.seed", std::to_string(seed)},
      {"retriever.dim", std::to_string(dim)},
      {"retriever.expansions", std::to_string(expansions)},
      {"bridge.command", bridge_command},
      {"attribution.k_docs", std::to_string(k_docs)},
      {"attribution.steps", std::to_string(steps)},
      {"attribution.baseline", baseline},
      {"attribution.normalization", std::string(to_string(normalization))},
      {"rewriter.kind", rewriter_kind},
      {"rewriter.script", rewrite_script.string()},
      {"llm.endpoint", llm_endpoint},
      {"llm.model", llm_model},
      {"llm.temperature", format_double(llm_temperature)},
      {"llm.max_tokens", std::to_string(llm_max_tokens)},
      {"llm.api_key_env", llm_api_key_env},
      {"llm.cache_dir", llm_cache_dir.string()},
      {"llm.attempts", std::to_string(llm_attempts)},
      {"llm.backoff_ms", std::to_string(llm_backoff_ms)},
      {"methods", method_list},
      {"cutoffs", cutoff_list},
      {"output_dir", output_dir.string()},
      {"concurrency", std::to_string(concurrency)},
  };
}

}  // namespace agqr
