#include "agqr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "agqr/error.hpp"

namespace agqr {
namespace {

int grade_of(const QrelsRow& qrels, const std::string& doc_id) {
  const auto it = qrels.find(doc_id);
  return it == qrels.end() ? 0 : it->second;
}

std::size_t relevant_count(const QrelsRow& qrels) {
  return static_cast<std::size_t>(
      std::count_if(qrels.begin(), qrels.end(), [](const auto& kv) { return kv.second > 0; }));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string cell_name(const MetricKey& key) {
  return std::string(to_string(key.metric)) + "@" + std::to_string(key.cutoff);
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::ndcg: return "ndcg";
    case Metric::map: return "map";
    case Metric::precision: return "p";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  const std::string n = lower(name);
  if (n == "ndcg") return Metric::ndcg;
  if (n == "map") return Metric::map;
  if (n == "p" || n == "precision") return Metric::precision;
  throw Error("unknown metric '" + std::string(name) + "'");
}

double precision_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k) {
  if (k == 0) throw Error("cutoff must be at least 1");
  const std::size_t depth = std::min(k, ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += grade_of(qrels, ranking[i]) > 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k) {
  if (k == 0) throw Error("cutoff must be at least 1");
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t i = 0; i < depth; ++i) {
    const int g = grade_of(qrels, ranking[i]);
    if (g > 0) dcg += g / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [doc, g] : qrels)
    if (g > 0) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double map_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k) {
  if (k == 0) throw Error("cutoff must be at least 1");
  const std::size_t total = relevant_count(qrels);
  if (total == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t i = 0; i < depth; ++i) {
    if (grade_of(qrels, ranking[i]) > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

double metric_at_k(Metric m, std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k) {
  switch (m) {
    case Metric::ndcg: return ndcg_at_k(ranking, qrels, k);
    case Metric::map: return map_at_k(ranking, qrels, k);
    case Metric::precision: return precision_at_k(ranking, qrels, k);
  }
  return 0.0;
}

EvalReport evaluate_run(const RunResult& run, const Qrels& qrels, std::vector<std::size_t> cutoffs) {
  if (cutoffs.empty()) throw Error("evaluation needs at least one cutoff");
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());
  if (cutoffs.front() == 0) throw Error("cutoff must be at least 1");

  EvalReport report;
  report.method = run.method;
  report.cutoffs = cutoffs;

  std::vector<const std::pair<const std::string, RankedList>*> judged;
  for (const auto& entry : run.rankings) {
    const auto row = qrels.find(entry.first);
    if (row == qrels.end() || relevant_count(row->second) == 0) {
      report.excluded.push_back(entry.first);
    } else {
      judged.push_back(&entry);
    }
  }

  std::vector<std::map<MetricKey, double>> values(judged.size());
  const auto n = static_cast<std::ptrdiff_t>(judged.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    const auto& [qid, ranked] = *judged[q];
    const QrelsRow& row = qrels.find(qid)->second;
    const std::vector<std::string> ids = ranked.head_ids(ranked.size());
    for (Metric m : kAllMetrics)
      for (std::size_t k : cutoffs) values[q][{m, k}] = metric_at_k(m, ids, row, k);
  }

  // Reduce in query-id order so the means do not depend on scheduling.
  for (std::size_t q = 0; q < judged.size(); ++q) {
    for (const auto& [key, v] : values[q]) report.macro[key] += v;
    report.per_query.emplace(judged[q]->first, std::move(values[q]));
  }
  report.evaluated = judged.size();
  for (auto& [key, sum] : report.macro) sum /= static_cast<double>(report.evaluated);
  if (report.evaluated == 0) {
    for (Metric m : kAllMetrics)
      for (std::size_t k : cutoffs) report.macro[{m, k}] = 0.0;
  }
  return report;
}

void write_per_query_jsonl(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [qid, cells] : report.per_query) {
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (const auto& [key, v] : cells) metrics[cell_name(key)] = v;
    nlohmann::ordered_json line = {{"query_id", qid}, {"method", report.method}, {"metrics", std::move(metrics)}};
    out << line.dump() << '\n';
  }
}

void write_report_tsv(const std::filesystem::path& path, const EvalReport& report,
                      const std::vector<std::string>& preamble) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const std::string& line : preamble) out << "# " << line << '\n';
  out << "# evaluated_queries=" << report.evaluated << " excluded_queries=" << report.excluded.size() << '\n';
  out << "method\tmetric\tcutoff\tvalue\n";
  char buf[64];
  for (Metric m : kAllMetrics) {
    for (std::size_t k : report.cutoffs) {
      const auto it = report.macro.find({m, k});
      std::snprintf(buf, sizeof buf, "%.6f", it == report.macro.end() ? 0.0 : it->second);
      out << report.method << '\t' << to_string(m) << '\t' << k << '\t' << buf << '\n';
    }
  }
}

EvalReport read_report(const std::filesystem::path& report_tsv, const std::filesystem::path& per_query_jsonl) {
  EvalReport report;
  std::ifstream in(report_tsv);
  if (!in) throw Error("cannot open " + report_tsv.string());
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::size_t> cutoffs;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::istringstream cols(line);
    std::string method, metric;
    std::size_t cutoff = 0;
    double value = 0.0;
    if (!(cols >> method >> metric >> cutoff >> value))
      throw ParseError(report_tsv.string(), lineno, "expected method, metric, cutoff, value");
    report.method = method;
    report.macro[{parse_metric(metric), cutoff}] = value;
    cutoffs.insert(cutoff);
  }
  report.cutoffs.assign(cutoffs.begin(), cutoffs.end());

  std::ifstream pq(per_query_jsonl);
  if (!pq) throw Error("cannot open " + per_query_jsonl.string());
  lineno = 0;
  while (std::getline(pq, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& cells = report.per_query[j.at("query_id").get<std::string>()];
      for (const auto& [name, v] : j.at("metrics").items()) {
        const auto at = name.find('@');
        if (at == std::string::npos) throw Error("bad metric name " + name);
        cells[{parse_metric(name.substr(0, at)), std::stoul(name.substr(at + 1))}] = v.get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(per_query_jsonl.string(), lineno, e.what());
    }
  }
  report.evaluated = report.per_query.size();
  return report;
}

}  // namespace agqr
