#include "agqr/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "agqr/error.hpp"
#include "agqr/tokenize.hpp"

namespace agqr {
namespace {

using json = nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

json parse_line(const std::filesystem::path& path, std::size_t lineno, const std::string& line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), lineno, std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(path.string(), lineno, "expected a JSON object");
  return obj;
}

std::string string_field(const json& obj, const char* key, bool required,
                         const std::filesystem::path& path, std::size_t lineno) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw ParseError(path.string(), lineno, std::string("missing field ") + key);
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(path.string(), lineno, std::string("field ") + key + " is not a string");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!cols.empty() && !cols.back().empty() && cols.back().back() == '\r') cols.back().pop_back();
  return cols;
}

}  // namespace

std::string Document::scoring_text() const {
  if (title.empty()) return text;
  if (text.empty()) return title;
  return title + " " + text;
}

Query Query::from_text(std::string id, std::string text) {
  Query q{std::move(id), std::move(text), {}};
  q.tokens = tokenize(q.text);
  return q;
}

Corpus Corpus::from_documents(std::vector<Document> docs) {
  Corpus c;
  c.docs_ = std::move(docs);
  c.by_id_.reserve(c.docs_.size());
  std::vector<std::vector<std::string>> tokenized(c.docs_.size());
  for (std::size_t i = 0; i < c.docs_.size(); ++i) {
    const Document& d = c.docs_[i];
    if (d.id.empty()) throw Error("document at position " + std::to_string(i) + " has an empty id");
    if (d.text.empty() && d.title.empty())
      throw Error("document " + d.id + " has neither title nor text");
    if (!c.by_id_.emplace(d.id, i).second) throw Error("duplicate document id " + d.id);
    tokenized[i] = tokenize(d.scoring_text());
  }

  for (const auto& toks : tokenized) c.vocab_.insert(c.vocab_.end(), toks.begin(), toks.end());
  std::sort(c.vocab_.begin(), c.vocab_.end());
  c.vocab_.erase(std::unique(c.vocab_.begin(), c.vocab_.end()), c.vocab_.end());
  c.term_ids_.reserve(c.vocab_.size());
  for (std::uint32_t t = 0; t < c.vocab_.size(); ++t) c.term_ids_.emplace(c.vocab_[t], t);

  c.df_.assign(c.vocab_.size(), 0);
  c.counts_.resize(c.docs_.size());
  c.lengths_.resize(c.docs_.size());
  for (std::size_t i = 0; i < tokenized.size(); ++i) {
    std::vector<std::uint32_t> ids;
    ids.reserve(tokenized[i].size());
    for (const auto& tok : tokenized[i]) ids.push_back(c.term_ids_.at(tok));
    std::sort(ids.begin(), ids.end());
    TermCounts& counts = c.counts_[i];
    for (std::uint32_t id : ids) {
      if (!counts.empty() && counts.back().first == id) {
        ++counts.back().second;
      } else {
        counts.emplace_back(id, 1);
        ++c.df_[id];
      }
    }
    c.lengths_[i] = static_cast<std::uint32_t>(ids.size());
  }
  return c;
}

std::optional<std::size_t> Corpus::index_of(std::string_view doc_id) const {
  const auto it = by_id_.find(std::string(doc_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> Corpus::term_index(std::string_view term) const {
  const auto it = term_ids_.find(std::string(term));
  if (it == term_ids_.end()) return std::nullopt;
  return it->second;
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json obj = parse_line(path, lineno, line);
    Document d;
    d.id = string_field(obj, "_id", true, path, lineno);
    d.title = string_field(obj, "title", false, path, lineno);
    d.text = string_field(obj, "text", false, path, lineno);
    if (d.id.empty()) throw ParseError(path.string(), lineno, "empty _id");
    if (d.title.empty() && d.text.empty())
      throw ParseError(path.string(), lineno, "document " + d.id + " has neither title nor text");
    if (const auto [it, fresh] = first_seen.emplace(d.id, lineno); !fresh) {
      throw ParseError(path.string(), lineno,
                       "duplicate _id " + d.id + " (first seen on line " + std::to_string(it->second) + ")");
    }
    docs.push_back(std::move(d));
  }
  return Corpus::from_documents(std::move(docs));
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const Document& d : corpus.documents()) {
    out << json{{"_id", d.id}, {"title", d.title}, {"text", d.text}}.dump() << '\n';
  }
}

std::vector<Query> load_queries(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  auto in = open_input(path);
  std::vector<Query> queries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const json obj = parse_line(path, lineno, line);
    Query q = Query::from_text(string_field(obj, "_id", true, path, lineno),
                               string_field(obj, "text", true, path, lineno));
    if (q.tokens.empty()) {
      std::string msg = path.string() + ":" + std::to_string(lineno) + ": query " + q.id +
                        " has no tokens, dropped";
      if (warnings) {
        warnings->push_back(std::move(msg));
      } else {
        std::cerr << "warning: " << msg << '\n';
      }
      continue;
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError(path.string(), lineno, "expected 3 tab-separated columns, got " +
                                                  std::to_string(cols.size()));
    }
    const std::string& grade_text = cols[2];
    int grade = 0;
    const auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    if (ec != std::errc() || ptr != grade_text.data() + grade_text.size()) {
      throw ParseError(path.string(), lineno, "score '" + grade_text + "' is not an integer");
    }
    if (grade < 0) throw ParseError(path.string(), lineno, "negative score " + grade_text);
    qrels[cols[0]][cols[1]] = grade;
  }
  return qrels;
}

}  // namespace agqr
