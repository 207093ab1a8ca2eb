#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace agqr {

struct Document {
  std::string id;
  std::string title;
  std::string text;

  /// Title and body joined by one space; the text every scorer sees.
  std::string scoring_text() const;
};

struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;

  /// Builds a query whose tokens are `tokenize(text)`.
  static Query from_text(std::string id, std::string text);
};

/// query-id -> doc-id -> relevance grade. Absent pairs mean grade 0.
using QrelsRow = std::map<std::string, int, std::less<>>;
using Qrels = std::map<std::string, QrelsRow, std::less<>>;

/// (term index into the vocabulary, occurrence count), sorted by term index.
using TermCounts = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

/// Immutable searchable collection. The vocabulary is the sorted union of all
/// document tokens; `doc_freq(t)` counts documents containing term `t`.
class Corpus {
 public:
  Corpus() = default;

  /// Throws agqr::Error on an empty id, a duplicate id, or a document whose
  /// title and text are both empty.
  static Corpus from_documents(std::vector<Document> docs);

  std::size_t size() const noexcept { return docs_.size(); }
  const std::vector<Document>& documents() const noexcept { return docs_; }
  const Document& document(std::size_t index) const { return docs_.at(index); }
  std::optional<std::size_t> index_of(std::string_view doc_id) const;

  const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  const std::vector<std::uint32_t>& doc_freqs() const noexcept { return df_; }
  std::optional<std::uint32_t> term_index(std::string_view term) const;

  /// Per-document term counts over `Document::scoring_text()`.
  const TermCounts& term_counts(std::size_t doc_index) const { return counts_.at(doc_index); }
  std::uint32_t doc_length(std::size_t doc_index) const { return lengths_.at(doc_index); }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::uint32_t> df_;
  std::vector<TermCounts> counts_;
  std::vector<std::uint32_t> lengths_;
};

/// BEIR `corpus.jsonl`: one object per line with `_id`, `title`, `text`.
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// BEIR `queries.jsonl`. Queries that tokenize to nothing are dropped; a
/// message per dropped query is appended to `warnings`, or printed to stderr
/// when `warnings` is null.
std::vector<Query> load_queries(const std::filesystem::path& path,
                                std::vector<std::string>* warnings = nullptr);

/// BEIR `qrels/*.tsv`: header row, then query-id, corpus-id, score.
Qrels load_qrels(const std::filesystem::path& path);

}  // namespace agqr
