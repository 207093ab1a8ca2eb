#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/kernels.hpp"
#include "agqr/types.hpp"

namespace agqr {

/// Retrieval surface the pipeline talks to. Implementations are immutable
/// after construction and safe for concurrent calls.
class Retriever {
 public:
  virtual ~Retriever() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t corpus_size() const = 0;

  /// Top-k documents for the query's tokens. Throws agqr::Error when k == 0.
  virtual RankedList search(const Query& query, std::size_t k) const = 0;

  /// Integrated-gradients attributions of the query against each document,
  /// one vector per id, in the order given.
  virtual std::vector<AttributionVector> attribute(const Query& query,
                                                   std::span<const std::string> doc_ids,
                                                   int steps) const = 0;
};

/// The differentiable side of a reference retriever: a relevance score over a
/// query-side input point, plus its analytic gradient.
class DifferentiableScorer {
 public:
  virtual ~DifferentiableScorer() = default;

  virtual double score(std::span<const std::string> tokens, std::string_view doc_id) const = 0;
  virtual InputPoint input_of(std::span<const std::string> tokens) const = 0;
  virtual InputPoint baseline_of(std::span<const std::string> tokens) const = 0;
  virtual double score_at(std::span<const std::string> tokens, const InputPoint& point,
                          std::string_view doc_id) const = 0;
  virtual InputPoint gradient(std::span<const std::string> tokens, const InputPoint& point,
                              std::string_view doc_id) const = 0;
};

/// Retriever backed by a local differentiable scorer; attribution runs the
/// batched integrated-gradients kernel over the requested documents.
class ScoringRetriever : public Retriever, public DifferentiableScorer {
 public:
  std::vector<AttributionVector> attribute(const Query& query, std::span<const std::string> doc_ids,
                                           int steps) const override;
};

/// Term statistics of a collection; all the reference scorers need. Built from
/// a Corpus or read back from an index snapshot.
struct CollectionStats {
  std::vector<std::string> doc_ids;
  std::vector<std::string> vocabulary;  // sorted
  std::vector<std::uint32_t> doc_freq;  // parallel to vocabulary
  std::vector<TermCounts> term_counts;  // per document

  static CollectionStats of(const Corpus& corpus);
};

/// Mean-pooled bag-of-embeddings scorer: s(q,d) = <mean_i e(t_i), v_d> where
/// v_d is the mean embedding over the document's token occurrences.
class DenseModel final : public ScoringRetriever {
 public:
  struct Options {
    std::uint64_t seed = 0;
    std::size_t dim = 64;
  };

  /// Embeddings of vocabulary words drawn from the per-word SplitMix64 stream,
  /// uniform in [-1, 1). Words outside the vocabulary embed to zero.
  static DenseModel build(const CollectionStats& stats, Options options);

  /// Explicit tables. `doc_vectors` is row-major, one row of `dim` per doc.
  DenseModel(std::size_t dim, std::vector<std::string> doc_ids, std::vector<double> doc_vectors,
             std::unordered_map<std::string, std::vector<double>> embeddings);

  /// The deterministic embedding of `word` under `seed`.
  static std::vector<double> seeded_embedding(std::string_view word, std::uint64_t seed, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::vector<double> embedding(std::string_view word) const;
  std::span<const double> doc_vector(std::size_t doc_index) const;
  std::vector<double> query_vector(std::span<const std::string> tokens) const;

  std::string kind() const override { return "dense"; }
  std::size_t corpus_size() const override { return doc_ids_.size(); }
  RankedList search(const Query& query, std::size_t k) const override;

  double score(std::span<const std::string> tokens, std::string_view doc_id) const override;
  InputPoint input_of(std::span<const std::string> tokens) const override;
  InputPoint baseline_of(std::span<const std::string> tokens) const override;
  double score_at(std::span<const std::string> tokens, const InputPoint& point,
                  std::string_view doc_id) const override;
  InputPoint gradient(std::span<const std::string> tokens, const InputPoint& point,
                      std::string_view doc_id) const override;

 private:
  std::size_t doc_index(std::string_view doc_id) const;

  std::size_t dim_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> doc_lookup_;
  std::vector<double> doc_vectors_;
  std::unordered_map<std::string, std::vector<double>> embeddings_;
};

/// Expansion-based sparse scorer:
///   s(u, d) = sum_v idf_v * tf_v(d) * ln(1 + sum_i u_i * A[t_i, v])
/// with u the per-token weights (all 1 at the real query) and A the expansion
/// table. Each word expands to itself with weight 1 plus up to `expansions`
/// other vocabulary words with weights in (0, 0.5].
class SparseModel final : public ScoringRetriever {
 public:
  struct Options {
    std::uint64_t seed = 0;
    std::size_t expansions = 3;
  };

  struct Expansion {
    std::string term;
    double weight = 0.0;
  };

  struct Parts {
    std::vector<std::string> doc_ids;
    /// Per document (term, tf) pairs.
    std::vector<std::vector<std::pair<std::string, double>>> doc_terms;
    /// Replaces the formula idf for listed terms.
    std::unordered_map<std::string, double> idf_override;
    /// Replaces the seeded expansion for listed words. Must contain (word, 1.0).
    std::unordered_map<std::string, std::vector<Expansion>> expansions;
  };

  static SparseModel build(const CollectionStats& stats, Options options);
  static SparseModel from_parts(Parts parts);

  /// ln(1 + (N - df + 0.5) / (df + 0.5)); df = 0 for unseen terms.
  static double idf_formula(std::size_t n_docs, std::size_t df);

  std::vector<Expansion> expansion(std::string_view word) const;
  double idf(std::string_view term) const;

  /// Score at explicit token weights. Throws agqr::Error on a negative weight
  /// or a length mismatch.
  double score_weights(std::span<const std::string> tokens, std::span<const double> weights,
                       std::string_view doc_id) const;

  std::string kind() const override { return "sparse"; }
  std::size_t corpus_size() const override { return doc_ids_.size(); }
  RankedList search(const Query& query, std::size_t k) const override;

  double score(std::span<const std::string> tokens, std::string_view doc_id) const override;
  InputPoint input_of(std::span<const std::string> tokens) const override;
  InputPoint baseline_of(std::span<const std::string> tokens) const override;
  double score_at(std::span<const std::string> tokens, const InputPoint& point,
                  std::string_view doc_id) const override;
  InputPoint gradient(std::span<const std::string> tokens, const InputPoint& point,
                      std::string_view doc_id) const override;

 private:
  /// One expanded vocabulary term with its (token position, weight) sources.
  struct ExpandedTerm {
    std::uint32_t term = 0;
    std::vector<std::pair<std::size_t, double>> sources;
  };

  SparseModel() = default;
  void index_documents(std::vector<std::vector<std::pair<std::uint32_t, double>>> forward);
  std::vector<ExpandedTerm> expand(std::span<const std::string> tokens) const;
  double term_tf(std::size_t doc, std::uint32_t term) const;
  std::size_t doc_index(std::string_view doc_id) const;

  std::uint64_t seed_ = 0;
  std::size_t max_expansions_ = 3;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> doc_lookup_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<double> idf_;
  std::vector<kernels::PostingList> postings_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> forward_;  // sorted by term
  std::unordered_map<std::string, std::vector<Expansion>> expansion_override_;
  bool seeded_expansions_ = false;
};

/// Which reference retriever to build and with what parameters.
struct RetrieverSpec {
  std::string kind = "sparse";  // dense | sparse
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t expansions = 3;
};

std::unique_ptr<ScoringRetriever> make_reference_retriever(const RetrieverSpec& spec,
                                                           const CollectionStats& stats);

/// JSON index snapshot: spec + collection statistics. Enough to rebuild the
/// retriever without re-reading the corpus.
void write_index(const std::filesystem::path& path, const RetrieverSpec& spec,
                 const CollectionStats& stats);
std::pair<RetrieverSpec, CollectionStats> read_index(const std::filesystem::path& path);

}  // namespace agqr
