#include "agqr/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "agqr/error.hpp"
#include "agqr/hashing.hpp"

namespace agqr {

std::vector<std::string> RankedList::head_ids(std::size_t limit) const {
  std::vector<std::string> ids;
  const std::size_t n = std::min(limit, entries.size());
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(entries[i].doc_id);
  return ids;
}

std::vector<AttributionVector> ScoringRetriever::attribute(const Query& query,
                                                           std::span<const std::string> doc_ids,
                                                           int steps) const {
  return kernels::integrated_gradients(*this, query.tokens, doc_ids, steps);
}

CollectionStats CollectionStats::of(const Corpus& corpus) {
  CollectionStats s;
  s.doc_ids.reserve(corpus.size());
  for (const Document& d : corpus.documents()) s.doc_ids.push_back(d.id);
  s.vocabulary = corpus.vocabulary();
  s.doc_freq = corpus.doc_freqs();
  s.term_counts.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) s.term_counts.push_back(corpus.term_counts(i));
  return s;
}

namespace {

void require_k(std::size_t k) {
  if (k == 0) throw Error("search depth k must be at least 1");
}

std::unordered_map<std::string, std::size_t> lookup_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> m;
  m.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!m.emplace(ids[i], i).second) throw Error("duplicate document id " + ids[i]);
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// DenseModel

std::vector<double> DenseModel::seeded_embedding(std::string_view word, std::uint64_t seed, std::size_t dim) {
  SplitMix64 rng = word_stream(word, seed);
  std::vector<double> e(dim);
  for (double& x : e) x = 2.0 * rng.next_unit() - 1.0;
  return e;
}

DenseModel DenseModel::build(const CollectionStats& stats, Options options) {
  if (options.dim == 0) throw Error("dense dimension must be positive");
  const std::size_t dim = options.dim;
  std::unordered_map<std::string, std::vector<double>> embeddings;
  embeddings.reserve(stats.vocabulary.size());
  std::vector<const std::vector<double>*> by_term(stats.vocabulary.size());
  for (std::size_t t = 0; t < stats.vocabulary.size(); ++t) {
    auto [it, _] = embeddings.emplace(stats.vocabulary[t], seeded_embedding(stats.vocabulary[t], options.seed, dim));
    by_term[t] = &it->second;
  }
  std::vector<double> doc_vectors(stats.doc_ids.size() * dim, 0.0);
  for (std::size_t d = 0; d < stats.doc_ids.size(); ++d) {
    double* row = doc_vectors.data() + d * dim;
    std::uint64_t length = 0;
    for (const auto& [term, count] : stats.term_counts[d]) {
      const std::vector<double>& e = *by_term.at(term);
      for (std::size_t j = 0; j < dim; ++j) row[j] += static_cast<double>(count) * e[j];
      length += count;
    }
    if (length > 0) {
      for (std::size_t j = 0; j < dim; ++j) row[j] /= static_cast<double>(length);
    }
  }
  return DenseModel(dim, stats.doc_ids, std::move(doc_vectors), std::move(embeddings));
}

DenseModel::DenseModel(std::size_t dim, std::vector<std::string> doc_ids, std::vector<double> doc_vectors,
                       std::unordered_map<std::string, std::vector<double>> embeddings)
    : dim_(dim),
      doc_ids_(std::move(doc_ids)),
      doc_lookup_(lookup_of(doc_ids_)),
      doc_vectors_(std::move(doc_vectors)),
      embeddings_(std::move(embeddings)) {
  if (dim_ == 0) throw Error("dense dimension must be positive");
  if (doc_vectors_.size() != doc_ids_.size() * dim_) throw Error("document vector table has the wrong size");
  for (const auto& [word, e] : embeddings_) {
    if (e.size() != dim_) throw Error("embedding of '" + word + "' has the wrong dimension");
  }
}

std::size_t DenseModel::doc_index(std::string_view doc_id) const {
  const auto it = doc_lookup_.find(std::string(doc_id));
  if (it == doc_lookup_.end()) throw Error("unknown document id " + std::string(doc_id));
  return it->second;
}

std::vector<double> DenseModel::embedding(std::string_view word) const {
  const auto it = embeddings_.find(std::string(word));
  if (it == embeddings_.end()) return std::vector<double>(dim_, 0.0);
  return it->second;
}

std::span<const double> DenseModel::doc_vector(std::size_t doc_index) const {
  return std::span<const double>(doc_vectors_).subspan(doc_index * dim_, dim_);
}

std::vector<double> DenseModel::query_vector(std::span<const std::string> tokens) const {
  const InputPoint x = input_of(tokens);
  std::vector<double> q(dim_, 0.0);
  if (x.tokens == 0) return q;
  for (std::size_t i = 0; i < x.tokens; ++i)
    for (std::size_t j = 0; j < dim_; ++j) q[j] += x.at(i, j);
  for (double& v : q) v /= static_cast<double>(x.tokens);
  return q;
}

RankedList DenseModel::search(const Query& query, std::size_t k) const {
  require_k(k);
  const std::vector<double> q = query_vector(query.tokens);
  std::vector<double> scores(doc_ids_.size());
  kernels::dense_scores(doc_vectors_, dim_, q, scores);
  return RankedList{query.id, kernels::top_k(scores, doc_ids_, k, false)};
}

double DenseModel::score(std::span<const std::string> tokens, std::string_view doc_id) const {
  return score_at(tokens, input_of(tokens), doc_id);
}

InputPoint DenseModel::input_of(std::span<const std::string> tokens) const {
  InputPoint x(tokens.size(), dim_);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto it = embeddings_.find(tokens[i]);
    if (it == embeddings_.end()) continue;
    std::copy(it->second.begin(), it->second.end(), x.values.begin() + static_cast<std::ptrdiff_t>(i * dim_));
  }
  return x;
}

InputPoint DenseModel::baseline_of(std::span<const std::string> tokens) const {
  return InputPoint(tokens.size(), dim_);
}

double DenseModel::score_at(std::span<const std::string> tokens, const InputPoint& point,
                            std::string_view doc_id) const {
  const std::size_t d = doc_index(doc_id);
  if (point.tokens != tokens.size() || point.width != dim_) throw Error("dense input point has the wrong shape");
  if (point.tokens == 0) return 0.0;
  std::vector<double> q(dim_, 0.0);
  for (std::size_t i = 0; i < point.tokens; ++i)
    for (std::size_t j = 0; j < dim_; ++j) q[j] += point.at(i, j);
  for (double& v : q) v /= static_cast<double>(point.tokens);
  double out = 0.0;
  kernels::serial::dense_scores(doc_vector(d), dim_, q, std::span<double>(&out, 1));
  return out;
}

InputPoint DenseModel::gradient(std::span<const std::string> tokens, const InputPoint& point,
                                std::string_view doc_id) const {
  const std::size_t d = doc_index(doc_id);
  if (point.tokens != tokens.size() || point.width != dim_) throw Error("dense input point has the wrong shape");
  InputPoint g(point.tokens, dim_);
  const auto v = doc_vector(d);
  const double n = static_cast<double>(point.tokens);
  for (std::size_t i = 0; i < point.tokens; ++i)
    for (std::size_t j = 0; j < dim_; ++j) g.at(i, j) = v[j] / n;
  return g;
}

// ---------------------------------------------------------------------------
// SparseModel

double SparseModel::idf_formula(std::size_t n_docs, std::size_t df) {
  const double n = static_cast<double>(n_docs);
  const double f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

SparseModel SparseModel::build(const CollectionStats& stats, Options options) {
  SparseModel m;
  m.seed_ = options.seed;
  m.max_expansions_ = options.expansions;
  m.seeded_expansions_ = true;
  m.doc_ids_ = stats.doc_ids;
  m.doc_lookup_ = lookup_of(m.doc_ids_);
  m.vocab_ = stats.vocabulary;
  m.term_ids_.reserve(m.vocab_.size());
  for (std::uint32_t t = 0; t < m.vocab_.size(); ++t) m.term_ids_.emplace(m.vocab_[t], t);
  m.idf_.resize(m.vocab_.size());
  for (std::size_t t = 0; t < m.vocab_.size(); ++t) m.idf_[t] = idf_formula(m.doc_ids_.size(), stats.doc_freq.at(t));

  std::vector<std::vector<std::pair<std::uint32_t, double>>> forward(m.doc_ids_.size());
  for (std::size_t d = 0; d < m.doc_ids_.size(); ++d) {
    forward[d].reserve(stats.term_counts[d].size());
    for (const auto& [term, count] : stats.term_counts[d]) forward[d].emplace_back(term, static_cast<double>(count));
  }
  m.index_documents(std::move(forward));
  return m;
}

SparseModel SparseModel::from_parts(Parts parts) {
  if (parts.doc_terms.size() != parts.doc_ids.size()) throw Error("doc_terms must have one entry per document");
  SparseModel m;
  m.doc_ids_ = std::move(parts.doc_ids);
  m.doc_lookup_ = lookup_of(m.doc_ids_);
  for (const auto& terms : parts.doc_terms)
    for (const auto& [term, tf] : terms) m.vocab_.push_back(term);
  std::sort(m.vocab_.begin(), m.vocab_.end());
  m.vocab_.erase(std::unique(m.vocab_.begin(), m.vocab_.end()), m.vocab_.end());
  for (std::uint32_t t = 0; t < m.vocab_.size(); ++t) m.term_ids_.emplace(m.vocab_[t], t);

  std::vector<std::size_t> df(m.vocab_.size(), 0);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> forward(m.doc_ids_.size());
  for (std::size_t d = 0; d < m.doc_ids_.size(); ++d) {
    std::map<std::uint32_t, double> merged;
    for (const auto& [term, tf] : parts.doc_terms[d]) {
      if (tf < 0) throw Error("negative term frequency for " + term);
      merged[m.term_ids_.at(term)] += tf;
    }
    for (const auto& [term, tf] : merged) {
      if (tf > 0) {
        forward[d].emplace_back(term, tf);
        ++df[term];
      }
    }
  }
  m.idf_.resize(m.vocab_.size());
  for (std::size_t t = 0; t < m.vocab_.size(); ++t) {
    const auto it = parts.idf_override.find(m.vocab_[t]);
    m.idf_[t] = it != parts.idf_override.end() ? it->second : idf_formula(m.doc_ids_.size(), df[t]);
  }
  for (auto& [word, list] : parts.expansions) {
    const bool has_self = std::any_of(list.begin(), list.end(),
                                      [&](const Expansion& e) { return e.term == word && e.weight == 1.0; });
    if (!has_self) throw Error("expansion of '" + word + "' must map to itself with weight 1.0");
    for (const Expansion& e : list) {
      if (!(e.weight > 0.0 && e.weight <= 1.0)) throw Error("expansion weights must lie in (0, 1]");
    }
  }
  m.expansion_override_ = std::move(parts.expansions);
  m.index_documents(std::move(forward));
  return m;
}

void SparseModel::index_documents(std::vector<std::vector<std::pair<std::uint32_t, double>>> forward) {
  forward_ = std::move(forward);
  postings_.assign(vocab_.size(), {});
  for (std::size_t d = 0; d < forward_.size(); ++d) {
    for (const auto& [term, tf] : forward_[d]) postings_[term].push_back({static_cast<std::uint32_t>(d), tf});
  }
}

std::vector<SparseModel::Expansion> SparseModel::expansion(std::string_view word) const {
  const std::string key(word);
  if (const auto it = expansion_override_.find(key); it != expansion_override_.end()) return it->second;
  std::vector<Expansion> out{{key, 1.0}};
  if (!seeded_expansions_ || vocab_.empty() || !term_ids_.contains(key)) return out;
  SplitMix64 rng = word_stream(word, seed_);
  for (std::size_t e = 0; e < max_expansions_; ++e) {
    const std::string& target = vocab_[rng.next() % vocab_.size()];
    const double weight = 0.5 * (1.0 - rng.next_unit());
    const bool taken = std::any_of(out.begin(), out.end(), [&](const Expansion& x) { return x.term == target; });
    if (!taken) out.push_back({target, weight});
  }
  return out;
}

double SparseModel::idf(std::string_view term) const {
  const auto it = term_ids_.find(std::string(term));
  if (it == term_ids_.end()) return idf_formula(doc_ids_.size(), 0);
  return idf_[it->second];
}

std::vector<SparseModel::ExpandedTerm> SparseModel::expand(std::span<const std::string> tokens) const {
  std::map<std::uint32_t, std::vector<std::pair<std::size_t, double>>> by_term;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const Expansion& e : expansion(tokens[i])) {
      const auto it = term_ids_.find(e.term);
      if (it == term_ids_.end()) continue;  // no postings, contributes nothing
      by_term[it->second].emplace_back(i, e.weight);
    }
  }
  std::vector<ExpandedTerm> out;
  out.reserve(by_term.size());
  for (auto& [term, sources] : by_term) out.push_back({term, std::move(sources)});
  return out;
}

double SparseModel::term_tf(std::size_t doc, std::uint32_t term) const {
  const auto& row = forward_[doc];
  const auto it = std::lower_bound(row.begin(), row.end(), term,
                                   [](const std::pair<std::uint32_t, double>& p, std::uint32_t t) { return p.first < t; });
  return (it != row.end() && it->first == term) ? it->second : 0.0;
}

std::size_t SparseModel::doc_index(std::string_view doc_id) const {
  const auto it = doc_lookup_.find(std::string(doc_id));
  if (it == doc_lookup_.end()) throw Error("unknown document id " + std::string(doc_id));
  return it->second;
}

namespace {

double saturated_mass(const std::vector<std::pair<std::size_t, double>>& sources, std::span<const double> u) {
  double q = 0.0;
  for (const auto& [i, a] : sources) q += u[i] * a;
  return q;
}

}  // namespace

double SparseModel::score_weights(std::span<const std::string> tokens, std::span<const double> weights,
                                  std::string_view doc_id) const {
  if (weights.size() != tokens.size()) throw Error("sparse weights must match the token count");
  for (double w : weights) {
    if (w < 0.0 || std::isnan(w)) throw Error("sparse token weights must be non-negative");
  }
  const std::size_t d = doc_index(doc_id);
  double total = 0.0;
  for (const ExpandedTerm& t : expand(tokens)) {
    const double tf = term_tf(d, t.term);
    if (tf == 0.0) continue;
    const double weight = idf_[t.term] * std::log1p(saturated_mass(t.sources, weights));
    total += weight * tf;
  }
  return total;
}

RankedList SparseModel::search(const Query& query, std::size_t k) const {
  require_k(k);
  const std::vector<double> ones(query.tokens.size(), 1.0);
  std::vector<kernels::WeightedTerm> terms;
  for (const ExpandedTerm& t : expand(query.tokens)) {
    terms.push_back({t.term, idf_[t.term] * std::log1p(saturated_mass(t.sources, ones))});
  }
  std::vector<double> scores(doc_ids_.size(), 0.0);
  kernels::sparse_scores(postings_, terms, scores);
  return RankedList{query.id, kernels::top_k(scores, doc_ids_, k, true)};
}

double SparseModel::score(std::span<const std::string> tokens, std::string_view doc_id) const {
  const std::vector<double> ones(tokens.size(), 1.0);
  return score_weights(tokens, ones, doc_id);
}

InputPoint SparseModel::input_of(std::span<const std::string> tokens) const {
  return InputPoint(tokens.size(), 1, 1.0);
}

InputPoint SparseModel::baseline_of(std::span<const std::string> tokens) const {
  return InputPoint(tokens.size(), 1, 0.0);
}

double SparseModel::score_at(std::span<const std::string> tokens, const InputPoint& point,
                             std::string_view doc_id) const {
  if (point.width != 1) throw Error("sparse input point must have width 1");
  return score_weights(tokens, point.values, doc_id);
}

InputPoint SparseModel::gradient(std::span<const std::string> tokens, const InputPoint& point,
                                 std::string_view doc_id) const {
  if (point.width != 1 || point.tokens != tokens.size()) throw Error("sparse input point has the wrong shape");
  const std::size_t d = doc_index(doc_id);
  InputPoint g(tokens.size(), 1);
  for (const ExpandedTerm& t : expand(tokens)) {
    const double tf = term_tf(d, t.term);
    if (tf == 0.0) continue;
    const double c = idf_[t.term] * tf / (1.0 + saturated_mass(t.sources, point.values));
    for (const auto& [i, a] : t.sources) g.values[i] += c * a;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Factory and snapshots

std::unique_ptr<ScoringRetriever> make_reference_retriever(const RetrieverSpec& spec, const CollectionStats& stats) {
  if (spec.kind == "dense") return std::make_unique<DenseModel>(DenseModel::build(stats, {spec.seed, spec.dim}));
  if (spec.kind == "sparse")
    return std::make_unique<SparseModel>(SparseModel::build(stats, {spec.seed, spec.expansions}));
  throw Error("unknown reference retriever kind '" + spec.kind + "'");
}

namespace {
constexpr const char* kIndexFormat = "agqr-index";
constexpr int kIndexVersion = 1;
}  // namespace

void write_index(const std::filesystem::path& path, const RetrieverSpec& spec, const CollectionStats& stats) {
  using json = nlohmann::json;
  json docs = json::array();
  for (std::size_t d = 0; d < stats.doc_ids.size(); ++d) {
    json terms = json::array();
    std::uint64_t length = 0;
    for (const auto& [term, count] : stats.term_counts[d]) {
      terms.push_back({term, count});
      length += count;
    }
    docs.push_back({{"id", stats.doc_ids[d]}, {"length", length}, {"terms", std::move(terms)}});
  }
  const json snapshot = {{"format", kIndexFormat},
                         {"version", kIndexVersion},
                         {"kind", spec.kind},
                         {"seed", spec.seed},
                         {"dim", spec.dim},
                         {"expansions", spec.expansions},
                         {"num_docs", stats.doc_ids.size()},
                         {"vocabulary", stats.vocabulary},
                         {"doc_freq", stats.doc_freq},
                         {"documents", std::move(docs)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << snapshot.dump() << '\n';
}

std::pair<RetrieverSpec, CollectionStats> read_index(const std::filesystem::path& path) {
  using json = nlohmann::json;
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, std::string("malformed index snapshot: ") + e.what());
  }
  try {
    if (j.at("format") != kIndexFormat || j.at("version") != kIndexVersion)
      throw Error(path.string() + ": not an agqr-index v1 snapshot");
    RetrieverSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.dim = j.at("dim").get<std::size_t>();
    spec.expansions = j.at("expansions").get<std::size_t>();
    CollectionStats stats;
    stats.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    stats.doc_freq = j.at("doc_freq").get<std::vector<std::uint32_t>>();
    if (stats.doc_freq.size() != stats.vocabulary.size()) throw Error(path.string() + ": doc_freq/vocabulary mismatch");
    for (const json& d : j.at("documents")) {
      stats.doc_ids.push_back(d.at("id").get<std::string>());
      TermCounts counts;
      for (const json& t : d.at("terms")) {
        const auto term = t.at(0).get<std::uint32_t>();
        if (term >= stats.vocabulary.size()) throw Error(path.string() + ": term index out of range");
        counts.emplace_back(term, t.at(1).get<std::uint32_t>());
      }
      stats.term_counts.push_back(std::move(counts));
    }
    if (stats.doc_ids.size() != j.at("num_docs").get<std::size_t>())
      throw Error(path.string() + ": document count mismatch");
    return {spec, stats};
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, std::string("invalid index snapshot: ") + e.what());
  }
}

}  // namespace agqr
