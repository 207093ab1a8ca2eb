#pragma once

// Independent reference computations used to freeze expected values. Nothing
// here calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/retriever.hpp"

namespace oracle {

// ---------------------------------------------------------------- metrics

inline double gain_of(const agqr::QrelsRow& row, const std::string& id) {
  auto it = row.find(id);
  return it == row.end() ? 0.0 : static_cast<double>(it->second);
}

inline double log2_via_ln(double x) { return std::log(x) / std::log(2.0); }

inline double dcg(const std::vector<double>& gains, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < gains.size() && i < k; ++i) s += gains[i] / log2_via_ln(static_cast<double>(i + 2));
  return s;
}

/// Ideal DCG by greedy selection of the largest remaining grade. For at most
/// `enumerate_limit` positive grades the greedy result is cross-checked by
/// enumerating every ordering of them.
inline double ideal_dcg(const agqr::QrelsRow& row, std::size_t k, std::size_t enumerate_limit = 7) {
  std::vector<double> pool;
  for (const auto& [id, g] : row)
    if (g > 0) pool.push_back(g);
  std::vector<double> greedy;
  std::vector<double> left = pool;
  while (!left.empty()) {
    auto it = std::max_element(left.begin(), left.end());
    greedy.push_back(*it);
    left.erase(it);
  }
  const double best_greedy = dcg(greedy, k);
  if (pool.size() <= enumerate_limit) {
    std::sort(pool.begin(), pool.end());
    double best = 0.0;
    do {
      best = std::max(best, dcg(pool, k));
    } while (std::next_permutation(pool.begin(), pool.end()));
    if (std::abs(best - best_greedy) > 1e-12) return std::nan("");
  }
  return best_greedy;
}

inline double ndcg(const std::vector<std::string>& ranking, const agqr::QrelsRow& row, std::size_t k) {
  std::vector<double> gains;
  for (const auto& id : ranking) gains.push_back(gain_of(row, id));
  const double ideal = ideal_dcg(row, k);
  return ideal > 0 ? dcg(gains, k) / ideal : 0.0;
}

/// AP@k by recounting hits above every relevant rank.
inline double map(const std::vector<std::string>& ranking, const agqr::QrelsRow& row, std::size_t k) {
  std::size_t relevant = 0;
  for (const auto& [id, g] : row) relevant += g > 0;
  if (relevant == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranking.size() && r < k; ++r) {
    if (gain_of(row, ranking[r]) <= 0) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= r; ++j) hits += gain_of(row, ranking[j]) > 0;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(relevant);
}

inline double precision(const std::vector<std::string>& ranking, const agqr::QrelsRow& row, std::size_t k) {
  std::set<std::string> top(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size())));
  std::size_t hits = 0;
  for (const auto& id : top) hits += gain_of(row, id) > 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

// ---------------------------------------------------------------- sparse IG

/// For one (query, doc) pair on the sparse scorer: c_v = idf_v * tf_v(d) and
/// the expansion weights a_{v,i}, assembled from the public tables and the
/// corpus term counts.
struct SparseTerms {
  std::map<std::string, double> c;                       // per term
  std::map<std::string, std::map<std::size_t, double>> a;  // term -> token -> weight
};

inline SparseTerms sparse_terms(const agqr::SparseModel& model, const agqr::Corpus& corpus,
                                const std::vector<std::string>& tokens, std::size_t doc_index) {
  SparseTerms out;
  std::map<std::string, double> tf;
  for (const auto& [term, count] : corpus.term_counts(doc_index)) tf[corpus.vocabulary()[term]] = count;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& e : model.expansion(tokens[i])) {
      out.a[e.term][i] += e.weight;
      auto it = tf.find(e.term);
      out.c[e.term] = it == tf.end() ? 0.0 : model.idf(e.term) * it->second;
    }
  }
  return out;
}

/// Exact IG along u: 0 -> 1:  IG_i = sum_v c_v a_{v,i} ln(1 + s_v) / s_v.
inline std::vector<double> sparse_ig_exact(const SparseTerms& t, std::size_t n_tokens) {
  std::vector<double> ig(n_tokens, 0.0);
  for (const auto& [term, per_token] : t.a) {
    double s = 0.0;
    for (const auto& [i, w] : per_token) s += w;
    const double c = t.c.at(term);
    for (const auto& [i, w] : per_token) ig[i] += c * w * std::log1p(s) / s;
  }
  return ig;
}

/// s(q, d) at u = 1:  sum_v c_v ln(1 + s_v).
inline double sparse_score_exact(const SparseTerms& t) {
  double total = 0.0;
  for (const auto& [term, per_token] : t.a) {
    double s = 0.0;
    for (const auto& [i, w] : per_token) s += w;
    total += t.c.at(term) * std::log1p(s);
  }
  return total;
}

// ---------------------------------------------------------------- gradients

/// Central finite differences of score_at around `point`.
inline agqr::InputPoint finite_difference_gradient(const agqr::DifferentiableScorer& scorer,
                                                   const std::vector<std::string>& tokens,
                                                   const agqr::InputPoint& point, const std::string& doc,
                                                   double h = 1e-4) {
  agqr::InputPoint g(point.tokens, point.width);
  for (std::size_t j = 0; j < point.values.size(); ++j) {
    agqr::InputPoint plus = point, minus = point;
    plus.values[j] += h;
    minus.values[j] -= h;
    g.values[j] = (scorer.score_at(tokens, plus, doc) - scorer.score_at(tokens, minus, doc)) / (2 * h);
  }
  return g;
}

/// Brute-force ranking: every document scored one by one, then sorted by the
/// ranking rule.
inline std::vector<agqr::ScoredDoc> brute_force_rank(const agqr::DifferentiableScorer& scorer,
                                                     const std::vector<std::string>& tokens,
                                                     const std::vector<std::string>& doc_ids, std::size_t k,
                                                     bool positive_only) {
  std::vector<agqr::ScoredDoc> all;
  for (const auto& id : doc_ids) {
    const double s = scorer.score(tokens, id);
    if (!positive_only || s > 0) all.push_back({id, s});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace oracle
