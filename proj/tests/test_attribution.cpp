#include <doctest.h>

#include <cmath>

#include "agqr/attribution.hpp"
#include "agqr/error.hpp"
#include "agqr/retriever.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using agqr::Normalization;
using Tokens = std::vector<std::string>;

namespace {

agqr::DenseModel toy_dense() {
  return agqr::DenseModel(2, {"d1", "d2"}, {2.0, 4.0, 2.0, 4.0}, {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}});
}

agqr::SparseModel single_term(double c) {
  agqr::SparseModel::Parts p;
  p.doc_ids = {"d"};
  p.doc_terms = {{{"a", 1.0}}};
  p.idf_override = {{"a", c}};
  p.expansions = {{"a", {{"a", 1.0}}}};
  return agqr::SparseModel::from_parts(p);
}

agqr::AttributionVector vec(std::vector<double> v) {
  agqr::AttributionVector a;
  a.values = std::move(v);
  return a;
}

}  // namespace

TEST_CASE("ig_single examples") {
  const auto dense = toy_dense();
  const Tokens ab{"a", "b"};
  const auto ig = agqr::ig_single(ab, "d1", 1, dense);
  REQUIRE(ig.values.size() == 2);
  CHECK(ig.values[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ig.values[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(ig.values[0] + ig.values[1] == doctest::Approx(dense.score(ab, "d1")));
  CHECK(ig.steps == 1);
  CHECK(ig.baseline == "zero");
  CHECK(ig.doc_id == "d1");

  // Out-of-vocabulary tokens sit at the zero baseline and get nothing.
  const auto oov = agqr::ig_single(Tokens{"zz", "yy"}, "d1", 8, dense);
  CHECK(oov.values == std::vector<double>{0.0, 0.0});

  for (double c : {0.5, 2.0, 7.0}) {
    const auto m = single_term(c);
    const auto s = agqr::ig_single(Tokens{"a"}, "d", 256, m);
    CHECK(std::abs(s.values[0] - c * std::log(2.0)) <= 1e-5 * c);
  }

  CHECK_THROWS_AS(agqr::ig_single(ab, "d1", 0, dense), agqr::Error);
  CHECK_THROWS_AS(agqr::ig_single(Tokens{}, "d1", 4, dense), agqr::Error);
  CHECK_THROWS_AS(agqr::ig_single(ab, "missing", 4, dense), agqr::Error);
}

TEST_CASE("completeness and convergence against the closed form on the sparse scorer") {
  const agqr::Corpus c = gen::random_corpus(31, 200, 150);
  const auto model = agqr::SparseModel::build(agqr::CollectionStats::of(c), {11, 3});
  gen::Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tokens q = gen::random_query_tokens(rng, 150);
    const std::size_t d = rng.below(c.size());
    const auto terms = oracle::sparse_terms(model, c, q, d);
    const auto exact = oracle::sparse_ig_exact(terms, q.size());
    const double s = oracle::sparse_score_exact(terms);
    CHECK(model.score(q, c.document(d).id) == doctest::Approx(s).epsilon(1e-12));

    const auto ig = agqr::ig_single(q, c.document(d).id, 256, model);
    double sum = 0.0;
    for (double v : ig.values) sum += v;
    CHECK(std::abs(sum - s) <= 1e-3 * std::max(1.0, std::abs(s)));
    CHECK(ig.completeness_residual == doctest::Approx(sum - s).epsilon(1e-9));
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(ig.values[i] == doctest::Approx(exact[i]).epsilon(1e-4));
  }
}

TEST_CASE("aggregate examples and errors") {
  std::vector<agqr::AttributionVector> two{vec({1, 2}), vec({3, 4})};
  CHECK(agqr::aggregate(two, 2) == std::vector<double>{2.0, 3.0});
  std::vector<agqr::AttributionVector> one{vec({5, -1})};
  CHECK(agqr::aggregate(one, 1) == std::vector<double>{5.0, -1.0});
  std::vector<agqr::AttributionVector> three{vec({1, 1, 1}), vec({2, 2, 2}), vec({3, 3, 3})};
  CHECK(agqr::aggregate(three, 3) == std::vector<double>{2.0, 2.0, 2.0});
  CHECK_THROWS_AS(agqr::aggregate(two, 0), agqr::Error);
  CHECK_THROWS_AS(agqr::aggregate(two, 3), agqr::Error);
  std::vector<agqr::AttributionVector> ragged{vec({1, 2}), vec({1})};
  CHECK_THROWS_AS(agqr::aggregate(ragged, 2), agqr::Error);
}

TEST_CASE("aggregate equals a brute-force mean") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(8), n = 1 + rng.below(10);
    std::vector<agqr::AttributionVector> vs;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> v(n);
      for (double& x : v) x = rng.range(-5, 5);
      vs.push_back(vec(v));
    }
    const auto got = agqr::aggregate(vs, k);
    for (std::size_t i = 0; i < n; ++i) {
      long double acc = 0;
      for (const auto& v : vs) acc += v.values[i];
      const double want = static_cast<double>(acc / k);
      CHECK(std::abs(got[i] - want) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(want)) * k);
    }
  }
}

TEST_CASE("normalize examples") {
  const std::vector<double> raw{1, -1, 2};
  const auto l1 = agqr::normalize(raw, Normalization::l1);
  CHECK(l1.values == std::vector<double>{0.25, -0.25, 0.5});
  CHECK_FALSE(l1.degenerate);

  const std::vector<double> zeros{0, 0};
  const auto z = agqr::normalize(zeros, Normalization::l1);
  CHECK(z.values == zeros);
  CHECK(z.degenerate);

  const std::vector<double> r246{2, 4, 6};
  CHECK(agqr::normalize(r246, Normalization::minmax).values == std::vector<double>{0.0, 0.5, 1.0});
  const auto zs = agqr::normalize(r246, Normalization::zscore);
  const double sd = std::sqrt(8.0 / 3.0);
  CHECK(zs.values[0] == doctest::Approx(-2.0 / sd));
  CHECK(zs.values[1] == doctest::Approx(0.0));
  CHECK(zs.values[2] == doctest::Approx(2.0 / sd));

  const std::vector<double> flat{3, 3, 3};
  CHECK(agqr::normalize(flat, Normalization::minmax).degenerate);
  CHECK(agqr::normalize(flat, Normalization::zscore).degenerate);
  CHECK(agqr::normalize(flat, Normalization::zscore).values == flat);
  CHECK(agqr::normalize(raw, Normalization::none).values == raw);

  CHECK(agqr::parse_normalization("minmax") == Normalization::minmax);
  CHECK(agqr::to_string(Normalization::zscore) == "zscore");
  CHECK_THROWS_AS(agqr::parse_normalization("softmax"), agqr::Error);
}

TEST_CASE("l1 normalization is invariant to positive scaling") {
  gen::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(1 + rng.below(8));
    for (double& x : raw) x = rng.range(-1, 1);
    const double c = std::exp(rng.range(-5, 5));
    std::vector<double> scaled = raw;
    for (double& x : scaled) x *= c;
    const auto a = agqr::normalize(raw, Normalization::l1).values;
    const auto b = agqr::normalize(scaled, Normalization::l1).values;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }
}

TEST_CASE("attribute_query") {
  const auto dense = toy_dense();
  const auto q = agqr::Query::from_text("q", "a b");

  SUBCASE("identical documents give the per-document vector") {
    const agqr::RankedList ranked{"q", {{"d1", 3.0}, {"d2", 3.0}}};
    const auto aq = agqr::attribute_query(q, ranked, 5, 1, dense, Normalization::none);
    CHECK(aq.k_used == 2);
    CHECK(aq.doc_ids == std::vector<std::string>{"d1", "d2"});
    CHECK(aq.raw[0] == doctest::Approx(1.0));
    CHECK(aq.raw[1] == doctest::Approx(2.0));
    CHECK(aq.raw == aq.per_doc[0].values);
  }

  SUBCASE("list shorter than k averages over what is there") {
    const agqr::Corpus c = gen::random_corpus(40, 50, 30);
    const auto model = agqr::SparseModel::build(agqr::CollectionStats::of(c), {1, 3});
    const agqr::Query q2{"q2", "", {"w0", "w1", "w2"}};
    auto ranked = model.search(q2, 3);
    REQUIRE(ranked.size() == 3);
    const auto aq = agqr::attribute_query(q2, ranked, 5, 32, model, Normalization::l1);
    CHECK(aq.k_used == 3);
    CHECK(aq.per_doc.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      double m = 0;
      for (const auto& v : aq.per_doc) m += v.values[i];
      CHECK(aq.raw[i] == doctest::Approx(m / 3));
    }
    CHECK(aq.normalized == agqr::normalize(aq.raw, Normalization::l1).values);
  }

  SUBCASE("head of a long list only") {
    const agqr::Corpus c = gen::random_corpus(41, 80, 30);
    const auto model = agqr::SparseModel::build(agqr::CollectionStats::of(c), {1, 3});
    const agqr::Query q2{"q2", "", {"w0", "w3"}};
    const auto ranked = model.search(q2, 100);
    REQUIRE(ranked.size() > 5);
    const auto aq = agqr::attribute_query(q2, ranked, 5, 8, model, Normalization::l1);
    CHECK(aq.doc_ids == ranked.head_ids(5));
  }

  SUBCASE("empty list falls back to uniform scores") {
    const auto q4 = agqr::Query::from_text("q4", "a b c d");
    const auto aq = agqr::attribute_query(q4, agqr::RankedList{"q4", {}}, 5, 8, dense, Normalization::l1);
    CHECK(aq.no_evidence);
    CHECK(aq.k_used == 0);
    CHECK(aq.raw == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    CHECK(aq.normalized == std::vector<double>{0.25, 0.25, 0.25, 0.25});
  }
}
