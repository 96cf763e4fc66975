#include "mohone/error.hpp"
#include "mohone/eval.hpp"
#include "mohone/kge.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

using namespace mohone;

namespace {

/// Exhaustive average-tie rank over the surviving candidates.
double oracle_rank(const std::vector<double>& scores, EntityId truth, const std::vector<EntityId>& filtered) {
  std::vector<double> kept;
  for (EntityId e = 0; e < scores.size(); ++e) {
    if (e != truth && std::find(filtered.begin(), filtered.end(), e) != filtered.end()) continue;
    kept.push_back(scores[e]);
  }
  std::sort(kept.begin(), kept.end(), std::greater<>());
  double first = 0, last = 0;
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (kept[i] == scores[truth]) {
      if (first == 0) first = static_cast<double>(i + 1);
      last = static_cast<double>(i + 1);
    }
  return std::floor((first + last) / 2 + 0.5);
}

}  // namespace

TEST_CASE("filtered rank examples") {
  SUBCASE("truth highest") { CHECK(rank_filtered(std::vector<double>{0.1, 0.9, 0.3}, 1, {}) == 1); }
  SUBCASE("five-way tie") { CHECK(rank_filtered(std::vector<double>{2, 2, 2, 2, 2}, 3, {}) == 3); }
  SUBCASE("filtered candidate ahead of the truth") {
    // Candidate 0 is another known answer; among {1, 2, 3} the truth (2) is second.
    const std::vector<double> scores{0.9, 0.8, 0.5, 0.1};
    CHECK(rank_raw(scores, 2) == 3);
    CHECK(rank_filtered(scores, 2, std::vector<EntityId>{0}) == 2);
  }
  SUBCASE("filtering never removes the truth") {
    CHECK(rank_filtered(std::vector<double>{0.1, 0.5}, 1, std::vector<EntityId>{1}) == 1);
    CHECK(rank_filtered(std::vector<double>{0.9, 0.5}, 1, std::vector<EntityId>{1, 1}) == 2);
  }
  SUBCASE("two-way tie rounds half up") { CHECK(rank_filtered(std::vector<double>{1, 1}, 0, {}) == 2); }
}

TEST_CASE("filtered rank agrees with exhaustive enumeration") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 12;
    std::vector<double> scores(n);
    for (auto& s : scores) s = level(rng);
    const auto truth = static_cast<EntityId>(rng() % n);
    std::vector<EntityId> filtered;
    for (EntityId e = 0; e < n; ++e)
      if (rng() % 3 == 0) filtered.push_back(e);
    const auto r = rank_filtered(scores, truth, filtered);
    CHECK(static_cast<double>(r) == oracle_rank(scores, truth, filtered));
    CHECK(r <= rank_raw(scores, truth));
  }
}

TEST_CASE("rank summaries") {
  const std::vector<int> hits{1, 3, 10};
  const auto r = summarize_ranks({1, 2, 4}, hits);
  CHECK(std::abs(r.mrr - (1.0 + 0.5 + 0.25) / 3) <= 1e-12);
  CHECK(r.mrr == doctest::Approx(0.583333).epsilon(1e-6));
  CHECK(r.hits.at(1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(r.hits.at(3) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(r.hits.at(10) == 1.0);
  const auto worse = summarize_ranks({1, 3, 4}, hits);
  CHECK(worse.mrr < r.mrr);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> ranks(20);
    for (auto& x : ranks) x = 1 + rng() % 30;
    const auto s = summarize_ranks(ranks, hits);
    double sum = 0;
    for (double rr : s.reciprocal_ranks) sum += rr;
    CHECK(std::abs(s.mrr - sum / 20) <= 1e-12);
    CHECK(s.hits.at(1) <= s.hits.at(3));
    CHECK(s.hits.at(3) <= s.hits.at(10));
  }
}

TEST_CASE("evaluate uses any scorer") {
  // Scores are minus the position of each entity in a fixed permutation, so the
  // truth's rank is exactly its position once the other known answers are removed.
  const std::size_t n = 12;
  std::vector<EntityId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  std::vector<std::size_t> position(n);
  for (std::size_t i = 0; i < n; ++i) position[perm[i]] = i + 1;
  const Scorer scorer = [&](QuerySide, EntityId, RelationId, std::span<double> out) {
    for (EntityId e = 0; e < n; ++e) out[e] = -static_cast<double>(position[e]);
  };
  const std::vector<Triple> test{{0, 0, 5}, {3, 1, 7}, {11, 0, 2}};
  const auto result = evaluate(scorer, n, test, FilterIndex(test));
  REQUIRE(result.num_queries() == 6);
  CHECK(result.ranks[0] == position[0]);
  CHECK(result.ranks[1] == position[5]);
  CHECK(result.ranks[2] == position[3]);
  CHECK(result.ranks[3] == position[7]);
  CHECK(result.ranks[4] == position[11]);
  CHECK(result.ranks[5] == position[2]);
}

TEST_CASE("evaluate filters other known answers") {
  const Scorer scorer = [](QuerySide, EntityId, RelationId, std::span<double> out) {
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = static_cast<double>(out.size() - e);
  };
  // Tail query (0, r, ?) with truth 2: entity 1 is another known tail and is removed,
  // entity 0 still outranks the truth.
  const std::vector<Triple> known{{0, 0, 1}, {0, 0, 2}};
  const std::vector<Triple> test{{0, 0, 2}};
  const auto filtered = evaluate(scorer, 4, test, FilterIndex(known));
  CHECK(filtered.ranks[1] == 2);
  const auto unfiltered = evaluate(scorer, 4, test, FilterIndex(test));
  CHECK(unfiltered.ranks[1] == 3);
}

TEST_CASE("perfect model on a bijection") {
  KGEmbedding emb;
  emb.model = KgeModel::kTransE;
  emb.dim = 2;
  emb.entities.resize(4, 2);
  emb.entities << 0, 0, 1, 0, 0, 5, 1, 5;
  emb.relations.resize(1, 2);
  emb.relations << 1, 0;
  const std::vector<Triple> test{{0, 0, 1}, {2, 0, 3}};
  const auto r = evaluate(make_scorer(emb), 4, test, FilterIndex(test));
  CHECK(r.mrr == 1.0);
}

TEST_CASE("evaluation is schedule independent") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(-1, 1);
  KGEmbedding emb;
  emb.model = KgeModel::kDistMult;
  emb.dim = 4;
  emb.entities.resize(30, 4);
  emb.relations.resize(3, 4);
  for (Eigen::Index i = 0; i < emb.entities.size(); ++i) emb.entities.data()[i] = unif(rng);
  for (Eigen::Index i = 0; i < emb.relations.size(); ++i) emb.relations.data()[i] = unif(rng);
  std::vector<Triple> test;
  for (int i = 0; i < 50; ++i)
    test.push_back({static_cast<EntityId>(rng() % 30), static_cast<RelationId>(rng() % 3),
                    static_cast<EntityId>(rng() % 30)});
  const FilterIndex filter(test);
  EvalOptions serial, parallel;
  parallel.threads = 4;
  const auto a = evaluate(make_scorer(emb), 30, test, filter, serial);
  const auto b = evaluate(make_scorer(emb), 30, test, filter, parallel);
  CHECK(a.ranks == b.ranks);
  CHECK(a.mrr == b.mrr);
}

TEST_CASE("out-of-vocabulary queries are skipped") {
  const Scorer scorer = [](QuerySide, EntityId, RelationId, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  const std::vector<Triple> test{{0, 0, 1}, {0, 0, 9}};
  const auto r = evaluate(scorer, 3, test, FilterIndex(test), {}, 5);
  CHECK(r.num_queries() == 2);
  CHECK(r.skipped == 7);
  CHECK_THROWS_AS(evaluate(scorer, 3, std::vector<Triple>{}, FilterIndex()), DataError);
}

TEST_CASE("paired significance") {
  SUBCASE("identical inputs") {
    const std::vector<double> a{0.1, 0.5, 1.0, 0.25};
    const auto r = paired_significance(a, a);
    CHECK(r.p_value == 1.0);
    CHECK(!r.significant);
  }
  SUBCASE("constant shift") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unif(0, 0.5);
    std::vector<double> b(1000), a(1000);
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] = unif(rng);
      a[i] = b[i] + 0.5;
    }
    const auto r = paired_significance(a, b);
    CHECK(r.p_value < 0.001);
    CHECK(r.significant);
    CHECK(r.mean_difference == doctest::Approx(0.5));
  }
  SUBCASE("two queries are never significant") {
    // Only 4 ordered resamples exist, so the smallest attainable p is (0 + 1) / (4 + 1).
    const auto equal = paired_significance(std::vector<double>{1.0, 1.0}, std::vector<double>{0.5, 0.5});
    CHECK(equal.p_value == doctest::Approx(0.2));
    CHECK(!equal.significant);
    const auto spread = paired_significance(std::vector<double>{1.0, 1.0}, std::vector<double>{0.5, 0.9});
    CHECK(spread.p_value >= 0.2 - 1e-12);
    CHECK(!spread.significant);
  }
  SUBCASE("sign of the shift does not matter") {
    std::vector<double> a(200), b(200);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unif(0, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = unif(rng);
      b[i] = std::min(1.0, a[i] + 0.05 * unif(rng));
    }
    CHECK(paired_significance(a, b).p_value == paired_significance(b, a).p_value);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(paired_significance(std::vector<double>{1.0}, std::vector<double>{1.0, 0.5}), DataError);
  }
}

TEST_CASE("rank CSV round trip") {
  const auto path = std::filesystem::temp_directory_path() / "mohone_ranks.csv";
  const std::vector<int> hits{1, 3, 10};
  const auto r = summarize_ranks({1, 7, 3, 2}, hits);
  write_rank_csv(r, path);
  CHECK(read_rank_csv(path) == r.reciprocal_ranks);
  std::filesystem::remove(path);
}
