#include "mohone/eval.hpp"

#include "mohone/error.hpp"
#include "mohone/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mohone {

Scorer make_scorer(const KGEmbedding& emb) {
  return [&emb](QuerySide side, EntityId anchor, RelationId r, std::span<double> scores) {
    const auto width = static_cast<std::size_t>(emb.entities.cols());
    const std::span<const double> a(emb.entities.data() + anchor * width, width);
    const std::span<const double> rel(emb.relations.data() + r * width, width);
    for (std::size_t e = 0; e < scores.size(); ++e) {
      const std::span<const double> cand(emb.entities.data() + e * width, width);
      scores[e] = side == QuerySide::kTail ? score(emb.model, a, rel, cand) : score(emb.model, cand, rel, a);
    }
  };
}

FilterIndex::FilterIndex(std::span<const Triple> known) { add(known); }

void FilterIndex::add(std::span<const Triple> known) {
  for (const auto& t : known) {
    heads_[key(t.tail, t.relation)].push_back(t.head);
    tails_[key(t.head, t.relation)].push_back(t.tail);
  }
  for (auto* m : {&heads_, &tails_}) {
    for (auto& [k, v] : *m) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
}

std::span<const EntityId> FilterIndex::known_answers(QuerySide side, EntityId anchor, RelationId r) const {
  const auto& m = side == QuerySide::kHead ? heads_ : tails_;
  if (auto it = m.find(key(anchor, r)); it != m.end()) return it->second;
  return {};
}

std::size_t rank_filtered(std::span<const double> scores, EntityId truth, std::span<const EntityId> filtered) {
  if (truth >= scores.size()) throw DataError("rank_filtered: truth entity out of range");
  const double target = scores[truth];
  std::size_t greater = 0, ties = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e == truth) continue;
    if (scores[e] > target) ++greater;
    else if (scores[e] == target) ++ties;
  }
  std::vector<EntityId> drop(filtered.begin(), filtered.end());
  std::sort(drop.begin(), drop.end());
  drop.erase(std::unique(drop.begin(), drop.end()), drop.end());
  for (EntityId e : drop) {
    if (e == truth || e >= scores.size()) continue;
    if (scores[e] > target) --greater;
    else if (scores[e] == target) --ties;
  }
  return 1 + greater + (ties + 1) / 2;
}

std::size_t rank_raw(std::span<const double> scores, EntityId truth) { return rank_filtered(scores, truth, {}); }

EvalResult summarize_ranks(std::vector<std::size_t> ranks, std::span<const int> hits_at) {
  EvalResult r;
  r.reciprocal_ranks.reserve(ranks.size());
  double sum = 0.0;
  for (std::size_t rank : ranks) {
    const double rr = 1.0 / static_cast<double>(rank);
    r.reciprocal_ranks.push_back(rr);
    sum += rr;
  }
  const double n = static_cast<double>(ranks.size());
  r.mrr = ranks.empty() ? 0.0 : sum / n;
  for (int k : hits_at) {
    const auto hit = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t x) { return x <= static_cast<std::size_t>(k); });
    r.hits[k] = ranks.empty() ? 0.0 : static_cast<double>(hit) / n;
  }
  r.ranks = std::move(ranks);
  return r;
}

EvalResult evaluate(const Scorer& scorer, std::size_t num_entities, std::span<const Triple> test,
                    const FilterIndex& filter, const EvalOptions& options, std::size_t skipped_queries) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  std::vector<std::size_t> ranks(2 * test.size(), 0);
  std::vector<char> valid(test.size(), 1);
  parallel_for(test.size(), options.threads, [&](std::size_t i) {
    const Triple& t = test[i];
    if (t.head >= num_entities || t.tail >= num_entities) {
      valid[i] = 0;
      return;
    }
    std::vector<double> scores(num_entities);
    scorer(QuerySide::kHead, t.tail, t.relation, scores);
    ranks[2 * i] = rank_filtered(scores, t.head, filter.known_answers(QuerySide::kHead, t.tail, t.relation));
    scorer(QuerySide::kTail, t.head, t.relation, scores);
    ranks[2 * i + 1] = rank_filtered(scores, t.tail, filter.known_answers(QuerySide::kTail, t.head, t.relation));
  });
  std::vector<std::size_t> kept;
  kept.reserve(ranks.size());
  std::size_t skipped = skipped_queries;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!valid[i]) {
      skipped += 2;
      continue;
    }
    kept.push_back(ranks[2 * i]);
    kept.push_back(ranks[2 * i + 1]);
  }
  if (kept.empty()) throw DataError("evaluate: every test query was skipped");
  EvalResult r = summarize_ranks(std::move(kept), options.hits_at);
  r.skipped = skipped;
  return r;
}

SignificanceResult paired_significance(std::span<const double> rr_a, std::span<const double> rr_b,
                                       std::size_t resamples, double alpha, std::uint64_t seed) {
  if (rr_a.size() != rr_b.size()) {
    throw DataError("paired_significance: length mismatch (" + std::to_string(rr_a.size()) + " vs " +
                    std::to_string(rr_b.size()) + ")");
  }
  const std::size_t n = rr_a.size();
  if (n == 0) throw DataError("paired_significance: no queries");
  if (resamples < 1) throw ConfigError("paired_significance: resamples must be >= 1");

  std::vector<double> diff(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = rr_a[i] - rr_b[i];
    sum += diff[i];
  }
  SignificanceResult out;
  out.mean_difference = sum / static_cast<double>(n);
  const double observed = std::abs(out.mean_difference);
  const double threshold = observed - 1e-12;

  std::size_t extreme = 0, total = 0;
  // n^n <= resamples, evaluated without overflow.
  bool enumerate = true;
  {
    double count = 1.0;
    for (std::size_t i = 0; i < n && enumerate; ++i) {
      count *= static_cast<double>(n);
      enumerate = count <= static_cast<double>(resamples);
    }
  }
  if (enumerate) {
    std::vector<std::size_t> idx(n, 0);
    while (true) {
      double s = 0.0;
      for (std::size_t i : idx) s += diff[i];
      if (std::abs(s / static_cast<double>(n) - out.mean_difference) >= threshold) ++extreme;
      ++total;
      std::size_t pos = 0;
      while (pos < n && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == n) break;
    }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t b = 0; b < resamples; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += diff[pick(rng)];
      if (std::abs(s / static_cast<double>(n) - out.mean_difference) >= threshold) ++extreme;
    }
    total = resamples;
  }
  out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(total + 1);
  out.significant = out.p_value < alpha;
  return out;
}

void write_rank_csv(const EvalResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "query_index,side,rank,reciprocal_rank\n";
  out.precision(17);
  for (std::size_t i = 0; i < result.ranks.size(); ++i) {
    out << i << ',' << (i % 2 == 0 ? "head" : "tail") << ',' << result.ranks[i] << ',' << result.reciprocal_ranks[i]
        << '\n';
  }
}

std::vector<double> read_rank_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> rr;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError(path.string(), lineno, "expected CSV row");
    try {
      rr.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "bad reciprocal rank");
    }
  }
  return rr;
}

}  // namespace mohone
