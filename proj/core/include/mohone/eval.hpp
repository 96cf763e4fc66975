#pragma once

#include "mohone/graph.hpp"
#include "mohone/kge.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

namespace mohone {

enum class QuerySide { kHead, kTail };

/// Fills `scores[e]` for every candidate entity e completing the query: (?, r, anchor)
/// for kHead, (anchor, r, ?) for kTail. Higher means more plausible.
using Scorer = std::function<void(QuerySide side, EntityId anchor, RelationId r, std::span<double> scores)>;

Scorer make_scorer(const KGEmbedding& emb);

/// Known-true completions of every (h, r, ?) and (?, r, t) pattern.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(std::span<const Triple> known);
  void add(std::span<const Triple> known);

  /// Entities that make (anchor, r, .) or (., r, anchor) a known triple.
  std::span<const EntityId> known_answers(QuerySide side, EntityId anchor, RelationId r) const;

 private:
  static std::uint64_t key(EntityId e, RelationId r) { return (static_cast<std::uint64_t>(r) << 32) | e; }
  std::unordered_map<std::uint64_t, std::vector<EntityId>> heads_;  // (r, tail) -> heads
  std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;  // (r, head) -> tails
};

/// Average-tie rank of `truth` among candidates not in `filtered` (truth is never
/// filtered): 1 + #greater + round_half_up(#ties / 2).
std::size_t rank_filtered(std::span<const double> scores, EntityId truth, std::span<const EntityId> filtered);

/// Rank over all candidates with no filtering.
std::size_t rank_raw(std::span<const double> scores, EntityId truth);

struct EvalResult {
  double mrr = 0.0;
  std::map<int, double> hits;
  /// Head query then tail query for each evaluated test triple.
  std::vector<double> reciprocal_ranks;
  std::vector<std::size_t> ranks;
  std::size_t skipped = 0;

  std::size_t num_queries() const noexcept { return ranks.size(); }
};

/// Mean reciprocal rank and Hits@k from per-query ranks; sums run in index order.
EvalResult summarize_ranks(std::vector<std::size_t> ranks, std::span<const int> hits_at);

struct EvalOptions {
  std::vector<int> hits_at{1, 3, 10};
  unsigned threads = 1;
};

/// Ranks both corruption queries of every test triple in the filtered setting.
/// `skipped_queries` is carried through into the result.
EvalResult evaluate(const Scorer& scorer, std::size_t num_entities, std::span<const Triple> test,
                    const FilterIndex& filter, const EvalOptions& options = {}, std::size_t skipped_queries = 0);

struct SignificanceResult {
  double p_value = 1.0;
  bool significant = false;
  double mean_difference = 0.0;
};

/// Paired bootstrap on per-query differences a - b. Two-sided p is the share of
/// resampled mean differences at least as far from the observed mean as the observed
/// mean is from zero, with add-one smoothing. When n^n <= resamples every ordered
/// resample is enumerated instead.
SignificanceResult paired_significance(std::span<const double> rr_a, std::span<const double> rr_b,
                                       std::size_t resamples = 10000, double alpha = 0.05,
                                       std::uint64_t seed = 12345);

/// One "query_index,side,rank,reciprocal_rank" row per query.
void write_rank_csv(const EvalResult& result, const std::filesystem::path& path);
/// Reads reciprocal ranks back from write_rank_csv output.
std::vector<double> read_rank_csv(const std::filesystem::path& path);

}  // namespace mohone
