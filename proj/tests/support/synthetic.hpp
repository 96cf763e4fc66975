#pragma once

// Synthetic knowledge graphs written as train/valid/test TSV files.

#include "mohone/types.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace mohone::testing {

struct CommunityKgSpec {
  std::size_t communities = 10;
  std::size_t community_size = 20;
  std::size_t relations = 6;
  /// Relations each community uses; community c draws from {c, c+1, ...} mod relations.
  std::size_t relations_per_community = 2;
  /// Intra-community triples per entity (as head).
  std::size_t triples_per_entity = 2;
  /// Share of triples whose tail is drawn from a random other community.
  double noise = 0.05;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct SyntheticSplits {
  std::filesystem::path train, valid, test;
  std::size_t num_train = 0, num_valid = 0, num_test = 0;
  /// Community of entity "c<k>_<i>" is k.
  std::vector<std::size_t> community;
};

inline std::string community_entity(std::size_t c, std::size_t i) {
  return "c" + std::to_string(c) + "_" + std::to_string(i);
}

/// Entities form planted communities; every community links its members with the
/// same small set of relations. Valid and test triples only use entities that also
/// occur in train.
inline SyntheticSplits write_community_kg(const std::filesystem::path& dir, const CommunityKgSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.communities * spec.community_size;
  using T = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::set<T> seen;
  std::vector<T> triples;
  std::uniform_int_distribution<std::size_t> member(0, spec.community_size - 1);
  std::uniform_int_distribution<std::size_t> which_rel(0, spec.relations_per_community - 1);
  std::uniform_int_distribution<std::size_t> any_entity(0, n - 1);
  std::bernoulli_distribution is_noise(spec.noise);
  for (std::size_t c = 0; c < spec.communities; ++c) {
    for (std::size_t i = 0; i < spec.community_size; ++i) {
      const std::size_t h = c * spec.community_size + i;
      for (std::size_t k = 0; k < spec.triples_per_entity; ++k) {
        const std::size_t r = (c + which_rel(rng)) % spec.relations;
        std::size_t t = h;
        while (t == h) t = is_noise(rng) ? any_entity(rng) : c * spec.community_size + member(rng);
        if (seen.insert({h, r, t}).second) triples.emplace_back(h, r, t);
      }
    }
  }
  std::shuffle(triples.begin(), triples.end(), rng);

  // Fill held-out splits only with triples whose entities keep another train triple.
  std::vector<std::size_t> remaining(n, 0);
  for (const auto& [h, r, t] : triples) {
    ++remaining[h];
    ++remaining[t];
  }
  const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(triples.size()));
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(triples.size()));
  std::vector<T> train, valid, test;
  for (const auto& tr : triples) {
    const auto [h, r, t] = tr;
    const bool can_hold = remaining[h] > 1 && remaining[t] > 1;
    if (can_hold && test.size() < n_test) {
      test.push_back(tr);
    } else if (can_hold && valid.size() < n_valid) {
      valid.push_back(tr);
    } else {
      train.push_back(tr);
      continue;
    }
    --remaining[h];
    --remaining[t];
  }

  std::filesystem::create_directories(dir);
  auto name = [&](std::size_t e) { return community_entity(e / spec.community_size, e % spec.community_size); };
  auto dump = [&](const std::filesystem::path& p, const std::vector<T>& ts) {
    std::ofstream out(p);
    for (const auto& [h, r, t] : ts) out << name(h) << "\trel" << r << '\t' << name(t) << '\n';
  };
  SyntheticSplits s;
  s.train = dir / "train.tsv";
  s.valid = dir / "valid.tsv";
  s.test = dir / "test.tsv";
  dump(s.train, train);
  dump(s.valid, valid);
  dump(s.test, test);
  s.num_train = train.size();
  s.num_valid = valid.size();
  s.num_test = test.size();
  s.community.resize(n);
  for (std::size_t e = 0; e < n; ++e) s.community[e] = e / spec.community_size;
  return s;
}

}  // namespace mohone::testing
