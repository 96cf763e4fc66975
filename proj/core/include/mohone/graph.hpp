#pragma once

#include "mohone/types.hpp"

#include <Eigen/Sparse>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mohone {

/// Bijection between string tokens and dense integer ids, in first-seen order.
class Vocabulary {
 public:
  /// Returns the id of `token`, adding it if unseen.
  std::uint32_t intern(std::string_view token);
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// FNV-1a over the ordered token list; identifies a vocabulary across artifacts.
  std::uint64_t hash() const;

  static Vocabulary from_tokens(std::span<const std::string> tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleStore {
  std::vector<Triple> triples;
  Vocabulary entities;
  Vocabulary relations;
};

/// A raw "head<TAB>relation<TAB>tail" record before id assignment.
struct LabeledTriple {
  std::string head;
  std::string relation;
  std::string tail;
};

/// Parses tab-separated triples. Throws ParseError on the first malformed line
/// and DataError if the stream holds no triples.
std::vector<LabeledTriple> parse_labeled_triples(std::istream& in, const std::string& source);
std::vector<LabeledTriple> read_labeled_triples(const std::filesystem::path& path);

/// Loads a triple file into a fresh store with vocabularies built in first-seen order.
TripleStore load_triples(const std::filesystem::path& path);

/// Appends labeled triples to `store`, growing its vocabularies.
void append_triples(TripleStore& store, std::span<const LabeledTriple> labeled);

/// Triples of a split whose tokens resolve in fixed vocabularies.
struct MappedSplit {
  std::vector<Triple> triples;
  /// Triples dropped because a token is not in the vocabulary.
  std::size_t unknown = 0;
};

MappedSplit map_triples(std::span<const LabeledTriple> labeled, const Vocabulary& entities,
                        const Vocabulary& relations);

/// Entity-level simple graph. Adjacency is symmetric 0/1; self-loops count 1 toward degree.
class UndirectedGraph {
 public:
  UndirectedGraph() = default;

  /// Builds from an edge list over nodes [0, n). Duplicate and reversed edges
  /// collapse; nodes without any edge receive a self-loop.
  UndirectedGraph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges);

  std::size_t num_nodes() const noexcept { return n_; }
  /// Undirected edge count, self-loops included once.
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const Eigen::SparseMatrix<double>& adjacency() const noexcept { return adjacency_; }
  const Eigen::VectorXd& degrees() const noexcept { return degrees_; }
  /// Sorted (u <= v) edge list.
  const std::vector<std::pair<NodeId, NodeId>>& edges() const noexcept { return edges_; }

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  Eigen::SparseMatrix<double> adjacency_;
  Eigen::VectorXd degrees_;
};

/// Undirected projection of a knowledge graph: one edge per connected entity pair,
/// relation types and directions dropped.
UndirectedGraph project_graph(const TripleStore& store);

/// Persists as "n m" then one "u v" line per sorted edge.
void write_edge_list(const UndirectedGraph& g, const std::filesystem::path& path);
UndirectedGraph read_edge_list(const std::filesystem::path& path);

/// L = I - D^{-1/2} A D^{-1/2}.
struct NormalizedLaplacian {
  Eigen::SparseMatrix<double> matrix;

  std::size_t size() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
};

NormalizedLaplacian normalized_laplacian(const UndirectedGraph& g);

}  // namespace mohone
