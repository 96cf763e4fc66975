#include "mohone/graph.hpp"

#include "mohone/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace mohone {

std::uint32_t Vocabulary::intern(std::string_view token) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix(0);
  }
  return h;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.find(t)) throw DataError("duplicate vocabulary token '" + t + "'");
    v.intern(t);
  }
  return v;
}

std::vector<LabeledTriple> parse_labeled_triples(std::istream& in, const std::string& source) {
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw ParseError(source, lineno, "expected 3 tab-separated fields");
    }
    LabeledTriple t{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw ParseError(source, lineno, "empty field");
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw DataError(source + ": no triples");
  return out;
}

std::vector<LabeledTriple> read_labeled_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file " + path.string());
  return parse_labeled_triples(in, path.string());
}

void append_triples(TripleStore& store, std::span<const LabeledTriple> labeled) {
  store.triples.reserve(store.triples.size() + labeled.size());
  for (const auto& t : labeled) {
    const EntityId h = store.entities.intern(t.head);
    const RelationId r = store.relations.intern(t.relation);
    const EntityId tl = store.entities.intern(t.tail);
    store.triples.push_back({h, r, tl});
  }
}

TripleStore load_triples(const std::filesystem::path& path) {
  TripleStore store;
  append_triples(store, read_labeled_triples(path));
  return store;
}

MappedSplit map_triples(std::span<const LabeledTriple> labeled, const Vocabulary& entities,
                        const Vocabulary& relations) {
  MappedSplit out;
  out.triples.reserve(labeled.size());
  for (const auto& t : labeled) {
    auto h = entities.find(t.head);
    auto r = relations.find(t.relation);
    auto tl = entities.find(t.tail);
    if (!h || !r || !tl) {
      ++out.unknown;
      continue;
    }
    out.triples.push_back({*h, *r, *tl});
  }
  return out;
}

UndirectedGraph::UndirectedGraph(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges)
    : n_(n) {
  edges_.reserve(edges.size() + n);
  std::vector<char> touched(n, 0);
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw DataError("edge endpoint out of range");
    if (u > v) std::swap(u, v);
    edges_.emplace_back(u, v);
    touched[u] = touched[v] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!touched[i]) edges_.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * edges_.size());
  degrees_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (auto [u, v] : edges_) {
    entries.emplace_back(u, v, 1.0);
    degrees_[u] += 1.0;
    if (u != v) {
      entries.emplace_back(v, u, 1.0);
      degrees_[v] += 1.0;
    }
  }
  adjacency_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adjacency_.setFromTriplets(entries.begin(), entries.end());
  adjacency_.makeCompressed();
}

UndirectedGraph project_graph(const TripleStore& store) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(store.triples.size());
  for (const auto& t : store.triples) edges.emplace_back(t.head, t.tail);
  return UndirectedGraph(store.entities.size(), edges);
}

void write_edge_list(const UndirectedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << g.num_nodes() << ' ' << g.num_edges() << '\n';
  for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

UndirectedGraph read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  std::size_t n = 0, m = 0;
  if (!(in >> n >> m)) throw ParseError(path.string(), 1, "expected header 'n m'");
  std::vector<std::pair<NodeId, NodeId>> edges(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(in >> edges[i].first >> edges[i].second)) {
      throw ParseError(path.string(), i + 2, "expected 'u v'");
    }
  }
  UndirectedGraph g(n, edges);
  if (g.num_edges() != m) throw DataError(path.string() + ": edge count does not match header");
  return g;
}

NormalizedLaplacian normalized_laplacian(const UndirectedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = g.degrees()[i];
    if (!(d > 0.0)) throw NumericError("node " + std::to_string(i) + " has zero degree");
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(g.adjacency().nonZeros() + n));
  for (Eigen::Index i = 0; i < n; ++i) entries.emplace_back(i, i, 1.0);
  const auto& a = g.adjacency();
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) {
      entries.emplace_back(it.row(), it.col(), -it.value() * inv_sqrt[it.row()] * inv_sqrt[it.col()]);
    }
  }
  NormalizedLaplacian lap;
  lap.matrix.resize(n, n);
  lap.matrix.setFromTriplets(entries.begin(), entries.end());
  lap.matrix.makeCompressed();
  return lap;
}

}  // namespace mohone
