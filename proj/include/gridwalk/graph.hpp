#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gridwalk {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

enum class TopologyKind { Ring, Complete, Random };

struct TopologyModel {
  TopologyKind kind = TopologyKind::Random;
  double edge_probability = 0.1;  // Random only

  static TopologyModel ring() { return {TopologyKind::Ring, 0.0}; }
  static TopologyModel complete() { return {TopologyKind::Complete, 0.0}; }
  static TopologyModel random(double p) { return {TopologyKind::Random, p}; }

  // Accepts "ring", "complete" or "random:<p>".
  static TopologyModel parse(const std::string& text);
  std::string to_string() const;
};

// Undirected communication graph over dense ids 0..n-1. Neighbor lists are
// kept sorted ascending so that seeded uniform choices are reproducible.
class Topology {
 public:
  Topology() = default;

  // Builds from an undirected edge list. Throws InvalidParameter on
  // self-loops or out-of-range endpoints; duplicate edges are collapsed.
  static Topology from_edges(std::size_t n,
                             const std::vector<std::pair<NodeId, NodeId>>& edges);

  std::size_t size() const { return adjacency_.size(); }
  std::span<const NodeId> neighbors(NodeId i) const;
  bool has_edge(NodeId i, NodeId j) const;
  std::size_t edge_count() const;

  // Undirected edges (i < j), ascending.
  std::vector<std::pair<NodeId, NodeId>> edges() const;

  bool is_connected() const;

  // Edge-list text: header "n=<count>", then one "i j" line per edge.
  void write_edge_list(std::ostream& out) const;
  static Topology read_edge_list(std::istream& in);

  friend bool operator==(const Topology&, const Topology&) = default;

 private:
  std::vector<std::vector<NodeId>> adjacency_;
};

// Reproducible instance: identical (n, model, seed) give identical graphs.
// The random model adds a shuffled Hamiltonian path on top of the
// Bernoulli(p) edges so the result is always connected.
Topology generate_topology(std::size_t n, const TopologyModel& model, std::uint64_t seed);

}  // namespace gridwalk
