#include "gridwalk/graph.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gridwalk/errors.hpp"
#include "gridwalk/rng.hpp"

namespace gridwalk {

TopologyModel TopologyModel::parse(const std::string& text) {
  if (text == "ring") return ring();
  if (text == "complete") return complete();
  if (text.rfind("random:", 0) == 0) {
    const std::string arg = text.substr(7);
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != arg.size()) throw InvalidParameter("bad edge probability: " + text);
    if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("edge probability must be in (0, 1]: " + text);
    return random(p);
  }
  throw InvalidParameter("unknown topology: " + text);
}

std::string TopologyModel::to_string() const {
  switch (kind) {
    case TopologyKind::Ring: return "ring";
    case TopologyKind::Complete: return "complete";
    case TopologyKind::Random: {
      std::ostringstream os;
      os << "random:" << edge_probability;
      return os.str();
    }
  }
  return "?";
}

Topology Topology::from_edges(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
  Topology t;
  t.adjacency_.resize(n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw InvalidParameter("edge endpoint out of range");
    if (a == b) throw InvalidParameter("self-loop on node " + std::to_string(a));
    t.adjacency_[a].push_back(b);
    t.adjacency_[b].push_back(a);
  }
  for (auto& row : t.adjacency_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return t;
}

std::span<const NodeId> Topology::neighbors(NodeId i) const {
  if (i >= adjacency_.size()) throw InvalidParameter("unknown node " + std::to_string(i));
  return adjacency_[i];
}

bool Topology::has_edge(NodeId i, NodeId j) const {
  if (i >= adjacency_.size()) return false;
  const auto& row = adjacency_[i];
  return std::binary_search(row.begin(), row.end(), j);
}

std::size_t Topology::edge_count() const {
  std::size_t twice = 0;
  for (const auto& row : adjacency_) twice += row.size();
  return twice / 2;
}

std::vector<std::pair<NodeId, NodeId>> Topology::edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (NodeId i = 0; i < adjacency_.size(); ++i)
    for (NodeId j : adjacency_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

bool Topology::is_connected() const {
  if (adjacency_.empty()) return true;
  std::vector<char> seen(adjacency_.size(), 0);
  std::deque<NodeId> frontier{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop_front();
    for (NodeId v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push_back(v);
      }
    }
  }
  return reached == adjacency_.size();
}

void Topology::write_edge_list(std::ostream& out) const {
  out << "n=" << adjacency_.size() << '\n';
  for (auto [i, j] : edges()) out << i << ' ' << j << '\n';
}

Topology Topology::read_edge_list(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("n=", 0) != 0)
    throw InvalidParameter("edge list: missing n=<count> header");
  std::size_t n = 0;
  try {
    n = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    throw InvalidParameter("edge list: bad header '" + line + "'");
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long a = -1, b = -1;
    std::string rest;
    if (!(ls >> a >> b) || (ls >> rest) || a < 0 || b < 0)
      throw InvalidParameter("edge list: bad line " + std::to_string(lineno));
    edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  }
  return from_edges(n, edges);
}

Topology generate_topology(std::size_t n, const TopologyModel& model, std::uint64_t seed) {
  if (n < 2) throw InvalidParameter("topology needs at least 2 nodes");
  std::vector<std::pair<NodeId, NodeId>> edges;
  const auto nn = static_cast<NodeId>(n);
  switch (model.kind) {
    case TopologyKind::Ring:
      for (NodeId i = 0; i < nn; ++i) edges.emplace_back(i, (i + 1) % nn);
      break;
    case TopologyKind::Complete:
      for (NodeId i = 0; i < nn; ++i)
        for (NodeId j = i + 1; j < nn; ++j) edges.emplace_back(i, j);
      break;
    case TopologyKind::Random: {
      const double p = model.edge_probability;
      if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("edge probability must be in (0, 1]");
      Rng rng(seed);
      std::bernoulli_distribution coin(p);
      for (NodeId i = 0; i < nn; ++i)
        for (NodeId j = i + 1; j < nn; ++j)
          if (coin(rng)) edges.emplace_back(i, j);
      // Hamiltonian-path backbone keeps the graph connected.
      std::vector<NodeId> order(n);
      std::iota(order.begin(), order.end(), NodeId{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 1; k < n; ++k) edges.emplace_back(order[k - 1], order[k]);
      break;
    }
  }
  return Topology::from_edges(n, edges);
}

}  // namespace gridwalk
