#include "gridwalk/wordtree.hpp"

#include <algorithm>
#include <sstream>

#include "gridwalk/errors.hpp"

namespace gridwalk {

SpanTree::SpanTree(NodeId root, std::vector<NodeId> parent) : root_(root), parent_(std::move(parent)) {
  if (root_ == kNoNode) throw InvalidState("tree without root");
  if (parent_.size() <= root_) parent_.resize(root_ + 1, kNoNode);
  const std::size_t slots = parent_.size();
  covered_.assign(slots, 0);
  children_.assign(slots, {});
  subtree_size_.assign(slots, 0);

  covered_[root_] = 1;
  parent_[root_] = kNoNode;
  for (NodeId v = 0; v < slots; ++v) {
    if (v == root_ || parent_[v] == kNoNode) continue;
    if (parent_[v] >= slots) throw InvalidState("parent out of range");
    covered_[v] = 1;
  }
  for (NodeId v = 0; v < slots; ++v) {
    if (!covered_[v] || v == root_) continue;
    if (!covered_[parent_[v]] && parent_[v] != root_) throw InvalidState("dangling parent");
    children_[parent_[v]].push_back(v);
  }
  size_ = static_cast<std::size_t>(std::count(covered_.begin(), covered_.end(), 1));

  // Post-order from root; anything not reached sits on a cycle.
  std::vector<NodeId> order;
  order.reserve(size_);
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    order.push_back(u);
    for (NodeId c : children_[u]) stack.push_back(c);
  }
  if (order.size() != size_) throw InvalidState("parent pointers contain a cycle");
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    std::size_t s = 1;
    for (NodeId c : children_[*it]) s += subtree_size_[c];
    subtree_size_[*it] = s;
  }
}

NodeId SpanTree::parent(NodeId v) const {
  if (!covers(v)) throw InvalidParameter("node " + std::to_string(v) + " not in tree");
  return parent_[v];
}

std::span<const NodeId> SpanTree::children(NodeId v) const {
  if (!covers(v)) throw InvalidParameter("node " + std::to_string(v) + " not in tree");
  return children_[v];
}

std::size_t SpanTree::subtree_size(NodeId v) const {
  if (!covers(v)) throw InvalidParameter("node " + std::to_string(v) + " not in tree");
  return subtree_size_[v];
}

std::size_t SpanTree::depth(NodeId v) const {
  if (!covers(v)) throw InvalidParameter("node " + std::to_string(v) + " not in tree");
  std::size_t d = 0;
  for (NodeId u = v; u != root_; u = parent_[u]) ++d;
  return d;
}

std::size_t SpanTree::height() const {
  if (empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    auto [u, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (NodeId c : children_[u]) stack.emplace_back(c, d + 1);
  }
  return best;
}

std::vector<NodeId> SpanTree::nodes() const {
  std::vector<NodeId> out;
  out.reserve(size_);
  for (NodeId v = 0; v < covered_.size(); ++v)
    if (covered_[v]) out.push_back(v);
  return out;
}

std::string SpanTree::dump() const {
  std::ostringstream os;
  if (empty()) return {};
  std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    auto [u, d] = stack.back();
    stack.pop_back();
    os << std::string(2 * d, ' ') << u << '\n';
    const auto& kids = children_[u];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, d + 1);
  }
  return os.str();
}

bool operator==(const SpanTree& a, const SpanTree& b) {
  if (a.root_ != b.root_ || a.size_ != b.size_) return false;
  for (NodeId v : a.nodes())
    if (!b.covers(v) || a.parent_[v] != b.parent_[v]) return false;
  return true;
}

SpanTree subtree(const SpanTree& t, NodeId v) {
  if (!t.covers(v)) throw InvalidParameter("subtree root " + std::to_string(v) + " not in tree");
  std::vector<NodeId> parent(v + 1, kNoNode);
  std::vector<NodeId> stack{v};
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    for (NodeId c : t.children(u)) {
      if (parent.size() <= c) parent.resize(c + 1, kNoNode);
      parent[c] = u;
      stack.push_back(c);
    }
  }
  return SpanTree(v, std::move(parent));
}

SpanTree prune_crashed(const SpanTree& t, const std::set<NodeId>& dead) {
  if (dead.count(t.root())) throw InvalidState("cannot prune the root of a diffusion tree");
  std::vector<NodeId> parent(t.root() + 1, kNoNode);
  std::vector<NodeId> stack{t.root()};
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    for (NodeId c : t.children(u)) {
      if (dead.count(c)) continue;
      if (parent.size() <= c) parent.resize(c + 1, kNoNode);
      parent[c] = u;
      stack.push_back(c);
    }
  }
  return SpanTree(t.root(), std::move(parent));
}

void CirculatingWord::append_visit(NodeId i, const Topology& topology) {
  if (i >= topology.size()) throw ProtocolViolation("visit of unknown node " + std::to_string(i));
  if (holder_ != kNoNode && !topology.has_edge(holder_, i))
    throw ProtocolViolation("token moved " + std::to_string(holder_) + " -> " + std::to_string(i) +
                            " without a link");
  if (parent_.size() <= i) {
    parent_.resize(i + 1, kNoNode);
    seen_.resize(i + 1, 0);
  }
  if (!seen_[i]) {
    seen_[i] = 1;
    ++distinct_;
  }
  // The previous holder's most recent visit is now followed by i.
  if (holder_ != kNoNode) parent_[holder_] = i;
  parent_[i] = kNoNode;
  holder_ = i;
  ++steps_;
}

std::vector<NodeId> CirculatingWord::visits() const {
  if (empty()) return {};
  const SpanTree tree = extract_tree();
  // Euler tour from the holder back to the holder: each node's last
  // occurrence is immediately followed by its parent.
  std::vector<NodeId> out;
  out.reserve(2 * distinct_ - 1);
  struct Frame {
    NodeId node;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{tree.root(), 0}};
  out.push_back(tree.root());
  while (!stack.empty()) {
    Frame& f = stack.back();
    auto kids = tree.children(f.node);
    if (f.next_child < kids.size()) {
      NodeId c = kids[f.next_child++];
      out.push_back(c);
      stack.push_back({c, 0});
    } else {
      stack.pop_back();
      if (!stack.empty()) out.push_back(stack.back().node);
    }
  }
  return out;
}

SpanTree CirculatingWord::extract_tree() const {
  if (empty()) throw InvalidState("empty circulating word");
  return SpanTree(holder_, parent_);
}

SpanTree extract_tree(const CirculatingWord& w) { return w.extract_tree(); }

}  // namespace gridwalk
