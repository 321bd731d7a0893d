#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gridwalk/graph.hpp"

namespace gridwalk {

// Parent-pointer spanning tree over the nodes a walk has visited.
// Ids are used as direct indices, so storage is O(max id).
class SpanTree {
 public:
  SpanTree() = default;

  // Validates that every covered node reaches root; throws InvalidState on
  // cycles or dangling parents. parent[v] == kNoNode marks "not covered"
  // except at root.
  SpanTree(NodeId root, std::vector<NodeId> parent);

  NodeId root() const { return root_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool covers(NodeId v) const { return v < covered_.size() && covered_[v]; }

  // kNoNode for root. Throws InvalidParameter for uncovered nodes.
  NodeId parent(NodeId v) const;
  std::span<const NodeId> children(NodeId v) const;
  std::size_t subtree_size(NodeId v) const;
  std::size_t depth(NodeId v) const;
  std::size_t height() const;

  // Covered ids, ascending.
  std::vector<NodeId> nodes() const;

  // One node per line, two spaces of indentation per level, children ascending.
  std::string dump() const;

  friend bool operator==(const SpanTree& a, const SpanTree& b);

 private:
  NodeId root_ = kNoNode;
  std::size_t size_ = 0;
  std::vector<NodeId> parent_;
  std::vector<char> covered_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::size_t> subtree_size_;
};

SpanTree subtree(const SpanTree& t, NodeId v);
SpanTree prune_crashed(const SpanTree& t, const std::set<NodeId>& dead);

// Visit history carried by the token. Only the reduced form is stored:
// the last-occurrence-successor parent map plus the current holder, which
// is updated in O(1) per hop and yields the same tree as the full history.
class CirculatingWord {
 public:
  // Throws ProtocolViolation when i is not a neighbor of the holder.
  void append_visit(NodeId i, const Topology& topology);

  bool empty() const { return holder_ == kNoNode; }
  NodeId holder() const { return holder_; }
  std::size_t distinct() const { return distinct_; }
  std::size_t steps() const { return steps_; }

  // Canonical reduced word: an Euler tour of the derived tree that starts
  // and ends at the holder. At most 2 * distinct() - 1 entries, and feeding
  // it to a fresh word reproduces the same tree.
  std::vector<NodeId> visits() const;

  SpanTree extract_tree() const;

 private:
  NodeId holder_ = kNoNode;
  std::size_t distinct_ = 0;
  std::size_t steps_ = 0;
  std::vector<NodeId> parent_;
  std::vector<char> seen_;
};

// Throws InvalidState on an empty word.
SpanTree extract_tree(const CirculatingWord& w);

}  // namespace gridwalk
