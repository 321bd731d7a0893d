#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gridwalk/graph.hpp"
#include "gridwalk/rng.hpp"
#include "gridwalk/tasks.hpp"
#include "gridwalk/wordtree.hpp"

namespace gridwalk {

// Active: token-only updates. Ds: periodic diffusion. Df: diffusion plus
// feedback wave. Dm: Df followed by a re-diffusion of the initiator's set.
enum class Method { Active, Ds, Df, Dm };

const char* to_string(Method m);
// Case-insensitive "active", "ds", "df", "dm".
Method parse_method(const std::string& text);

struct MethodConfig {
  Method method = Method::Active;
  double refresh_coefficient = 1000.0;  // c_r
  double min_refresh = 1500.0;          // m_r
  double feedback_timeout = 0.0;        // <= 0 selects 2 * n message hops

  void validate() const;
};

// b = min(uncomputed / n * c_r, m_r)
double compute_bound(std::size_t uncomputed, std::size_t n, const MethodConfig& cfg);

using TokenId = std::uint32_t;
using DiffId = std::uint64_t;

inline constexpr TokenId kTokenId = 1;

struct Token {
  TokenId id = kTokenId;
  TaskStateSet tasks;
  CirculatingWord word;
  std::uint64_t hops = 0;        // C_T, reset at each diffusion launch
  DiffId diffusions = 0;         // incremented at each launch
};

// A subtree of a shared diffusion tree, addressed by its local root. Messages
// carry these instead of copying the subtree; materialize() gives the value.
class TreeView {
 public:
  TreeView() = default;
  TreeView(std::shared_ptr<const SpanTree> tree, NodeId root);

  NodeId root() const { return root_; }
  std::span<const NodeId> children() const;
  std::size_t size() const;
  TreeView child(NodeId c) const;
  const SpanTree& whole() const { return *tree_; }
  SpanTree materialize() const;

 private:
  std::shared_ptr<const SpanTree> tree_;
  NodeId root_ = kNoNode;
};

using SharedTasks = std::shared_ptr<const TaskStateSet>;

enum class Phase { Down, FinalDown };

struct DiffusionMsg {
  TokenId token = kTokenId;
  DiffId diffusion = 0;
  Phase phase = Phase::Down;
  SharedTasks tasks;
  TreeView tree;  // rooted at the receiver
};

struct FeedbackMsg {
  TokenId token = kTokenId;
  DiffId diffusion = 0;
  SharedTasks tasks;
};

using Message = std::variant<DiffusionMsg, FeedbackMsg>;

enum class MessageClass { Down, Feedback, FinalDown };
MessageClass classify(const Message& m);
std::size_t payload_size(const Message& m);

struct Envelope {
  NodeId from = kNoNode;
  NodeId to = kNoNode;
  Message msg;
};

struct DiffusionRecord {
  std::optional<NodeId> father;  // empty at the initiator
  std::set<NodeId> pending_sons;
  double deadline = 0.0;
  bool initiator = false;
  Method method = Method::Df;
  TreeView tree;  // needed by a Dm initiator to re-diffuse
};

struct NodeState {
  NodeId id = 0;
  TaskStateSet view;
  std::map<DiffId, DiffusionRecord> records;
  std::optional<TaskId> computing;
};

struct TimeoutRequest {
  DiffId diffusion = 0;
  double deadline = 0.0;
};

// Everything a handler wants the engine to do or know; handlers never touch
// the event queue themselves.
struct HandlerOutput {
  std::vector<Envelope> sends;
  std::vector<TimeoutRequest> timeouts;
  std::optional<DiffId> launched;          // new diffusion started here
  std::shared_ptr<const SpanTree> launched_tree;
  std::optional<DiffId> wave_closed;       // initiator finished collecting
  std::optional<DiffId> final_launched;    // Dm re-diffusion started here
  bool feedback_sent = false;
  bool timeout_acted = false;
  bool late_feedback = false;
  bool invalid = false;                    // foreign token id, dropped
  bool view_changed = false;
};

// Merges token and node views both ways, counts the hop, records the visit,
// and launches a diffusion when the method calls for one.
HandlerOutput on_token_arrival(NodeState& node, Token& token, const Topology& topology,
                               const MethodConfig& cfg, double now, double timeout);

HandlerOutput on_down_msg(NodeState& node, NodeId from, const DiffusionMsg& msg,
                          const MethodConfig& cfg, double now, double timeout,
                          TokenId expected = kTokenId);

HandlerOutput on_feedback_msg(NodeState& node, NodeId from, const FeedbackMsg& msg,
                              TokenId expected = kTokenId);

HandlerOutput on_feedback_timeout(NodeState& node, DiffId diffusion, double now);

struct TaskStart {
  TaskId task = 0;
  double length = 0.0;
};

// Starts a random Uncomputed task from the local view when the node is not
// busy. With reclaim set, a node with no Uncomputed work re-runs a random
// InProgress task instead of idling.
std::optional<TaskStart> on_local_idle(NodeState& node, Rng& rng, bool reclaim = false);

}  // namespace gridwalk
