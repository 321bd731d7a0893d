#include "gridwalk/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gridwalk/errors.hpp"

namespace gridwalk {

const char* to_string(Method m) {
  switch (m) {
    case Method::Active: return "active";
    case Method::Ds: return "ds";
    case Method::Df: return "df";
    case Method::Dm: return "dm";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "active") return Method::Active;
  if (s == "ds") return Method::Ds;
  if (s == "df") return Method::Df;
  if (s == "dm") return Method::Dm;
  throw InvalidParameter("unknown method '" + text + "'");
}

void MethodConfig::validate() const {
  if (!(refresh_coefficient > 0.0)) throw InvalidParameter("c_r must be positive");
  if (!(min_refresh > 0.0)) throw InvalidParameter("m_r must be positive");
  if (std::isnan(feedback_timeout)) throw InvalidParameter("feedback timeout is NaN");
}

double compute_bound(std::size_t uncomputed, std::size_t n, const MethodConfig& cfg) {
  if (n == 0) throw InvalidParameter("node count must be positive");
  const double scaled = static_cast<double>(uncomputed) / static_cast<double>(n) * cfg.refresh_coefficient;
  return std::min(scaled, cfg.min_refresh);
}

TreeView::TreeView(std::shared_ptr<const SpanTree> tree, NodeId root)
    : tree_(std::move(tree)), root_(root) {
  if (!tree_ || !tree_->covers(root_)) throw InvalidParameter("tree view root not covered");
}

std::span<const NodeId> TreeView::children() const {
  if (!tree_) return {};
  return tree_->children(root_);
}

std::size_t TreeView::size() const { return tree_ ? tree_->subtree_size(root_) : 0; }

TreeView TreeView::child(NodeId c) const {
  if (!tree_ || tree_->parent(c) != root_) throw InvalidParameter("not a child of the view root");
  return TreeView(tree_, c);
}

SpanTree TreeView::materialize() const {
  if (!tree_) return {};
  return subtree(*tree_, root_);
}

MessageClass classify(const Message& m) {
  if (const auto* d = std::get_if<DiffusionMsg>(&m))
    return d->phase == Phase::Down ? MessageClass::Down : MessageClass::FinalDown;
  return MessageClass::Feedback;
}

std::size_t payload_size(const Message& m) {
  return std::visit(
      [](const auto& msg) -> std::size_t {
        std::size_t s = msg.tasks ? msg.tasks->size() : 0;
        if constexpr (std::is_same_v<std::decay_t<decltype(msg)>, DiffusionMsg>) s += msg.tree.size();
        return s;
      },
      m);
}

namespace {

SharedTasks snapshot(const TaskStateSet& view) { return std::make_shared<const TaskStateSet>(view); }

void send_down(HandlerOutput& out, NodeId from, const TreeView& tree, DiffId d, Phase phase,
               const SharedTasks& payload) {
  for (NodeId c : tree.children())
    out.sends.push_back(Envelope{from, c, DiffusionMsg{kTokenId, d, phase, payload, tree.child(c)}});
}

void send_feedback(HandlerOutput& out, const NodeState& node, NodeId father, DiffId d) {
  out.sends.push_back(Envelope{node.id, father, FeedbackMsg{kTokenId, d, snapshot(node.view)}});
  out.feedback_sent = true;
}

// Pending sons answered or the deadline passed.
void close_record(NodeState& node, std::map<DiffId, DiffusionRecord>::iterator it,
                  HandlerOutput& out) {
  const DiffId d = it->first;
  DiffusionRecord rec = std::move(it->second);
  node.records.erase(it);
  if (!rec.initiator) {
    send_feedback(out, node, *rec.father, d);
    return;
  }
  out.wave_closed = d;
  if (rec.method == Method::Dm) {
    send_down(out, node.id, rec.tree, d, Phase::FinalDown, snapshot(node.view));
    out.final_launched = d;
  }
}

void open_record(NodeState& node, DiffId d, std::optional<NodeId> father, const TreeView& tree,
                 const MethodConfig& cfg, double now, double timeout, HandlerOutput& out) {
  DiffusionRecord rec;
  rec.father = father;
  rec.initiator = !father.has_value();
  rec.method = cfg.method;
  rec.tree = tree;
  rec.deadline = now + timeout;
  for (NodeId c : tree.children()) rec.pending_sons.insert(c);
  auto [it, inserted] = node.records.emplace(d, std::move(rec));
  if (!inserted) throw ProtocolViolation("diffusion record opened twice");
  if (it->second.pending_sons.empty()) {
    close_record(node, it, out);
  } else {
    out.timeouts.push_back(TimeoutRequest{d, it->second.deadline});
  }
}

bool uses_feedback(Method m) { return m == Method::Df || m == Method::Dm; }

}  // namespace

HandlerOutput on_token_arrival(NodeState& node, Token& token, const Topology& topology,
                               const MethodConfig& cfg, double now, double timeout) {
  HandlerOutput out;
  out.view_changed = merge_into(node.view, token.tasks).changed();
  merge_into(token.tasks, node.view);
  ++token.hops;
  token.word.append_visit(node.id, topology);

  if (cfg.method == Method::Active) return out;
  const double bound = compute_bound(node.view.count(TaskState::Uncomputed), topology.size(), cfg);
  if (!(static_cast<double>(token.hops) > bound)) return out;

  token.hops = 0;
  const DiffId d = ++token.diffusions;
  auto tree = std::make_shared<const SpanTree>(token.word.extract_tree());
  const TreeView whole(tree, node.id);
  send_down(out, node.id, whole, d, Phase::Down, snapshot(token.tasks));
  out.launched = d;
  out.launched_tree = tree;
  if (uses_feedback(cfg.method)) open_record(node, d, std::nullopt, whole, cfg, now, timeout, out);
  return out;
}

HandlerOutput on_down_msg(NodeState& node, NodeId from, const DiffusionMsg& msg,
                          const MethodConfig& cfg, double now, double timeout, TokenId expected) {
  HandlerOutput out;
  if (msg.token != expected) {
    out.invalid = true;
    return out;
  }
  if (msg.tree.root() != node.id) throw ProtocolViolation("diffusion tree not rooted at receiver");
  out.view_changed = merge_into(node.view, *msg.tasks).changed();

  if (msg.phase == Phase::FinalDown) {
    send_down(out, node.id, msg.tree, msg.diffusion, Phase::FinalDown, msg.tasks);
    return out;
  }
  if (!uses_feedback(cfg.method)) {
    if (!msg.tree.children().empty())
      send_down(out, node.id, msg.tree, msg.diffusion, Phase::Down, snapshot(node.view));
    return out;
  }
  // A second Down for a diffusion already open here: keep the knowledge only.
  if (node.records.count(msg.diffusion)) return out;
  if (msg.tree.children().empty()) {
    send_feedback(out, node, from, msg.diffusion);
    return out;
  }
  send_down(out, node.id, msg.tree, msg.diffusion, Phase::Down, snapshot(node.view));
  open_record(node, msg.diffusion, from, msg.tree, cfg, now, timeout, out);
  return out;
}

HandlerOutput on_feedback_msg(NodeState& node, NodeId from, const FeedbackMsg& msg,
                              TokenId expected) {
  HandlerOutput out;
  if (msg.token != expected) {
    out.invalid = true;
    return out;
  }
  out.view_changed = merge_into(node.view, *msg.tasks).changed();
  auto it = node.records.find(msg.diffusion);
  if (it == node.records.end() || !it->second.pending_sons.count(from)) {
    out.late_feedback = true;
    return out;
  }
  it->second.pending_sons.erase(from);
  if (it->second.pending_sons.empty()) close_record(node, it, out);
  return out;
}

HandlerOutput on_feedback_timeout(NodeState& node, DiffId diffusion, double now) {
  HandlerOutput out;
  auto it = node.records.find(diffusion);
  if (it == node.records.end()) return out;
  if (now < it->second.deadline) throw ProtocolViolation("feedback timeout fired early");
  out.timeout_acted = true;
  close_record(node, it, out);
  return out;
}

std::optional<TaskStart> on_local_idle(NodeState& node, Rng& rng, bool reclaim) {
  if (node.computing) return std::nullopt;
  std::optional<TaskId> id = select_task(node.view, rng);
  if (!id && reclaim) id = select_in_progress(node.view, rng);
  if (!id) return std::nullopt;
  node.computing = id;
  return TaskStart{*id, node.view.get(*id)->length};
}

}  // namespace gridwalk
