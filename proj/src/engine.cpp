#include "gridwalk/engine.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string_view>
#include <tuple>
#include <variant>

#include <fmt/format.h>

#include "gridwalk/errors.hpp"
#include "gridwalk/rng.hpp"

namespace gridwalk {

CrashSpec CrashSpec::parse(const std::string& text) {
  const auto at = text.find('@');
  if (at == std::string::npos) throw InvalidParameter("crash spec must be t@node: " + text);
  CrashSpec c;
  try {
    std::size_t used = 0;
    c.time = std::stod(text.substr(0, at), &used);
    if (used != at) throw InvalidParameter("");
    const std::string node = text.substr(at + 1);
    const long long id = std::stoll(node, &used);
    if (used != node.size() || id < 0) throw InvalidParameter("");
    c.node = static_cast<NodeId>(id);
  } catch (const std::exception&) {
    throw InvalidParameter("crash spec must be t@node: " + text);
  }
  return c;
}

double SimConfig::resolved_timeout() const {
  if (method.feedback_timeout > 0.0) return method.feedback_timeout;
  return 2.0 * static_cast<double>(nodes) * msg_hop_cost;
}

void SimConfig::validate() const {
  const std::size_t n = topology_override ? topology_override->size() : nodes;
  if (n == 0) throw InvalidParameter("need at least one node");
  if (topology_override && topology_override->size() != nodes)
    throw InvalidParameter("topology override size differs from node count");
  if (!tasks_override && tasks == 0) throw InvalidParameter("task count must be positive");
  if (!(sigma >= 0.0)) throw InvalidParameter("sigma must be non-negative");
  if (!(hop_cost > 0.0) || !(msg_hop_cost > 0.0)) throw InvalidParameter("hop costs must be positive");
  if (!(max_time > 0.0)) throw InvalidParameter("max_time must be positive");
  method.validate();
  std::set<NodeId> seen;
  for (const auto& c : crashes) {
    if (c.node >= n) throw InvalidParameter("crash of unknown node " + std::to_string(c.node));
    if (!(c.time >= 0.0)) throw InvalidParameter("crash time must be non-negative");
    if (!seen.insert(c.node).second)
      throw InvalidParameter("node " + std::to_string(c.node) + " crashes twice");
  }
  if (!crashes.empty() && seen.size() >= n) throw InvalidParameter("crash plan kills every node");
}

NodeId step_token(const Topology& topology, NodeId holder, const std::vector<char>& alive, Rng& rng) {
  std::vector<NodeId> live;
  for (NodeId v : topology.neighbors(holder))
    if (alive[v]) live.push_back(v);
  if (live.empty()) return kNoNode;
  std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
  return live[pick(rng)];
}

std::string format_trace_hash(std::uint64_t h) { return fmt::format("{:016x}", h); }

namespace {

struct TokenArrive {
  NodeId from;
  NodeId to;
};
struct TokenRetry {
  NodeId at;
};
struct Deliver {
  Envelope env;
};
struct TaskDone {
  NodeId node;
  TaskId task;
};
struct TimeoutFire {
  NodeId node;
  DiffId diffusion;
};
struct CrashEvent {
  NodeId node;
};

using Payload = std::variant<TokenArrive, TokenRetry, Deliver, TaskDone, TimeoutFire, CrashEvent>;

struct Event {
  double time;
  std::uint64_t seq;
  Payload payload;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
  }
};

constexpr std::size_t kTokenClass = 0;
std::size_t class_index(MessageClass c) { return 1 + static_cast<std::size_t>(c); }

const char* class_name(MessageClass c) {
  switch (c) {
    case MessageClass::Down: return "down";
    case MessageClass::Feedback: return "feedback";
    case MessageClass::FinalDown: return "final";
  }
  return "?";
}

// FNV-1a over every trace line; the file itself is optional.
class Trace {
 public:
  explicit Trace(std::ostream* out) : out_(out) {}

  void line(double time, std::string_view kind, NodeId src, NodeId dst,
            std::optional<DiffId> diffusion, std::uint64_t payload) {
    buf_.clear();
    fmt::format_to(std::back_inserter(buf_), "{}\t{}\t", time, kind);
    put_node(src);
    buf_.push_back('\t');
    put_node(dst);
    buf_.push_back('\t');
    if (diffusion) fmt::format_to(std::back_inserter(buf_), "{}", *diffusion);
    else buf_.push_back('-');
    fmt::format_to(std::back_inserter(buf_), "\t{}\n", payload);
    for (char c : buf_) {
      hash_ ^= static_cast<unsigned char>(c);
      hash_ *= 0x100000001b3ULL;
    }
    if (out_) out_->write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  }

  std::uint64_t hash() const { return hash_; }

 private:
  void put_node(NodeId v) {
    if (v == kNoNode) buf_.push_back('-');
    else fmt::format_to(std::back_inserter(buf_), "{}", v);
  }

  std::ostream* out_;
  std::string buf_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg)
      : cfg_(cfg),
        timeout_(cfg.resolved_timeout()),
        trace_(cfg.trace),
        walk_rng_(derive_seed(cfg.seed, stream::kWalk)) {
    cfg_.validate();
    if (cfg.topology_override) {
      topology_ = *cfg.topology_override;
    } else if (cfg.nodes == 1) {
      topology_ = Topology::from_edges(1, {});
    } else {
      topology_ = generate_topology(cfg.nodes, cfg.topology, derive_seed(cfg.seed, stream::kTopology));
    }
    if (!topology_.is_connected()) throw InvalidParameter("topology is not connected");
    n_ = topology_.size();

    TaskStateSet initial = cfg.tasks_override
                               ? *cfg.tasks_override
                               : generate_tasks(cfg.tasks, 0, cfg.mu, cfg.sigma,
                                                derive_seed(cfg.seed, stream::kTasks));
    if (initial.empty()) throw InvalidParameter("empty task set");
    if (initial.count(TaskState::Uncomputed) != initial.size())
      throw InvalidParameter("initial tasks must all be uncomputed");
    task_count_ = initial.size();
    max_task_id_ = 0;
    for (const Task& t : initial.tasks()) max_task_id_ = std::max<std::size_t>(max_task_id_, t.id);
    first_done_.assign(max_task_id_ + 1, 0);

    nodes_.resize(n_);
    rngs_.reserve(n_);
    for (NodeId i = 0; i < n_; ++i) {
      nodes_[i].id = i;
      nodes_[i].view = initial;
      rngs_.emplace_back(derive_seed(cfg.seed, stream::kNodeBase + i));
    }
    alive_.assign(n_, 1);
    live_count_ = n_;
    informed_.assign(n_, 0);

    result_.nodes = n_;
    result_.task_count = task_count_;
    result_.t_sequential = total_length(initial);
    propagation_ = cfg.track_propagation && cfg.crashes.empty();
  }

  RunResult run() {
    for (NodeId i = 0; i < n_; ++i) try_start(i);
    token_site_ = 0;
    schedule(0.0, TokenArrive{kNoNode, 0});
    for (const auto& c : cfg_.crashes) schedule(c.time, CrashEvent{c.node});

    // Once done, events sharing the final timestamp still run.
    while (!queue_.empty() && !(done_ && queue_.front().time > now_)) {
      std::pop_heap(queue_.begin(), queue_.end(), Later{});
      Event ev = std::move(queue_.back());
      queue_.pop_back();
      if (ev.time > cfg_.max_time) {
        queue_.push_back(std::move(ev));
        std::push_heap(queue_.begin(), queue_.end(), Later{});
        break;
      }
      if (ev.time < now_) ++result_.time_regressions;
      now_ = ev.time;
      ++result_.events;
      std::visit([this](auto& p) { handle(p); }, ev.payload);
    }
    return finish();
  }

 private:
  // ---- scheduling -------------------------------------------------------

  void schedule(double time, Payload p) {
    if (time < now_) ++result_.time_regressions;
    queue_.push_back(Event{time, seq_++, std::move(p)});
    std::push_heap(queue_.begin(), queue_.end(), Later{});
  }

  void send(Envelope env) {
    const MessageClass cls = classify(env.msg);
    ++traffic_[class_index(cls)].sent;
    const DiffId d = std::visit([](const auto& m) { return m.diffusion; }, env.msg);
    DiffusionStats& st = stats(d);
    switch (cls) {
      case MessageClass::Down: ++msgs_.down; ++st.down_msgs; break;
      case MessageClass::Feedback: ++msgs_.feedback; ++st.feedback_msgs; break;
      case MessageClass::FinalDown:
        ++msgs_.final_down;
        ++st.final_msgs;
        ++final_in_flight_[d - 1];
        break;
    }
    schedule(now_ + cfg_.msg_hop_cost, Deliver{std::move(env)});
  }

  DiffusionStats& stats(DiffId d) {
    if (d == 0 || d > diffusions_.size()) throw ProtocolViolation("unknown diffusion id");
    return diffusions_[d - 1];
  }

  // ---- handlers ---------------------------------------------------------

  void handle(TokenArrive& e) {
    if (!alive_[e.to]) throw ProtocolViolation("token delivered to a crashed node");
    ++result_.token_arrivals;
    if (e.from != kNoNode) ++traffic_[kTokenClass].delivered;
    trace_.line(now_, "token", e.from, e.to, std::nullopt, token_.tasks.size());
    HandlerOutput out = on_token_arrival(nodes_[e.to], token_, topology_, cfg_.method, now_, timeout_);
    apply(e.to, out);
    depart(e.to);
  }

  void handle(TokenRetry& e) { depart(e.at); }

  void depart(NodeId at) {
    if (topology_.neighbors(at).empty()) return;  // single node: the token parks
    const NodeId next = step_token(topology_, at, alive_, walk_rng_);
    if (next == kNoNode) {
      schedule(now_ + cfg_.hop_cost, TokenRetry{at});
      return;
    }
    ++msgs_.token_hops;
    ++traffic_[kTokenClass].sent;
    token_site_ = next;
    schedule(now_ + cfg_.hop_cost, TokenArrive{at, next});
    if (deferred_crash_.erase(at)) crash(at);
  }

  void handle(Deliver& e) {
    const Envelope& env = e.env;
    const MessageClass cls = classify(env.msg);
    auto& traffic = traffic_[class_index(cls)];
    const DiffId d = std::visit([](const auto& m) { return m.diffusion; }, env.msg);
    if (!alive_[env.to]) {
      ++traffic.dropped;
      ++msgs_.dropped;
      trace_.line(now_, fmt::format("drop-{}", class_name(cls)), env.from, env.to, d, payload_size(env.msg));
      if (cls == MessageClass::FinalDown) final_message_done(d);
      return;
    }
    ++traffic.delivered;
    trace_.line(now_, class_name(cls), env.from, env.to, d, payload_size(env.msg));
    NodeState& node = nodes_[env.to];
    HandlerOutput out;
    if (const auto* down = std::get_if<DiffusionMsg>(&env.msg)) {
      out = on_down_msg(node, env.from, *down, cfg_.method, now_, timeout_, token_.id);
      if (cls == MessageClass::FinalDown) snapshot(d, env.to);
    } else {
      out = on_feedback_msg(node, env.from, std::get<FeedbackMsg>(env.msg), token_.id);
    }
    apply(env.to, out);
    if (cls == MessageClass::FinalDown) final_message_done(d);
  }

  void handle(TaskDone& e) {
    NodeState& node = nodes_[e.node];
    if (!alive_[e.node]) {
      trace_.line(now_, "lost", e.node, e.node, std::nullopt, e.task);
      return;
    }
    trace_.line(now_, "done", e.node, e.node, std::nullopt, e.task);
    node.computing.reset();
    // Already Computed here means another node's result arrived first; the
    // local one is a replica and the first recorded result stands.
    if (node.view.state(e.task) == TaskState::InProgress) complete_task(node.view, e.task, e.node, now_);
    if (!complete_ || now_ == result_.t_distributed) completions_.push_back(Completion{e.task, e.node, now_});
    refresh_informed(e.node);
    if (!first_done_[e.task]) {
      first_done_[e.task] = 1;
      if (++distinct_done_ == task_count_) all_done();
    }
    try_start(e.node);
  }

  void handle(TimeoutFire& e) {
    if (!alive_[e.node]) return;
    HandlerOutput out = on_feedback_timeout(nodes_[e.node], e.diffusion, now_);
    if (out.timeout_acted) {
      trace_.line(now_, "timeout", e.node, e.node, e.diffusion, 0);
      if (!fired_.emplace(e.node, e.diffusion).second) ++result_.timeout_repeats;
      ++result_.timeout_fires;
      ++stats(e.diffusion).timeouts;
    }
    apply(e.node, out);
  }

  void handle(CrashEvent& e) {
    if (!alive_[e.node]) return;
    if (e.node == token_site_) {
      trace_.line(now_, "crash-deferred", e.node, e.node, std::nullopt, 0);
      deferred_crash_.insert(e.node);
      return;
    }
    crash(e.node);
  }

  void crash(NodeId v) {
    alive_[v] = 0;
    dead_.insert(v);
    result_.crashed.push_back(v);
    if (informed_[v]) {
      informed_[v] = 0;
      --informed_count_;
    }
    --live_count_;
    trace_.line(now_, "crash", v, v, std::nullopt, 0);
    check_propagated();
  }

  // ---- bookkeeping ------------------------------------------------------

  void apply(NodeId at, HandlerOutput& out) {
    if (out.launched) {
      if (*out.launched != diffusions_.size() + 1) throw ProtocolViolation("diffusion ids out of order");
      DiffusionStats st;
      st.id = *out.launched;
      st.initiator = at;
      st.launched_at = now_;
      st.covered = out.launched_tree->size();
      st.height = out.launched_tree->height();
      diffusions_.push_back(st);
      final_in_flight_.push_back(0);
      final_launched_.push_back(0);
      snapshots_.emplace_back();
      trees_.push_back(cfg_.check_convergence && cfg_.method.method == Method::Dm ? out.launched_tree
                                                                                   : nullptr);
    }
    for (auto& env : out.sends) send(std::move(env));
    for (const auto& t : out.timeouts) schedule(t.deadline, TimeoutFire{at, t.diffusion});
    if (out.wave_closed) stats(*out.wave_closed).closed_at = now_;
    if (out.late_feedback) ++result_.late_feedbacks;
    if (out.invalid) {
      ++msgs_.invalid;
      trace_.line(now_, "invalid", at, at, std::nullopt, 0);
    }
    if (out.final_launched) {
      snapshot(*out.final_launched, at);
      final_launched_[*out.final_launched - 1] = 1;
      if (final_in_flight_[*out.final_launched - 1] == 0) final_complete(*out.final_launched);
    }
    if (out.view_changed) {
      refresh_informed(at);
      try_start(at);
    }
  }

  // Views as the re-diffusion left them, before any local task start.
  void snapshot(DiffId d, NodeId v) {
    if (trees_[d - 1]) snapshots_[d - 1].insert_or_assign(v, nodes_[v].view);
  }

  void final_message_done(DiffId d) {
    if (--final_in_flight_[d - 1] == 0 && final_launched_[d - 1]) final_complete(d);
  }

  void final_complete(DiffId d) {
    DiffusionStats& st = stats(d);
    st.final_done_at = now_;
    const auto tree = trees_[d - 1];
    trees_[d - 1].reset();
    const auto views = std::move(snapshots_[d - 1]);
    if (!tree || !alive_[tree->root()]) return;
    const SpanTree covered = prune_crashed(*tree, dead_);
    const TaskStateSet& reference = views.at(covered.root());
    std::size_t mismatches = 0;
    for (NodeId v : covered.nodes()) {
      const auto it = views.find(v);
      if (it == views.end() || !it->second.same_states(reference)) ++mismatches;
    }
    st.convergence_mismatches = mismatches;
    ++result_.convergence_checks;
    if (mismatches) ++result_.convergence_failures;
  }

  void try_start(NodeId v) {
    if (!alive_[v] || nodes_[v].computing) return;
    auto start = on_local_idle(nodes_[v], rngs_[v], cfg_.reclaim_in_progress);
    if (!start) return;
    trace_.line(now_, "start", v, v, std::nullopt, start->task);
    schedule(now_ + start->length, TaskDone{v, start->task});
  }

  void refresh_informed(NodeId v) {
    if (informed_[v] || !alive_[v]) return;
    if (nodes_[v].view.count(TaskState::Computed) == task_count_) {
      informed_[v] = 1;
      ++informed_count_;
      check_propagated();
    }
  }

  void all_done() {
    complete_ = true;
    result_.complete = true;
    result_.t_distributed = now_;
    result_.msgs = msgs_;
    trace_.line(now_, "complete", kNoNode, kNoNode, std::nullopt, distinct_done_);
    if (!propagation_) {
      done_ = true;
      return;
    }
    check_propagated();
  }

  void check_propagated() {
    if (!complete_ || !propagation_ || done_) return;
    if (informed_count_ == live_count_) {
      result_.t_propagate = now_;
      trace_.line(now_, "propagated", kNoNode, kNoNode, std::nullopt, informed_count_);
      done_ = true;
    }
  }

  RunResult finish() {
    result_.end_time = now_;
    result_.msgs_at_end = msgs_;
    if (!complete_) result_.msgs = msgs_;
    for (const Event& ev : queue_) {
      if (std::holds_alternative<TokenArrive>(ev.payload)) {
        if (std::get<TokenArrive>(ev.payload).from != kNoNode) ++traffic_[kTokenClass].in_flight;
      } else if (const auto* d = std::get_if<Deliver>(&ev.payload)) {
        ++traffic_[class_index(classify(d->env.msg))].in_flight;
      }
    }
    result_.traffic = traffic_;
    result_.completions = std::move(completions_);
    std::vector<std::uint32_t> per_task(max_task_id_ + 1, 0);
    for (const auto& c : result_.completions) ++per_task[c.task];
    for (auto k : per_task)
      if (k > 1) result_.replicated += k - 1;
    result_.diffusions = std::move(diffusions_);
    result_.trace_hash = trace_.hash();
    if (cfg_.keep_final_views)
      for (const auto& node : nodes_) result_.final_views.push_back(node.view);
    return std::move(result_);
  }

  SimConfig cfg_;
  double timeout_;
  Trace trace_;
  Rng walk_rng_;
  Topology topology_;
  std::size_t n_ = 0;
  std::size_t task_count_ = 0;
  std::size_t max_task_id_ = 0;

  std::vector<NodeState> nodes_;
  std::vector<Rng> rngs_;
  std::vector<char> alive_;
  std::set<NodeId> dead_;
  std::vector<char> informed_;
  std::size_t informed_count_ = 0;
  std::size_t live_count_ = 0;

  Token token_;
  NodeId token_site_ = 0;
  std::set<NodeId> deferred_crash_;

  std::vector<Event> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;

  std::vector<char> first_done_;
  std::size_t distinct_done_ = 0;
  std::vector<Completion> completions_;
  bool complete_ = false;
  bool propagation_ = false;
  bool done_ = false;

  MessageCounts msgs_;
  std::array<ClassTraffic, 4> traffic_{};
  std::vector<DiffusionStats> diffusions_;
  std::vector<std::uint64_t> final_in_flight_;
  std::vector<char> final_launched_;
  std::vector<std::shared_ptr<const SpanTree>> trees_;
  std::vector<std::map<NodeId, TaskStateSet>> snapshots_;
  std::set<std::pair<NodeId, DiffId>> fired_;

  RunResult result_;
};

}  // namespace

RunResult run(const SimConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

}  // namespace gridwalk
