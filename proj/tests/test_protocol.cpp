#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include "gridwalk/errors.hpp"
#include "gridwalk/protocol.hpp"

using namespace gridwalk;

namespace {

TaskStateSet fresh(std::size_t count) { return generate_tasks(count, 0, 0.0, 0.0, 1); }

// Task i is Computed by node i in that node's view.
std::vector<NodeState> nodes_with_own_result(std::size_t n, std::size_t tasks) {
  std::vector<NodeState> nodes(n);
  for (NodeId i = 0; i < n; ++i) {
    nodes[i].id = i;
    nodes[i].view = fresh(tasks);
    if (i < tasks) {
      nodes[i].view.insert(Task{i, 0, 1.0, TaskState::InProgress, std::nullopt});
      complete_task(nodes[i].view, i, i, 1.0);
    }
  }
  return nodes;
}

Token token_with_word(const Topology& topo, const std::vector<NodeId>& walk, std::size_t tasks) {
  Token t;
  t.tasks = fresh(tasks);
  for (NodeId v : walk) t.word.append_visit(v, topo);
  return t;
}

MethodConfig always(Method m) {
  MethodConfig cfg;
  cfg.method = m;
  cfg.min_refresh = 0.5;  // b <= 0.5, so every hop diffuses
  return cfg;
}

struct Delivery {
  double time;
  Envelope env;
};

// Delivers every message one hop after it was sent, in send order, until
// no message is left. Messages to nodes in `dead` vanish.
struct Network {
  std::vector<NodeState>& nodes;
  MethodConfig cfg;
  double timeout = 100.0;
  std::set<NodeId> dead;
  std::deque<Delivery> queue;
  std::vector<Envelope> delivered;
  std::size_t feedback_sent = 0;

  void post(const HandlerOutput& out, double now) {
    for (const auto& e : out.sends) {
      if (std::holds_alternative<FeedbackMsg>(e.msg)) ++feedback_sent;
      queue.push_back(Delivery{now + 1.0, e});
    }
  }

  double drain() {
    double now = 0.0;
    while (!queue.empty()) {
      Delivery d = queue.front();
      queue.pop_front();
      now = d.time;
      if (dead.count(d.env.to)) continue;
      delivered.push_back(d.env);
      NodeState& node = nodes[d.env.to];
      HandlerOutput out;
      if (const auto* m = std::get_if<DiffusionMsg>(&d.env.msg)) {
        out = on_down_msg(node, d.env.from, *m, cfg, now, timeout);
      } else {
        out = on_feedback_msg(node, d.env.from, std::get<FeedbackMsg>(d.env.msg));
      }
      post(out, now);
    }
    return now;
  }
};

}  // namespace

TEST_CASE("refresh bound") {
  MethodConfig cfg;
  CHECK(compute_bound(20000, 1000, cfg) == 1500.0);
  CHECK(compute_bound(0, 1000, cfg) == 0.0);
  CHECK(compute_bound(1, 1000, cfg) == 1.0);
  CHECK_THROWS_AS(compute_bound(1, 0, cfg), InvalidParameter);
  MethodConfig bad;
  bad.refresh_coefficient = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidParameter);
}

TEST_CASE("method names") {
  for (Method m : {Method::Active, Method::Ds, Method::Df, Method::Dm})
    CHECK(parse_method(to_string(m)) == m);
  CHECK(parse_method("DM") == Method::Dm);
  CHECK_THROWS_AS(parse_method("dx"), InvalidParameter);
}

TEST_CASE("the active method never diffuses") {
  const auto topo = Topology::from_edges(3, {{0, 1}, {1, 2}});
  auto nodes = nodes_with_own_result(3, 3);
  Token tok;
  tok.tasks = fresh(3);
  MethodConfig cfg = always(Method::Active);
  NodeId at = 0;
  for (int hop = 0; hop < 20; ++hop) {
    const auto out = on_token_arrival(nodes[at], tok, topo, cfg, hop, 10.0);
    CHECK(out.sends.empty());
    CHECK_FALSE(out.launched);
    at = at == 1 ? (hop % 4 == 1 ? 2 : 0) : 1;
  }
  CHECK(tok.diffusions == 0);
  CHECK(tok.hops == 20);
  CHECK(tok.tasks.count(TaskState::Computed) == 3);
}

TEST_CASE("Ds launch sends the token set and each child's subtree") {
  const auto topo = Topology::from_edges(4, {{0, 1}, {0, 2}, {2, 3}});
  auto nodes = nodes_with_own_result(4, 4);
  Token tok = token_with_word(topo, {3, 2, 0, 1}, 4);
  MethodConfig cfg;
  cfg.method = Method::Ds;
  cfg.min_refresh = 3.0;
  tok.hops = 3;  // C_T was b; this arrival pushes it past
  const auto out = on_token_arrival(nodes[0], tok, topo, cfg, 0.0, 10.0);
  REQUIRE(out.launched);
  CHECK(tok.hops == 0);
  CHECK(tok.diffusions == 1);
  REQUIRE(out.sends.size() == 2);
  for (const auto& e : out.sends) {
    const auto& m = std::get<DiffusionMsg>(e.msg);
    CHECK(m.phase == Phase::Down);
    CHECK(*m.tasks == tok.tasks);
    CHECK(m.tree.root() == e.to);
    CHECK(m.tree.materialize() == subtree(*out.launched_tree, e.to));
  }
  CHECK(out.sends[0].to == 1);
  CHECK(out.sends[1].to == 2);
  CHECK(out.sends[1].msg.index() == 0);
  CHECK(std::get<DiffusionMsg>(out.sends[1].msg).tree.size() == 2);
}

TEST_CASE("no launch while the hop counter is within the bound") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  NodeState node{0, fresh(10), {}, std::nullopt};
  Token tok;
  tok.tasks = fresh(10);
  MethodConfig cfg;
  cfg.method = Method::Dm;
  cfg.min_refresh = 2.0;
  tok.hops = 1;
  CHECK_FALSE(on_token_arrival(node, tok, topo, cfg, 0.0, 1.0).launched);
  CHECK(tok.hops == 2);
}

TEST_CASE("two nodes with b=1: a diffusion every second hop, views equal afterwards") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  std::vector<NodeState> nodes(2);
  for (NodeId i = 0; i < 2; ++i) nodes[i] = NodeState{i, fresh(10), {}, std::nullopt};
  Rng rng(3);
  Token tok;
  tok.tasks = fresh(10);
  MethodConfig cfg;
  cfg.method = Method::Ds;
  cfg.refresh_coefficient = 1e6;
  cfg.min_refresh = 1.0;

  // Hand simulation: hops 1..6 alternate 0,1,0,1,0,1. C_T reaches 2 > b on
  // hops 2, 4, 6, each time at node 1, whose only tree child is node 0.
  const std::vector<bool> expect_launch{false, true, false, true, false, true};
  for (int hop = 0; hop < 6; ++hop) {
    const NodeId at = hop % 2;
    on_local_idle(nodes[at], rng);  // the holder starts work before the token lands
    nodes[at].computing.reset();
    const auto out = on_token_arrival(nodes[at], tok, topo, cfg, hop, 10.0);
    CHECK(out.launched.has_value() == expect_launch[hop]);
    if (!out.launched) continue;
    CHECK(at == 1);
    REQUIRE(out.sends.size() == 1);
    CHECK(out.sends[0].to == 0);
    const auto reply = on_down_msg(nodes[0], 1, std::get<DiffusionMsg>(out.sends[0].msg), cfg, hop + 1, 10.0);
    CHECK(reply.sends.empty());
    CHECK(nodes[0].view == nodes[1].view);
  }
  CHECK(tok.diffusions == 3);
}

TEST_CASE("Ds: a leaf only merges") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  auto nodes = nodes_with_own_result(2, 2);
  Token tok = token_with_word(topo, {1}, 2);
  const auto launch = on_token_arrival(nodes[0], tok, topo, always(Method::Ds), 0.0, 10.0);
  REQUIRE(launch.sends.size() == 1);
  const auto out = on_down_msg(nodes[1], 0, std::get<DiffusionMsg>(launch.sends[0].msg),
                               always(Method::Ds), 1.0, 10.0);
  CHECK(out.sends.empty());
  CHECK_FALSE(out.feedback_sent);
  CHECK(nodes[1].view.state(0) == TaskState::Computed);
  CHECK(nodes[1].records.empty());
}

TEST_CASE("Ds: a deep node collects the sets of every ancestor but not of siblings") {
  // Tree rooted at 0: 0 -> {1, 2}, 2 -> 3 -> 4 -> 5.
  const auto topo = Topology::from_edges(6, {{0, 1}, {0, 2}, {2, 3}, {3, 4}, {4, 5}});
  auto nodes = nodes_with_own_result(6, 6);
  Token tok = token_with_word(topo, {5, 4, 3, 2, 0, 1}, 6);
  Network net{nodes, always(Method::Ds)};
  const auto launch = on_token_arrival(nodes[0], tok, topo, net.cfg, 0.0, 10.0);
  REQUIRE(launch.sends.size() == 2);
  net.post(launch, 0.0);
  net.drain();
  for (TaskId t : {0u, 2u, 3u, 4u, 5u}) CHECK(nodes[5].view.state(t) == TaskState::Computed);
  CHECK(nodes[5].view.state(1) == TaskState::Uncomputed);
  // The initiator learns nothing from its own diffusion.
  CHECK(nodes[0].view.count(TaskState::Computed) == 1);
  CHECK(net.delivered.size() == 5);
}

TEST_CASE("an interior node with two children forwards two subtrees") {
  const auto topo = Topology::from_edges(4, {{0, 1}, {1, 2}, {1, 3}});
  auto nodes = nodes_with_own_result(4, 4);
  Token tok = token_with_word(topo, {2, 1, 3, 1}, 4);
  const auto launch = on_token_arrival(nodes[0], tok, topo, always(Method::Ds), 0.0, 10.0);
  REQUIRE(launch.sends.size() == 1);
  const auto& m = std::get<DiffusionMsg>(launch.sends[0].msg);
  const auto out = on_down_msg(nodes[1], 0, m, always(Method::Ds), 1.0, 10.0);
  REQUIRE(out.sends.size() == 2);
  for (const auto& e : out.sends) {
    const auto& fwd = std::get<DiffusionMsg>(e.msg);
    CHECK(fwd.tree.materialize() == subtree(*launch.launched_tree, e.to));
    CHECK(fwd.tasks->state(1) == TaskState::Computed);
  }
}

TEST_CASE("Df: a single-child record closes on feedback and feeds back upward") {
  const auto topo = Topology::from_edges(3, {{0, 1}, {1, 2}});
  auto nodes = nodes_with_own_result(3, 3);
  Token tok = token_with_word(topo, {2, 1}, 3);
  const auto cfg = always(Method::Df);
  const auto launch = on_token_arrival(nodes[0], tok, topo, cfg, 0.0, 10.0);
  CHECK(nodes[0].records.size() == 1);
  REQUIRE(launch.timeouts.size() == 1);
  CHECK(launch.timeouts[0].deadline == 10.0);

  const auto at1 = on_down_msg(nodes[1], 0, std::get<DiffusionMsg>(launch.sends[0].msg), cfg, 1.0, 10.0);
  REQUIRE(at1.sends.size() == 1);
  CHECK(nodes[1].records.at(1).pending_sons == std::set<NodeId>{2});
  CHECK(*nodes[1].records.at(1).father == 0);

  const auto at2 = on_down_msg(nodes[2], 1, std::get<DiffusionMsg>(at1.sends[0].msg), cfg, 2.0, 10.0);
  REQUIRE(at2.sends.size() == 1);
  CHECK(at2.feedback_sent);
  CHECK(at2.sends[0].to == 1);

  const auto up = on_feedback_msg(nodes[1], 2, std::get<FeedbackMsg>(at2.sends[0].msg));
  CHECK(nodes[1].records.empty());
  REQUIRE(up.sends.size() == 1);
  CHECK(up.sends[0].to == 0);
  const auto& fb = std::get<FeedbackMsg>(up.sends[0].msg);
  CHECK(fb.tasks->count(TaskState::Computed) == 3);

  const auto top = on_feedback_msg(nodes[0], 1, fb);
  CHECK(top.wave_closed == std::optional<DiffId>(1));
  CHECK(top.sends.empty());  // Df stops here
  CHECK(nodes[0].view.count(TaskState::Computed) == 3);
}

TEST_CASE("Dm: the initiator re-diffuses and every covered node ends with the same view") {
  const auto topo = generate_topology(8, TopologyModel::random(0.3), 5);
  auto nodes = nodes_with_own_result(8, 8);
  Rng rng(1);
  Token tok;
  tok.tasks = fresh(8);
  NodeId at = 0;
  for (int hop = 0; hop < 200; ++hop) {
    tok.word.append_visit(at, topo);
    const auto nb = topo.neighbors(at);
    at = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
  }
  Network net{nodes, always(Method::Dm)};
  const auto launch = on_token_arrival(nodes[at], tok, topo, net.cfg, 0.0, net.timeout);
  net.post(launch, 0.0);
  net.drain();
  std::size_t finals = 0;
  for (const auto& e : net.delivered)
    if (classify(e.msg) == MessageClass::FinalDown) ++finals;
  const auto& tree = *launch.launched_tree;
  CHECK(finals == tree.size() - 1);
  for (NodeId v : tree.nodes()) {
    CHECK(nodes[v].view == nodes[at].view);
    CHECK(nodes[v].records.empty());
  }
  CHECK(nodes[at].view.count(TaskState::Computed) == tree.size());
}

TEST_CASE("late feedback after a timeout updates the view without output") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  auto nodes = nodes_with_own_result(2, 2);
  Token tok = token_with_word(topo, {1}, 2);
  const auto cfg = always(Method::Df);
  const auto launch = on_token_arrival(nodes[0], tok, topo, cfg, 0.0, 5.0);
  CHECK_THROWS_AS(on_feedback_timeout(nodes[0], 1, 4.0), ProtocolViolation);
  const auto fired = on_feedback_timeout(nodes[0], 1, 5.0);
  CHECK(fired.timeout_acted);
  CHECK(fired.wave_closed == std::optional<DiffId>(1));

  const auto leaf = on_down_msg(nodes[1], 0, std::get<DiffusionMsg>(launch.sends[0].msg), cfg, 6.0, 5.0);
  const auto late = on_feedback_msg(nodes[0], 1, std::get<FeedbackMsg>(leaf.sends[0].msg));
  CHECK(late.late_feedback);
  CHECK(late.sends.empty());
  CHECK(late.view_changed);
  CHECK(nodes[0].view.state(1) == TaskState::Computed);
  // A second fire for the same record is a no-op.
  CHECK_FALSE(on_feedback_timeout(nodes[0], 1, 9.0).timeout_acted);
}

TEST_CASE("a timeout after every son answered does nothing") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  auto nodes = nodes_with_own_result(2, 2);
  Token tok = token_with_word(topo, {1}, 2);
  Network net{nodes, always(Method::Df), 5.0};
  net.post(on_token_arrival(nodes[0], tok, topo, net.cfg, 0.0, 5.0), 0.0);
  net.drain();
  CHECK(nodes[0].records.empty());
  const auto out = on_feedback_timeout(nodes[0], 1, 5.0);
  CHECK_FALSE(out.timeout_acted);
  CHECK(out.sends.empty());
}

TEST_CASE("chain of five with the middle node crashed after receiving Down") {
  // Tree 0 -> 1 -> 2 -> 3 -> 4, messages take one time unit.
  const auto topo = Topology::from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  auto nodes = nodes_with_own_result(5, 5);
  Token tok = token_with_word(topo, {4, 3, 2, 1}, 5);
  const double timeout = 10.0;
  Network net{nodes, always(Method::Df), timeout};
  const auto launch = on_token_arrival(nodes[0], tok, topo, net.cfg, 0.0, timeout);
  net.post(launch, 0.0);

  // Deliver 0->1 (t=1), 1->2 (t=2); node 2 forwards to 3 and then dies.
  for (int k = 0; k < 2; ++k) {
    Delivery d = net.queue.front();
    net.queue.pop_front();
    net.post(on_down_msg(nodes[d.env.to], d.env.from, std::get<DiffusionMsg>(d.env.msg), net.cfg, d.time, timeout), d.time);
  }
  net.dead.insert(2);
  net.drain();  // 3 -> 4, 4 feeds back to 3, 3 feeds back to the dead 2

  CHECK(nodes[0].records.count(1));
  CHECK(nodes[1].records.count(1));
  // Deadlines: initiator at 0 + timeout, node 1 at 1 + timeout.
  const auto init = on_feedback_timeout(nodes[0], 1, timeout);
  CHECK(init.timeout_acted);
  CHECK(init.wave_closed == std::optional<DiffId>(1));
  const auto mid = on_feedback_timeout(nodes[1], 1, 1.0 + timeout);
  REQUIRE(mid.sends.size() == 1);
  net.post(mid, 1.0 + timeout);
  net.drain();
  CHECK(net.feedback_sent <= 4);
  CHECK(nodes[0].view.state(1) == TaskState::Computed);
  CHECK(nodes[0].view.state(4) == TaskState::Uncomputed);  // its path ran through node 2
}

TEST_CASE("foreign token ids are rejected") {
  const auto topo = Topology::from_edges(2, {{0, 1}});
  auto nodes = nodes_with_own_result(2, 2);
  Token tok = token_with_word(topo, {1}, 2);
  auto launch = on_token_arrival(nodes[0], tok, topo, always(Method::Df), 0.0, 5.0);
  auto msg = std::get<DiffusionMsg>(launch.sends[0].msg);
  msg.token = 99;
  const auto out = on_down_msg(nodes[1], 0, msg, always(Method::Df), 1.0, 5.0);
  CHECK(out.invalid);
  CHECK(out.sends.empty());
  CHECK(nodes[1].view.state(0) == TaskState::Uncomputed);
}

TEST_CASE("a second Down for an open diffusion only merges") {
  const auto topo = Topology::from_edges(3, {{0, 1}, {1, 2}});
  auto nodes = nodes_with_own_result(3, 3);
  Token tok = token_with_word(topo, {2, 1}, 3);
  const auto cfg = always(Method::Df);
  const auto launch = on_token_arrival(nodes[0], tok, topo, cfg, 0.0, 10.0);
  const auto& m = std::get<DiffusionMsg>(launch.sends[0].msg);
  CHECK(on_down_msg(nodes[1], 0, m, cfg, 1.0, 10.0).sends.size() == 1);
  CHECK(on_down_msg(nodes[1], 0, m, cfg, 1.5, 10.0).sends.empty());
}

TEST_CASE("idle selection") {
  NodeState node{0, fresh(3), {}, std::nullopt};
  Rng rng(7);
  const auto first = on_local_idle(node, rng);
  REQUIRE(first);
  CHECK(node.view.state(first->task) == TaskState::InProgress);
  CHECK(first->length == doctest::Approx(1.0));
  CHECK_FALSE(on_local_idle(node, rng));  // busy

  NodeState done{1, fresh(1), {}, std::nullopt};
  done.view.insert(Task{0, 0, 1.0, TaskState::Computed, TaskResult{1, 2.0}});
  CHECK_FALSE(on_local_idle(done, rng));

  NodeState waiting{2, fresh(1), {}, std::nullopt};
  waiting.view.insert(Task{0, 0, 1.0, TaskState::InProgress, std::nullopt});
  CHECK_FALSE(on_local_idle(waiting, rng));
  const auto again = on_local_idle(waiting, rng, true);
  REQUIRE(again);
  CHECK(again->task == 0);
}

TEST_CASE("every node starts a task on a fresh workload") {
  Rng rng(11);
  for (NodeId i = 0; i < 10; ++i) {
    NodeState node{i, fresh(50), {}, std::nullopt};
    CHECK(on_local_idle(node, rng).has_value());
  }
}
