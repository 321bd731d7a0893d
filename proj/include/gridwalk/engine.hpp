#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gridwalk/graph.hpp"
#include "gridwalk/protocol.hpp"
#include "gridwalk/tasks.hpp"

namespace gridwalk {

struct CrashSpec {
  double time = 0.0;
  NodeId node = 0;

  // "t@node"
  static CrashSpec parse(const std::string& text);
  friend bool operator==(const CrashSpec&, const CrashSpec&) = default;
};

struct SimConfig {
  std::size_t nodes = 100;
  TopologyModel topology = TopologyModel::random(0.1);
  std::size_t tasks = 1000;
  double mu = 4.605170185988092;  // ln(100)
  double sigma = 0.5;
  MethodConfig method;
  double hop_cost = 1.0;      // token hop
  double msg_hop_cost = 1.0;  // diffusion / feedback hop
  std::vector<CrashSpec> crashes;
  std::uint64_t seed = 1;
  double max_time = 1e7;

  // Keep simulating after the last first-completion until every live node
  // knows every result. Ignored when crashes are planned.
  bool track_propagation = true;
  // Idle nodes re-run InProgress tasks; needed for liveness under crashes.
  bool reclaim_in_progress = false;
  // After each Dm re-diffusion completes, compare the covered nodes' views.
  bool check_convergence = false;
  bool keep_final_views = false;

  // Test hooks: replace the generated instance.
  std::optional<Topology> topology_override;
  std::optional<TaskStateSet> tasks_override;

  std::ostream* trace = nullptr;

  double resolved_timeout() const;
  void validate() const;
};

// Indexed by MessageClass, plus the token.
struct MessageCounts {
  std::uint64_t token_hops = 0;
  std::uint64_t down = 0;
  std::uint64_t feedback = 0;
  std::uint64_t final_down = 0;
  std::uint64_t dropped = 0;   // addressed to a crashed node
  std::uint64_t invalid = 0;   // foreign token id

  std::uint64_t total() const { return token_hops + down + feedback + final_down; }
  friend bool operator==(const MessageCounts&, const MessageCounts&) = default;
};

struct ClassTraffic {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  friend bool operator==(const ClassTraffic&, const ClassTraffic&) = default;
};

struct Completion {
  TaskId task = 0;
  NodeId node = 0;
  double time = 0.0;
  friend bool operator==(const Completion&, const Completion&) = default;
};

struct DiffusionStats {
  DiffId id = 0;
  NodeId initiator = 0;
  double launched_at = 0.0;
  std::size_t covered = 0;
  std::size_t height = 0;
  std::uint64_t down_msgs = 0;
  std::uint64_t feedback_msgs = 0;
  std::uint64_t final_msgs = 0;
  std::uint64_t timeouts = 0;
  double closed_at = -1.0;   // initiator done collecting (Df/Dm)
  double final_done_at = -1.0;
  // Set when convergence checking is on and the re-diffusion completed.
  std::optional<std::size_t> convergence_mismatches;

  std::uint64_t wave_hops() const { return down_msgs + feedback_msgs; }
  friend bool operator==(const DiffusionStats&, const DiffusionStats&) = default;
};

struct RunResult {
  bool complete = false;               // every task Computed somewhere
  double t_distributed = 0.0;          // last first-completion
  double t_propagate = -1.0;           // -1 when not measured or not reached
  double t_sequential = 0.0;           // sum of task lengths
  double end_time = 0.0;
  std::size_t nodes = 0;
  std::size_t task_count = 0;

  MessageCounts msgs;                  // snapshot at t_distributed
  MessageCounts msgs_at_end;
  std::array<ClassTraffic, 4> traffic{};  // Token, Down, Feedback, FinalDown at end

  std::vector<Completion> completions; // up to t_distributed
  std::uint64_t replicated = 0;        // at t_distributed
  std::vector<DiffusionStats> diffusions;

  std::uint64_t events = 0;
  std::uint64_t token_arrivals = 0;
  std::uint64_t timeout_fires = 0;     // timeouts that closed a record
  std::uint64_t timeout_repeats = 0;   // fires for an already-fired (node, diffusion)
  std::uint64_t late_feedbacks = 0;
  std::uint64_t time_regressions = 0;
  std::uint64_t convergence_checks = 0;
  std::uint64_t convergence_failures = 0;

  std::vector<NodeId> crashed;
  std::uint64_t trace_hash = 0;
  std::vector<TaskStateSet> final_views;  // when keep_final_views

  friend bool operator==(const RunResult&, const RunResult&) = default;
};

// Runs one simulation to completion (or max_time). Deterministic for a
// given config.
RunResult run(const SimConfig& cfg);

// Uniform choice among live neighbors, kNoNode when there is none.
NodeId step_token(const Topology& topology, NodeId holder, const std::vector<char>& alive,
                  Rng& rng);

std::string format_trace_hash(std::uint64_t h);

}  // namespace gridwalk
