#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "gridwalk/graph.hpp"
#include "gridwalk/rng.hpp"

namespace gridwalk {

using TaskId = std::uint32_t;

// Merge lattice: Uncomputed < InProgress < Computed.
enum class TaskState : std::uint8_t { Uncomputed = 0, InProgress = 1, Computed = 2 };

const char* to_string(TaskState s);

struct TaskResult {
  NodeId computed_by = kNoNode;
  double completed_at = 0.0;
  friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

struct Task {
  TaskId id = 0;
  NodeId emitter = 0;
  double length = 1.0;
  TaskState state = TaskState::Uncomputed;
  std::optional<TaskResult> result;  // present iff state == Computed

  friend bool operator==(const Task&, const Task&) = default;
};

struct MergeStats {
  std::size_t added = 0;
  std::size_t raised = 0;
  std::size_t divergent = 0;
  bool changed() const { return added + raised > 0; }
};

class TaskStateSet;
MergeStats merge_into(TaskStateSet& dst, const TaskStateSet& src);
std::optional<TaskId> select_task(TaskStateSet& e, Rng& rng);
void complete_task(TaskStateSet& e, TaskId id, NodeId node, double now);

// A node's (or token's, or message's) view of the workload.
//
// Task ids index dense arrays, so the set is sized by the largest id it has
// ever held. Lengths and emitters never change after insertion and are
// shared between copies until one of them inserts. Per-state counts are
// maintained incrementally.
class TaskStateSet {
 public:
  // Adds the task or overwrites the existing entry with the same id.
  // Throws InvalidParameter when the Task invariants do not hold.
  void insert(const Task& task);

  bool contains(TaskId id) const { return id < code_.size() && code_[id] != kAbsent; }
  std::optional<Task> get(TaskId id) const;
  // Throws InvalidParameter for unknown ids.
  TaskState state(TaskId id) const;

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::size_t count(TaskState s) const { return counts_[static_cast<int>(s)]; }

  // Replicated-result conflicts seen by merges into this set.
  std::uint64_t divergences() const { return divergences_; }

  std::vector<Task> tasks() const;  // ascending id
  std::vector<TaskId> ids_in_state(TaskState s) const;

  // Compares entries only; divergence counters are bookkeeping.
  friend bool operator==(const TaskStateSet& a, const TaskStateSet& b);

  // True when both hold the same ids, each in the same state.
  bool same_states(const TaskStateSet& other) const;

 private:
  friend MergeStats merge_into(TaskStateSet& dst, const TaskStateSet& src);
  friend std::optional<TaskId> select_task(TaskStateSet& e, Rng& rng);
  friend void complete_task(TaskStateSet& e, TaskId id, NodeId node, double now);

  // code_ holds state + 1, or kAbsent.
  static constexpr std::uint8_t kAbsent = 0;
  static std::uint8_t code(TaskState s) { return static_cast<std::uint8_t>(s) + 1; }
  static TaskState decode(std::uint8_t c) { return static_cast<TaskState>(c - 1); }

  struct Params {
    std::vector<double> length;
    std::vector<NodeId> emitter;
  };

  void grow(std::size_t n);
  Params& own_params();
  void set_state(TaskId id, TaskState s);

  std::shared_ptr<Params> params_ = std::make_shared<Params>();
  std::vector<std::uint8_t> code_;
  std::vector<NodeId> computed_by_;
  std::vector<double> completed_at_;
  std::size_t size_ = 0;
  std::size_t counts_[3] = {0, 0, 0};
  std::uint64_t divergences_ = 0;
};

// Per-task lattice max of dst and src, written into dst. On equal states
// dst is kept; two Computed entries with different results count as a
// divergence (a replicated computation) and dst is kept.
MergeStats merge_into(TaskStateSet& dst, const TaskStateSet& src);
TaskStateSet merge(TaskStateSet dst, const TaskStateSet& src);

// Picks an Uncomputed entry uniformly at random and marks it InProgress.
std::optional<TaskId> select_task(TaskStateSet& e, Rng& rng);

// Picks an InProgress entry uniformly at random without changing it. Used
// by idle nodes to re-run work whose owner may have failed.
std::optional<TaskId> select_in_progress(const TaskStateSet& e, Rng& rng);

// InProgress -> Computed with result {node, now}. Throws InvalidState for
// any other current state.
void complete_task(TaskStateSet& e, TaskId id, NodeId node, double now);

// count tasks with ids 0..count-1, i.i.d. log-normal(mu, sigma) lengths.
TaskStateSet generate_tasks(std::size_t count, NodeId emitter, double mu, double sigma,
                            std::uint64_t seed);

double total_length(const TaskStateSet& e);

// CSV: id,emitter,length,state,computed_by,completed_at
void write_task_csv(std::ostream& out, const TaskStateSet& e);
TaskStateSet read_task_csv(std::istream& in);

}  // namespace gridwalk
