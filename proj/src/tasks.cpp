#include "gridwalk/tasks.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "gridwalk/errors.hpp"

namespace gridwalk {

const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::Uncomputed: return "uncomputed";
    case TaskState::InProgress: return "in_progress";
    case TaskState::Computed: return "computed";
  }
  return "?";
}

namespace {

int idx(TaskState s) { return static_cast<int>(s); }

TaskState parse_state(const std::string& s) {
  if (s == "uncomputed") return TaskState::Uncomputed;
  if (s == "in_progress") return TaskState::InProgress;
  if (s == "computed") return TaskState::Computed;
  throw InvalidParameter("unknown task state '" + s + "'");
}

}  // namespace

void TaskStateSet::grow(std::size_t n) {
  if (code_.size() >= n) return;
  code_.resize(n, kAbsent);
  computed_by_.resize(n, kNoNode);
  completed_at_.resize(n, 0.0);
}

TaskStateSet::Params& TaskStateSet::own_params() {
  if (params_.use_count() != 1) params_ = std::make_shared<Params>(*params_);
  Params& p = *params_;
  if (p.length.size() < code_.size()) {
    p.length.resize(code_.size(), 0.0);
    p.emitter.resize(code_.size(), 0);
  }
  return p;
}

void TaskStateSet::insert(const Task& task) {
  if (!(task.length > 0.0) || !std::isfinite(task.length))
    throw InvalidParameter("task " + std::to_string(task.id) + " needs a positive length");
  if (task.result.has_value() != (task.state == TaskState::Computed))
    throw InvalidParameter("task " + std::to_string(task.id) + ": result present iff computed");
  grow(static_cast<std::size_t>(task.id) + 1);
  if (contains(task.id)) {
    --counts_[idx(decode(code_[task.id]))];
  } else {
    ++size_;
  }
  Params& p = own_params();
  p.length[task.id] = task.length;
  p.emitter[task.id] = task.emitter;
  code_[task.id] = code(task.state);
  computed_by_[task.id] = task.result ? task.result->computed_by : kNoNode;
  completed_at_[task.id] = task.result ? task.result->completed_at : 0.0;
  ++counts_[idx(task.state)];
}

std::optional<Task> TaskStateSet::get(TaskId id) const {
  if (!contains(id)) return std::nullopt;
  Task t{id, params_->emitter[id], params_->length[id], decode(code_[id]), std::nullopt};
  if (t.state == TaskState::Computed) t.result = TaskResult{computed_by_[id], completed_at_[id]};
  return t;
}

TaskState TaskStateSet::state(TaskId id) const {
  if (!contains(id)) throw InvalidParameter("unknown task " + std::to_string(id));
  return decode(code_[id]);
}

std::vector<Task> TaskStateSet::tasks() const {
  std::vector<Task> out;
  out.reserve(size_);
  for (TaskId id = 0; id < code_.size(); ++id)
    if (contains(id)) out.push_back(*get(id));
  return out;
}

std::vector<TaskId> TaskStateSet::ids_in_state(TaskState s) const {
  std::vector<TaskId> out;
  out.reserve(count(s));
  const std::uint8_t c = code(s);
  for (TaskId id = 0; id < code_.size(); ++id)
    if (code_[id] == c) out.push_back(id);
  return out;
}

bool operator==(const TaskStateSet& a, const TaskStateSet& b) {
  if (a.size_ != b.size_) return false;
  const std::size_t n = std::max(a.code_.size(), b.code_.size());
  for (TaskId id = 0; id < n; ++id) {
    if (a.contains(id) != b.contains(id)) return false;
    if (a.contains(id) && a.get(id) != b.get(id)) return false;
  }
  return true;
}

bool TaskStateSet::same_states(const TaskStateSet& other) const {
  if (size_ != other.size_) return false;
  const std::size_t n = std::max(code_.size(), other.code_.size());
  for (TaskId id = 0; id < n; ++id) {
    const std::uint8_t a = id < code_.size() ? code_[id] : kAbsent;
    const std::uint8_t b = id < other.code_.size() ? other.code_[id] : kAbsent;
    if (a != b) return false;
  }
  return true;
}

void TaskStateSet::set_state(TaskId id, TaskState s) {
  --counts_[idx(decode(code_[id]))];
  code_[id] = code(s);
  ++counts_[idx(s)];
}

MergeStats merge_into(TaskStateSet& dst, const TaskStateSet& src) {
  MergeStats stats;
  if (&dst == &src) return stats;
  using S = TaskStateSet;
  dst.grow(src.code_.size());
  const std::size_t n = src.code_.size();
  const std::uint8_t computed = S::code(TaskState::Computed);
  const std::uint8_t* sc = src.code_.data();
  std::uint8_t* dc = dst.code_.data();
  S::Params* params = nullptr;
  // A block whose codes match cannot raise anything; it only needs the
  // divergence count, which vectorizes. Results of entries that are not
  // Computed stay at their defaults.
  constexpr std::size_t kBlock = 64;
  const NodeId* sb = src.computed_by_.data();
  const NodeId* db = dst.computed_by_.data();
  const double* sa = src.completed_at_.data();
  const double* da = dst.completed_at_.data();
  for (std::size_t id = 0; id < n; ++id) {
    if (id % kBlock == 0 && id + kBlock <= n && std::memcmp(sc + id, dc + id, kBlock) == 0) {
      std::size_t div = 0;
      for (std::size_t k = id; k < id + kBlock; ++k)
        div += static_cast<std::size_t>((sc[k] == computed) & ((sb[k] != db[k]) | (sa[k] != da[k])));
      stats.divergent += div;
      id += kBlock - 1;
      continue;
    }
    const std::uint8_t s = sc[id];
    const std::uint8_t d = dc[id];
    if (s > d) {
      if (d == S::kAbsent) {
        if (!params) params = dst.params_ == src.params_ ? nullptr : &dst.own_params();
        if (params) {
          params->length[id] = src.params_->length[id];
          params->emitter[id] = src.params_->emitter[id];
        }
        ++dst.size_;
        ++stats.added;
      } else {
        --dst.counts_[d - 1];
        ++stats.raised;
      }
      dc[id] = s;
      ++dst.counts_[s - 1];
      dst.computed_by_[id] = src.computed_by_[id];
      dst.completed_at_[id] = src.completed_at_[id];
    } else if (s == computed && d == computed &&
               (src.computed_by_[id] != dst.computed_by_[id] ||
                src.completed_at_[id] != dst.completed_at_[id])) {
      ++stats.divergent;
    }
  }
  dst.divergences_ += stats.divergent;
  return stats;
}

TaskStateSet merge(TaskStateSet dst, const TaskStateSet& src) {
  merge_into(dst, src);
  return dst;
}

std::optional<TaskId> select_task(TaskStateSet& e, Rng& rng) {
  const std::size_t candidates = e.count(TaskState::Uncomputed);
  if (candidates == 0) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, candidates - 1);
  std::size_t k = pick(rng);
  const std::uint8_t c = TaskStateSet::code(TaskState::Uncomputed);
  for (TaskId id = 0; id < e.code_.size(); ++id) {
    if (e.code_[id] != c) continue;
    if (k-- == 0) {
      e.set_state(id, TaskState::InProgress);
      return id;
    }
  }
  throw ProtocolViolation("uncomputed count out of sync with entries");
}

std::optional<TaskId> select_in_progress(const TaskStateSet& e, Rng& rng) {
  const auto ids = e.ids_in_state(TaskState::InProgress);
  if (ids.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  return ids[pick(rng)];
}

void complete_task(TaskStateSet& e, TaskId id, NodeId node, double now) {
  if (!e.contains(id)) throw InvalidState("completing unknown task " + std::to_string(id));
  const TaskState s = e.state(id);
  if (s != TaskState::InProgress)
    throw InvalidState("task " + std::to_string(id) + " is " + to_string(s) + ", not in_progress");
  e.set_state(id, TaskState::Computed);
  e.computed_by_[id] = node;
  e.completed_at_[id] = now;
}

TaskStateSet generate_tasks(std::size_t count, NodeId emitter, double mu, double sigma,
                            std::uint64_t seed) {
  if (count == 0) throw InvalidParameter("task count must be positive");
  if (!(sigma >= 0.0)) throw InvalidParameter("sigma must be non-negative");
  TaskStateSet out;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = sigma > 0.0 ? normal(rng) : 0.0;
    out.insert(Task{static_cast<TaskId>(i), emitter, std::exp(mu + sigma * z),
                    TaskState::Uncomputed, std::nullopt});
  }
  return out;
}

double total_length(const TaskStateSet& e) {
  double sum = 0.0;
  for (const Task& t : e.tasks()) sum += t.length;
  return sum;
}

void write_task_csv(std::ostream& out, const TaskStateSet& e) {
  out << "id,emitter,length,state,computed_by,completed_at\n";
  for (const Task& t : e.tasks()) {
    out << fmt::format("{},{},{},{},", t.id, t.emitter, t.length, to_string(t.state));
    if (t.result) out << fmt::format("{},{}", t.result->computed_by, t.result->completed_at);
    else out << ',';
    out << '\n';
  }
}

TaskStateSet read_task_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "id,emitter,length,state,computed_by,completed_at")
    throw InvalidParameter("task csv: bad header");
  TaskStateSet out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw InvalidParameter("task csv: line " + std::to_string(lineno));
    try {
      Task t;
      t.id = static_cast<TaskId>(std::stoul(f[0]));
      t.emitter = static_cast<NodeId>(std::stoul(f[1]));
      t.length = std::stod(f[2]);
      t.state = parse_state(f[3]);
      if (!f[4].empty() || !f[5].empty())
        t.result = TaskResult{static_cast<NodeId>(std::stoul(f[4])), std::stod(f[5])};
      out.insert(t);
    } catch (const InvalidParameter& e) {
      throw InvalidParameter("task csv: line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      throw InvalidParameter("task csv: line " + std::to_string(lineno));
    }
  }
  return out;
}

}  // namespace gridwalk
