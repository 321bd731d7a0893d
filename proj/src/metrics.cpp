#include "gridwalk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "gridwalk/errors.hpp"

namespace gridwalk {

double efficiency(double t_seq, double t_dist, std::size_t n) {
  if (!(t_dist > 0.0)) throw InvalidParameter("distributed time must be positive");
  if (n == 0) throw InvalidParameter("node count must be positive");
  return t_seq / (t_dist * static_cast<double>(n)) * 100.0;
}

std::uint64_t count_replicated(std::span<const Completion> completions) {
  std::map<TaskId, std::uint64_t> per_task;
  for (const auto& c : completions) ++per_task[c.task];
  std::uint64_t replicated = 0;
  for (const auto& [task, k] : per_task) replicated += k - 1;
  return replicated;
}

std::uint64_t count_replicated(const RunResult& r) { return count_replicated(r.completions); }

Metrics measure(const SimConfig& cfg, const RunResult& r) {
  Metrics m;
  m.method = cfg.method.method;
  m.n = r.nodes;
  m.tasks = r.task_count;
  m.seed = cfg.seed;
  m.c_r = cfg.method.refresh_coefficient;
  m.m_r = cfg.method.min_refresh;
  m.t_sequential = r.t_sequential;
  m.t_distributed = r.t_distributed;
  m.complete = r.complete;
  m.efficiency_pct = r.complete ? efficiency(r.t_sequential, r.t_distributed, r.nodes) : 0.0;
  m.msgs = r.msgs;
  m.replicated = count_replicated(r);
  m.t_propagate = r.t_propagate;
  m.trace_hash = r.trace_hash;
  return m;
}

Stat mean_std(std::span<const double> xs) {
  if (xs.empty()) throw InvalidParameter("statistics of an empty sample");
  // Sorted first so the floating-point sums do not depend on input order.
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

namespace {

auto group_key(const Metrics& m) { return std::make_tuple(static_cast<int>(m.method), m.n, m.tasks, m.c_r, m.m_r); }

}  // namespace

bool row_less(const Metrics& a, const Metrics& b) {
  return std::make_tuple(static_cast<int>(a.method), a.n, a.tasks, a.c_r, a.m_r, a.seed) <
         std::make_tuple(static_cast<int>(b.method), b.n, b.tasks, b.c_r, b.m_r, b.seed);
}

std::vector<SummaryRow> summarize(std::span<const Metrics> runs) {
  if (runs.empty()) throw InvalidParameter("nothing to summarize");
  std::map<decltype(group_key(runs[0])), std::vector<const Metrics*>> groups;
  for (const auto& m : runs) groups[group_key(m)].push_back(&m);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    SummaryRow row;
    const Metrics& first = *members.front();
    row.method = first.method;
    row.n = first.n;
    row.tasks = first.tasks;
    row.c_r = first.c_r;
    row.m_r = first.m_r;
    row.runs = members.size();
    std::vector<double> eff, td, msg, rep;
    for (const Metrics* m : members) {
      eff.push_back(m->efficiency_pct);
      td.push_back(m->t_distributed);
      msg.push_back(static_cast<double>(m->msgs.total()));
      rep.push_back(static_cast<double>(m->replicated));
    }
    row.efficiency_pct = mean_std(eff);
    row.t_distributed = mean_std(td);
    row.messages = mean_std(msg);
    row.replicated = mean_std(rep);
    out.push_back(row);
  }
  return out;
}

std::string csv_header() {
  return "method,n,tasks,seed,c_r,m_r,t_dist,efficiency_pct,msg_token,msg_down,msg_feedback,"
         "msg_final,replicated,t_propagate";
}

std::string to_csv_row(const Metrics& m) {
  return fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{},{},{},{},{},{:.6f}", to_string(m.method), m.n,
                     m.tasks, m.seed, m.c_r, m.m_r, m.t_distributed, m.efficiency_pct, m.msgs.token_hops,
                     m.msgs.down, m.msgs.feedback, m.msgs.final_down, m.replicated, m.t_propagate);
}

void write_csv(std::ostream& out, std::span<const Metrics> rows) {
  out << csv_header() << '\n';
  for (const auto& m : rows) out << to_csv_row(m) << '\n';
}

std::vector<Metrics> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidParameter("csv line 1: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) throw InvalidParameter("csv line 1: unexpected header");
  std::vector<Metrics> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    const auto where = "csv line " + std::to_string(lineno);
    if (f.size() != 14) throw InvalidParameter(where + ": expected 14 fields, got " + std::to_string(f.size()));
    try {
      auto to_u = [](const std::string& s) {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      auto to_d = [](const std::string& s) {
        std::size_t used = 0;
        const auto v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      Metrics m;
      m.method = parse_method(f[0]);
      m.n = to_u(f[1]);
      m.tasks = to_u(f[2]);
      m.seed = to_u(f[3]);
      m.c_r = to_d(f[4]);
      m.m_r = to_d(f[5]);
      m.t_distributed = to_d(f[6]);
      m.efficiency_pct = to_d(f[7]);
      m.msgs.token_hops = to_u(f[8]);
      m.msgs.down = to_u(f[9]);
      m.msgs.feedback = to_u(f[10]);
      m.msgs.final_down = to_u(f[11]);
      m.replicated = to_u(f[12]);
      m.t_propagate = to_d(f[13]);
      m.complete = m.efficiency_pct > 0.0;
      m.t_sequential = m.efficiency_pct / 100.0 * m.t_distributed * static_cast<double>(m.n);
      rows.push_back(m);
    } catch (const std::exception& e) {
      throw InvalidParameter(where + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace gridwalk
