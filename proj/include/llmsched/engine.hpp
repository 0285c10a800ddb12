// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmsched/cost_model.hpp"
#include "llmsched/errors.hpp"
#include "llmsched/sched.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

enum class RouterKind { kUniformRandom, kRoundRobin };

struct SimConfig {
  GpuSpec gpu;
  ModelSpec model;
  PolicyConfig policy;
  int nodes = 1;
  int prefill_nodes = 0;  // disaggregated only; 0 picks half (rounded up)
  RouterKind router = RouterKind::kUniformRandom;
  Seconds horizon = std::numeric_limits<double>::infinity();  // inf runs to drain
  std::uint64_t seed = 1;
  bool assumption3_mode = false;
  bool record_items = true;
  bool check_invariants = false;
};

inline std::vector<NodeRole> node_roles(const SimConfig& c) {
  std::vector<NodeRole> roles(std::size_t(std::max(c.nodes, 0)), NodeRole::kUnified);
  if (c.policy.kind == PolicyKind::kDistServe) {
    const int p = c.prefill_nodes > 0 ? c.prefill_nodes : (c.nodes + 1) / 2;
    for (int i = 0; i < c.nodes; ++i) roles[i] = i < p ? NodeRole::kPrefill : NodeRole::kDecode;
  }
  return roles;
}

inline void validate(const SimConfig& c) {
  if (c.nodes < 1) throw ConfigError("sim: nodes must be >= 1");
  if (c.policy.kind == PolicyKind::kDistServe) {
    auto roles = node_roles(c);
    const bool has_p = std::count(roles.begin(), roles.end(), NodeRole::kPrefill) > 0;
    const bool has_d = std::count(roles.begin(), roles.end(), NodeRole::kDecode) > 0;
    if (!has_p || !has_d) throw ConfigError("distserve needs at least one prefill and one decode node");
  }
  if (!(c.horizon > 0)) throw ConfigError("sim: horizon must be > 0");
  if (!(c.policy.kv_transfer_delay >= 0)) throw ConfigError("policy: kv_transfer_delay < 0");
}

class Router {
 public:
  Router(RouterKind kind, std::vector<int> targets) : kind_(kind), targets_(std::move(targets)) {
    if (targets_.empty()) throw ConfigError("router has no target nodes");
  }

  int route(Rng& rng) {
    if (targets_.size() == 1) return targets_[0];
    if (kind_ == RouterKind::kRoundRobin) return targets_[next_++ % targets_.size()];
    std::uniform_int_distribution<std::size_t> pick(0, targets_.size() - 1);
    return targets_[pick(rng)];
  }

 private:
  RouterKind kind_;
  std::vector<int> targets_;
  std::size_t next_ = 0;
};

struct RequestProgress {
  Tokens prompt_len = 1;
  Tokens next_prefill_index = 1;
  Tokens decodes_done = 0;
  bool retired = false;
};

inline Tokens kv_tokens(const RequestProgress& p) {
  if (p.retired) return 0;
  if (p.next_prefill_index <= p.prompt_len) return p.next_prefill_index - 1;
  return p.prompt_len + p.decodes_done;
}

struct RequestRecord {
  RequestId id = 0;
  int class_id = 0;
  Seconds arrival = 0;
  Tokens prompt_len = 0;
  Tokens output_len = 0;
  int node = -1;
  std::optional<Seconds> first_token;
  std::optional<Seconds> completion;
  std::vector<Seconds> emits;
};

struct BatchRecord {
  int node = 0;
  std::int64_t seq = 0;
  Seconds start = 0;
  Seconds end = 0;
  Tokens tau = 0;
  std::int64_t n_prefill = 0;
  std::int64_t n_decode = 0;
  std::uint32_t flags = 0;
  Tokens kv_used = 0;  // at batch start
  std::vector<Iteration> items;
  std::vector<RequestId> critical;
};

struct QueueSample {
  Seconds time = 0;
  std::int64_t pending = 0;
  std::int64_t arrived = 0;
};

struct CycleRecord {
  int node = 0;
  Seconds start = 0;
  Seconds end = 0;
  std::int64_t pending_at_start = 0;
  std::int64_t started = 0;
  std::int64_t completed = 0;
  std::int64_t batches = 0;
  bool closed = false;
};

struct SimResult {
  int nodes = 0;
  std::vector<NodeRole> roles;
  std::vector<RequestRecord> requests;
  std::vector<BatchRecord> batches;
  std::vector<QueueSample> queue;                    // cluster-wide
  std::vector<std::vector<QueueSample>> node_queue;  // per node
  std::vector<CycleRecord> cycles;
  Seconds end_time = 0;
  Tokens peak_kv = 0;
};

inline bool is_cyclic(PolicyKind k) { return k == PolicyKind::kRad || k == PolicyKind::kAltCycle; }

class Simulation {
 public:
  Simulation(const SimConfig& cfg, std::span<const Request> trace)
      : cfg_(cfg), trace_(trace), rng_(cfg.seed) {
    validate(cfg_);
    validate(cfg_.gpu);
    validate(cfg_.model, cfg_.gpu);
    res_.nodes = cfg_.nodes;
    res_.roles = node_roles(cfg_);
    res_.node_queue.resize(std::size_t(cfg_.nodes));
    std::vector<int> arrive_to, decode_to;
    for (int i = 0; i < cfg_.nodes; ++i) {
      const NodeRole role = res_.roles[i];
      nodes_.push_back(Node{i, role, make_scheduler(cfg_.policy, role, cfg_.gpu)});
      (role == NodeRole::kDecode ? decode_to : arrive_to).push_back(i);
    }
    arrival_router_.emplace(cfg_.router, arrive_to);
    if (!decode_to.empty()) decode_router_.emplace(RouterKind::kUniformRandom, decode_to);

    state_.resize(trace_.size());
    res_.requests.resize(trace_.size());
    stamp_.assign(trace_.size(), -1);
    for (std::size_t k = 0; k < trace_.size(); ++k) {
      const Request& r = trace_[k];
      if (r.prompt_len < 1 || r.output_len < 1) {
        throw ValidationError(std::int64_t(k + 1), "lengths must be >= 1");
      }
      if (k > 0 && r.arrival_time < trace_[k - 1].arrival_time) {
        throw ValidationError(std::int64_t(k + 1), "trace not sorted by arrival time");
      }
      if (cfg_.assumption3_mode && r.prompt_len % cfg_.gpu.lcm() != 0) {
        throw DivisibilityError("request " + std::to_string(r.id) + ": prompt_len " +
                                std::to_string(r.prompt_len) + " not a multiple of t_lcm");
      }
      if (!index_.emplace(r.id, k).second) {
        throw ValidationError(std::int64_t(k + 1), "duplicate request id");
      }
      auto& rec = res_.requests[k];
      rec.id = r.id;
      rec.class_id = r.class_id;
      rec.arrival = r.arrival_time;
      rec.prompt_len = r.prompt_len;
      rec.output_len = r.output_len;
    }
    if (is_cyclic(cfg_.policy.kind)) {
      for (auto& n : nodes_) open_cycle(n, 0.0);
    }
  }

  SimResult run() {
    if (!trace_.empty()) push(trace_[0].arrival_time, EventKind::kArrival, -1, 0);
    Seconds last = 0;
    while (!events_.empty()) {
      const Event ev = events_.top();
      if (ev.time > cfg_.horizon) break;
      events_.pop();
      now_ = last = ev.time;
      switch (ev.kind) {
        case EventKind::kArrival:
          on_arrival(ev.req);
          break;
        case EventKind::kTransfer:
          deliver_transfer(ev.node, ev.req);
          break;
        case EventKind::kBatchDone:
          on_batch_done(nodes_[ev.node]);
          break;
        case EventKind::kWake: {
          Node& n = nodes_[ev.node];
          n.wake_pending = false;
          if (!n.busy) decide(n);
          break;
        }
      }
      if (cfg_.check_invariants) check_invariants();
    }
    res_.end_time = std::isfinite(cfg_.horizon) ? cfg_.horizon : last;
    for (auto& c : res_.cycles) {
      if (!c.closed) c.end = res_.end_time;
    }
    return std::move(res_);
  }

  // Route-independent entry points; exposed so role violations are testable.
  void deliver_arrival(int node, std::size_t k) {
    Node& n = nodes_.at(std::size_t(node));
    if (n.role == NodeRole::kDecode) {
      throw RoutingError("decode node " + std::to_string(node) + " cannot take raw request " +
                         std::to_string(trace_[k].id));
    }
    State& s = state_[k];
    s.phase = Phase::kPrefill;
    s.node = node;
    res_.requests[k].node = node;
    ++arrived_;
    n.prefill.push_back(k);
    sample(n);
    wake(n);
  }

  void deliver_transfer(int node, std::size_t k) {
    Node& n = nodes_.at(std::size_t(node));
    State& s = state_[k];
    if (n.role != NodeRole::kDecode || s.next_prefill <= trace_[k].prompt_len) {
      throw RoutingError("request " + std::to_string(trace_[k].id) +
                         " is not a prefilled transfer for decode node " + std::to_string(node));
    }
    if (s.phase == Phase::kTransit) --in_transit_;
    s.phase = Phase::kDecode;
    s.node = node;
    n.decode.push_back(k);
    n.kv_used += trace_[k].prompt_len + s.decodes_done;
    if (n.kv_used > cfg_.gpu.kv_token_capacity) {
      throw MemoryOverflowError(node, n.seq, n.kv_used, cfg_.gpu.kv_token_capacity);
    }
    res_.peak_kv = std::max(res_.peak_kv, n.kv_used);
    sample(n);
    wake(n);
  }

 private:
  enum class EventKind : std::uint8_t { kArrival = 0, kTransfer = 1, kBatchDone = 2, kWake = 3 };
  enum class Phase : std::uint8_t { kNotArrived, kPrefill, kDecode, kTransit, kRetired };

  struct Event {
    Seconds time;
    EventKind kind;
    std::uint64_t seq;
    int node;
    std::size_t req;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.kind != b.kind) return a.kind > b.kind;
      return a.seq > b.seq;
    }
  };

  struct State {
    Tokens next_prefill = 1;
    Tokens decodes_done = 0;
    Phase phase = Phase::kNotArrived;
    int node = -1;
    Seconds last_emit = 0;
  };

  struct Node {
    int id;
    NodeRole role;
    Scheduler sched;
    std::vector<std::size_t> prefill{};
    std::vector<std::size_t> decode{};
    bool busy = false;
    bool wake_pending = false;
    BatchPlan in_flight{};
    Seconds in_flight_start = 0;
    Tokens kv_used = 0;
    std::int64_t completed_batches = 0;
    double batch_time_sum = 0;
    std::int64_t seq = 0;
    std::optional<std::size_t> last_batch{};
    std::optional<std::size_t> cycle{};
    std::vector<PrefillEntry> pbuf{};
    std::vector<DecodeEntry> dbuf{};
  };

  void push(Seconds t, EventKind kind, int node, std::size_t req) {
    events_.push(Event{t, kind, next_seq_++, node, req});
  }

  void wake(Node& n) {
    if (n.busy || n.wake_pending) return;
    n.wake_pending = true;
    push(now_, EventKind::kWake, n.id, 0);
  }

  void sample(const Node& n) {
    res_.queue.push_back({now_, arrived_ - retired_, arrived_});
    res_.node_queue[std::size_t(n.id)].push_back(
        {now_, std::int64_t(n.prefill.size() + n.decode.size()), -1});
  }

  void on_arrival(std::size_t k) {
    if (k + 1 < trace_.size()) push(trace_[k + 1].arrival_time, EventKind::kArrival, -1, k + 1);
    deliver_arrival(arrival_router_->route(rng_), k);
  }

  void open_cycle(Node& n, Seconds t) {
    n.cycle = res_.cycles.size();
    res_.cycles.push_back({n.id, t, t, std::int64_t(n.prefill.size() + n.decode.size())});
  }

  static void erase_one(std::vector<std::size_t>& v, std::size_t k) {
    v.erase(std::find(v.begin(), v.end(), k));
  }

  void on_batch_done(Node& n) {
    for (const auto& it : n.in_flight.items) {
      const std::size_t k = index_.at(it.request);
      State& s = state_[k];
      const Request& r = trace_[k];
      RequestRecord& rec = res_.requests[k];
      if (it.is_prefill()) {
        s.next_prefill += it.chunk;
        n.kv_used += it.chunk;
        if (s.next_prefill > r.prompt_len) {
          rec.first_token = now_;
          rec.emits.push_back(now_);
          s.last_emit = now_;
          erase_one(n.prefill, k);
          if (n.role == NodeRole::kPrefill) {
            n.kv_used -= r.prompt_len;
            s.phase = Phase::kTransit;
            s.node = -1;
            ++in_transit_;
            const int dest = decode_router_->route(rng_);
            push(now_ + cfg_.policy.kv_transfer_delay, EventKind::kTransfer, dest, k);
          } else {
            s.phase = Phase::kDecode;
            n.decode.push_back(k);
          }
        }
      } else {
        ++s.decodes_done;
        n.kv_used += 1;
        rec.emits.push_back(now_);
        s.last_emit = now_;
        if (s.decodes_done == r.output_len) {
          rec.completion = now_;
          n.kv_used -= r.prompt_len + s.decodes_done;
          erase_one(n.decode, k);
          s.phase = Phase::kRetired;
          s.node = -1;
          ++retired_;
          if (n.cycle) ++res_.cycles[*n.cycle].completed;
        }
      }
    }
    ++n.completed_batches;
    n.batch_time_sum += now_ - n.in_flight_start;
    n.busy = false;
    n.in_flight.items.clear();
    sample(n);
    decide(n);
  }

  void decide(Node& n) {
    n.pbuf.clear();
    n.dbuf.clear();
    for (std::size_t k : n.prefill) {
      const Request& r = trace_[k];
      n.pbuf.push_back({r.id, r.prompt_len, state_[k].next_prefill, r.class_id, r.arrival_time,
                        r.tbt_slo});
    }
    for (std::size_t k : n.decode) {
      const Request& r = trace_[k];
      const State& s = state_[k];
      n.dbuf.push_back({r.id, r.prompt_len + 1 + s.decodes_done, r.class_id, r.tbt_slo,
                        s.last_emit});
    }
    SchedulerView view;
    view.clock = now_;
    view.prefill_queue = n.pbuf;
    view.decode_set = n.dbuf;
    view.mean_batch_time =
        n.completed_batches > 0 ? n.batch_time_sum / double(n.completed_batches) : 0.0;
    view.kv_tokens_used = n.kv_used;
    view.kv_token_capacity = cfg_.gpu.kv_token_capacity;

    SchedulerDecision d = next(n.sched, view);
    if (d.cycle_reset && n.cycle && res_.cycles[*n.cycle].batches > 0) {
      CycleRecord& c = res_.cycles[*n.cycle];
      c.end = now_;
      c.closed = true;
      if (n.last_batch) res_.batches[*n.last_batch].flags |= batch_flags::kCycleEnd;
      open_cycle(n, now_);
    }
    if (d.idle()) return;
    BatchPlan& plan = *d.batch;
    check_legal(n, plan);
    const Tokens tau = plan.token_count();
    if (n.kv_used + tau > cfg_.gpu.kv_token_capacity) {
      throw MemoryOverflowError(n.id, n.seq, n.kv_used + tau, cfg_.gpu.kv_token_capacity);
    }
    res_.peak_kv = std::max(res_.peak_kv, n.kv_used + tau);
    const Seconds dur = batch_time(plan, cfg_.model, cfg_.gpu);

    BatchRecord b;
    b.node = n.id;
    b.seq = n.seq++;
    b.start = now_;
    b.end = now_ + dur;
    b.tau = tau;
    b.n_prefill = plan.prefill_count();
    b.n_decode = plan.decode_count();
    b.flags = d.flags;
    b.kv_used = n.kv_used;
    if (cfg_.record_items) b.items = plan.items;
    b.critical = std::move(d.critical);
    n.last_batch = res_.batches.size();
    res_.batches.push_back(std::move(b));

    if (n.cycle) {
      CycleRecord& c = res_.cycles[*n.cycle];
      ++c.batches;
      for (const auto& it : plan.items) {
        if (it.is_prefill() && it.index == 1) ++c.started;
      }
    }
    n.in_flight = std::move(plan);
    n.in_flight_start = now_;
    n.busy = true;
    push(now_ + dur, EventKind::kBatchDone, n.id, 0);
  }

  void check_legal(const Node& n, const BatchPlan& plan) {
    ++batch_counter_;
    auto bad = [&](RequestId id, const std::string& m) {
      throw std::logic_error("illegal batch on node " + std::to_string(n.id) + ", request " +
                             std::to_string(id) + ": " + m);
    };
    if (plan.empty()) throw std::logic_error("scheduler emitted an empty batch");
    for (const auto& it : plan.items) {
      auto f = index_.find(it.request);
      if (f == index_.end()) bad(it.request, "unknown");
      const std::size_t k = f->second;
      const State& s = state_[k];
      const Request& r = trace_[k];
      if (s.node != n.id) bad(it.request, "not resident");
      if (stamp_[k] == batch_counter_) bad(it.request, "appears twice");
      stamp_[k] = batch_counter_;
      if (it.is_prefill()) {
        if (s.phase != Phase::kPrefill) bad(it.request, "not in prefill");
        if (it.index != s.next_prefill || it.chunk < 1 || it.index + it.chunk - 1 > r.prompt_len) {
          bad(it.request, "bad prefill chunk");
        }
      } else {
        if (s.phase != Phase::kDecode) bad(it.request, "not decoding");
        if (it.index != r.prompt_len + 1 + s.decodes_done) bad(it.request, "bad token index");
      }
    }
  }

  void check_invariants() const {
    std::int64_t resident = 0;
    for (const auto& n : nodes_) {
      resident += std::int64_t(n.prefill.size() + n.decode.size());
      Tokens kv = 0;
      for (std::size_t k : n.prefill) {
        kv += kv_tokens({trace_[k].prompt_len, state_[k].next_prefill, state_[k].decodes_done});
      }
      for (std::size_t k : n.decode) {
        kv += kv_tokens({trace_[k].prompt_len, state_[k].next_prefill, state_[k].decodes_done});
      }
      if (kv != n.kv_used) throw std::logic_error("kv accounting drift");
    }
    if (arrived_ != retired_ + in_transit_ + resident) {
      throw std::logic_error("request conservation violated");
    }
  }

  SimConfig cfg_;
  std::span<const Request> trace_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::optional<Router> arrival_router_, decode_router_;
  std::vector<State> state_;
  std::unordered_map<RequestId, std::size_t> index_;
  std::vector<std::int64_t> stamp_;
  std::int64_t batch_counter_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t next_seq_ = 0;
  Seconds now_ = 0;
  std::int64_t arrived_ = 0, retired_ = 0, in_transit_ = 0;
  SimResult res_;
};

inline SimResult run(const SimConfig& cfg, std::span<const Request> trace) {
  return Simulation(cfg, trace).run();
}

}  // namespace llmsched
