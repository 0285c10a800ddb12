// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <vector>

#include "llmsched/sched/baselines.hpp"
#include "llmsched/sched/types.hpp"

namespace llmsched {

// Last time a decode can start and still make its TBT deadline, padded by delta batches.
inline Seconds last_schedulable_time(Seconds last_emit, Seconds tbt_slo, double delta,
                                     Seconds mean_batch_time) {
  return last_emit + tbt_slo - delta * mean_batch_time;
}

inline bool is_critical(Seconds clock, Seconds last_emit, Seconds tbt_slo, double delta,
                        Seconds mean_batch_time) {
  return clock >= last_schedulable_time(last_emit, tbt_slo, delta, mean_batch_time);
}

// SLO-aware scheduler: critical decodes first, then prefill (active before new,
// bounded by alpha), then non-critical decodes by urgency up to beta.
class SlaiScheduler {
 public:
  SlaiScheduler(PolicyConfig c, TileConfig tile) : c_(c), tile_(tile) {
    detail::check_budget("slai", c_);
    if (c_.beta < c_.alpha) {
      throw ConfigError("slai: beta must be >= alpha so every critical decode fits");
    }
    if (c_.dynamic_offset && !(c_.mem_threshold > 0 && c_.mem_threshold <= 1)) {
      throw ConfigError("slai: mem_threshold must be in (0, 1]");
    }
  }

  double offset(const SchedulerView& v) const {
    if (!c_.dynamic_offset) return c_.delta;
    const double use =
        v.kv_token_capacity > 0 ? double(v.kv_tokens_used) / double(v.kv_token_capacity) : 0.0;
    return use < c_.mem_threshold ? c_.delta_low : c_.delta_high;
  }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (v.prefill_queue.empty() && v.decode_set.empty()) return d;
    const double delta = offset(v);

    struct Slot {
      const DecodeEntry* e;
      Seconds deadline;
    };
    std::vector<Slot> critical, relaxed;
    for (const auto& e : v.decode_set) {
      const Seconds c = last_schedulable_time(e.last_emit, e.tbt_slo, delta, v.mean_batch_time);
      (v.clock >= c ? critical : relaxed).push_back({&e, c});
    }
    auto by_deadline = [](const Slot& a, const Slot& b) {
      if (a.deadline != b.deadline) return a.deadline < b.deadline;
      return a.e->id < b.e->id;
    };
    std::sort(critical.begin(), critical.end(), by_deadline);
    std::sort(relaxed.begin(), relaxed.end(), by_deadline);

    BatchPlan p;
    p.tile = tile_;
    Tokens tau = 0;
    std::int64_t decodes = 0;
    for (const auto& s : critical) {
      p.items.push_back(Iteration::decode(s.e->id, s.e->token_index));
      d.critical.push_back(s.e->id);
      ++tau;
      ++decodes;
    }
    std::int64_t active =
        std::int64_t(v.decode_set.size()) + detail::started_count(v.prefill_queue);
    detail::fill_prefills(p, tau, active, v.prefill_queue, c_, d.flags);
    for (const auto& s : relaxed) {
      if (tau >= c_.token_budget || decodes >= c_.beta) break;
      p.items.push_back(Iteration::decode(s.e->id, s.e->token_index));
      ++tau;
      ++decodes;
    }
    if (!p.empty()) d.batch = std::move(p);
    return d;
  }

 private:
  PolicyConfig c_;
  TileConfig tile_;
};

}  // namespace llmsched
