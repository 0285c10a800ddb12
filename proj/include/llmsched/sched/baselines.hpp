// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <vector>

#include "llmsched/sched/types.hpp"

namespace llmsched {

// Alternates a full-prompt prefill batch of up to b requests with decode batches that
// run those requests to completion.
class RequestLevelScheduler {
 public:
  RequestLevelScheduler(Tokens b, TileConfig tile) : b_(b), tile_(tile) {
    if (b_ < 1) throw ConfigError("request_level: b must be >= 1");
  }

  bool in_decode_mode() const { return decode_mode_; }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (decode_mode_) {
      if (!v.decode_set.empty()) {
        d.batch = detail::decode_all(v.decode_set, tile_);
        return d;
      }
      decode_mode_ = false;
    }
    decode_mode_ = true;
    if (!v.prefill_queue.empty()) {
      BatchPlan p;
      p.tile = tile_;
      for (const auto& e : v.prefill_queue) {
        if (Tokens(p.items.size()) >= b_) break;
        p.items.push_back(Iteration::prefill(e.id, e.next_index, e.remaining()));
      }
      d.flags |= batch_flags::kFinalChunk;
      d.batch = std::move(p);
      return d;
    }
    if (!v.decode_set.empty()) d.batch = detail::decode_all(v.decode_set, tile_);
    return d;
  }

 private:
  Tokens b_;
  TileConfig tile_;
  bool decode_mode_ = false;
};

namespace detail {

inline void check_budget(const char* who, const PolicyConfig& c) {
  if (c.token_budget < 1) throw ConfigError(std::string(who) + ": token_budget must be >= 1");
  if (c.alpha < 1) throw ConfigError(std::string(who) + ": alpha must be >= 1");
  if (c.token_budget < c.alpha) {
    throw ConfigError(std::string(who) + ": token_budget " + std::to_string(c.token_budget) +
                      " is below the possible decode count alpha=" + std::to_string(c.alpha));
  }
}

// Appends at most one chunk per prefill while tokens remain. New requests need a free
// active slot (requests holding KV count against alpha).
inline void fill_prefills(BatchPlan& p, Tokens& tau, std::int64_t& active,
                          std::span<const PrefillEntry> q, const PolicyConfig& c,
                          std::uint32_t& flags) {
  for (const PrefillEntry* e : ordered_prefills(q, c.order, c.priority_paying)) {
    if (tau >= c.token_budget) break;
    if (!e->started()) {
      if (active >= c.alpha) continue;
      ++active;
    }
    const Tokens chunk = std::min(c.token_budget - tau, e->remaining());
    p.items.push_back(Iteration::prefill(e->id, e->next_index, chunk));
    if (chunk == e->remaining()) flags |= batch_flags::kFinalChunk;
    tau += chunk;
  }
}

}  // namespace detail

// Decode-first chunked prefill under a token budget.
class SarathiScheduler {
 public:
  SarathiScheduler(PolicyConfig c, TileConfig tile) : c_(c), tile_(tile) {
    detail::check_budget("sarathi", c_);
  }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (v.prefill_queue.empty() && v.decode_set.empty()) return d;
    BatchPlan p = detail::decode_all(v.decode_set, tile_);
    Tokens tau = p.token_count();
    std::int64_t active =
        std::int64_t(v.decode_set.size()) + detail::started_count(v.prefill_queue);
    detail::fill_prefills(p, tau, active, v.prefill_queue, c_, d.flags);
    if (!p.empty()) d.batch = std::move(p);
    return d;
  }

 private:
  PolicyConfig c_;
  TileConfig tile_;
};

// Eager prefill admission; decodes only fill what the budget leaves over, oldest first.
class PrefillPriorityScheduler {
 public:
  PrefillPriorityScheduler(PolicyConfig c, TileConfig tile) : c_(c), tile_(tile) {
    c_.order = PrefillOrder::kFcfs;
    detail::check_budget("vllm", c_);
  }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (v.prefill_queue.empty() && v.decode_set.empty()) return d;
    BatchPlan p;
    p.tile = tile_;
    Tokens tau = 0;
    std::int64_t active =
        std::int64_t(v.decode_set.size()) + detail::started_count(v.prefill_queue);
    detail::fill_prefills(p, tau, active, v.prefill_queue, c_, d.flags);
    std::vector<const DecodeEntry*> ds;
    for (const auto& e : v.decode_set) ds.push_back(&e);
    std::stable_sort(ds.begin(), ds.end(), [](const DecodeEntry* a, const DecodeEntry* b) {
      if (a->last_emit != b->last_emit) return a->last_emit < b->last_emit;
      return a->id < b->id;
    });
    for (const DecodeEntry* e : ds) {
      if (tau >= c_.token_budget) break;
      p.items.push_back(Iteration::decode(e->id, e->token_index));
      ++tau;
    }
    if (!p.empty()) d.batch = std::move(p);
    return d;
  }

 private:
  PolicyConfig c_;
  TileConfig tile_;
};

// Disaggregated serving: prefill nodes run one request's prompt per batch; decode nodes
// batch every resident decode.
class DistServePrefillScheduler {
 public:
  DistServePrefillScheduler(bool chunked, TileConfig tile) : chunked_(chunked), tile_(tile) {}

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (v.prefill_queue.empty()) return d;
    const PrefillEntry* pick = &v.prefill_queue.front();
    for (const auto& e : v.prefill_queue) {
      if (e.started()) {
        pick = &e;
        break;
      }
    }
    BatchPlan p;
    p.tile = tile_;
    const Tokens c = chunked_ ? std::min(tile_.lcm(), pick->remaining()) : pick->remaining();
    p.items.push_back(Iteration::prefill(pick->id, pick->next_index, c));
    if (c == pick->remaining()) d.flags |= batch_flags::kFinalChunk;
    d.batch = std::move(p);
    return d;
  }

 private:
  bool chunked_;
  TileConfig tile_;
};

class DistServeDecodeScheduler {
 public:
  explicit DistServeDecodeScheduler(TileConfig tile) : tile_(tile) {}

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (!v.decode_set.empty()) d.batch = detail::decode_all(v.decode_set, tile_);
    return d;
  }

 private:
  TileConfig tile_;
};

}  // namespace llmsched
