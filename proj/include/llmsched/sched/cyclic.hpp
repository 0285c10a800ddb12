// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "llmsched/sched/types.hpp"

namespace llmsched {

namespace detail {

// One t_lcm-sized (or final) chunk of `e`. Returns true when it finishes the prompt.
inline bool push_tiled_chunk(BatchPlan& plan, const PrefillEntry& e, Tokens t_lcm) {
  const Tokens c = std::min(t_lcm, e.remaining());
  plan.items.push_back(Iteration::prefill(e.id, e.next_index, c));
  return c == e.remaining();
}

inline const PrefillEntry* find_prefill(std::span<const PrefillEntry> q, RequestId id) {
  for (const auto& e : q) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

}  // namespace detail

// Resource-aware dynamic scheduler: prefills up to n requests per cycle in tiled chunks,
// runs decode batches of exactly t_col whenever it can, drains D at cycle end.
class RadScheduler {
 public:
  RadScheduler(Tokens n, TileConfig tile) : n_(n), tile_(tile) {
    if (n_ < 1) throw ConfigError("rad: n must be >= 1");
  }

  Tokens requests_in_cycle() const { return requests_in_cycle_; }
  std::optional<RequestId> active_prefill() const { return active_; }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    if (decode_issued_) {
      decode_issued_ = false;
      if (v.decode_set.empty() && (requests_in_cycle_ >= n_ || v.prefill_queue.empty())) {
        reset(d);
      }
    }
    if (active_) {
      if (const auto* e = detail::find_prefill(v.prefill_queue, *active_)) {
        emit_chunk(d, *e);
        return d;
      }
      active_.reset();
    }
    if (v.prefill_queue.empty() && v.decode_set.empty()) return d;

    const auto dn = Tokens(v.decode_set.size());
    const bool full = dn >= tile_.col;
    const bool exhausted = v.prefill_queue.empty();
    bool quota = requests_in_cycle_ >= n_;
    if (quota && dn == 0 && !exhausted) {  // nothing left to drain
      reset(d);
      quota = false;
    }
    if (full || exhausted || (quota && dn > 0)) {
      d.batch = detail::decode_all(v.decode_set, tile_);
      if (!full) {
        if (exhausted) d.flags |= batch_flags::kPrefillExhausted;
        if (quota) d.flags |= batch_flags::kEndOfCycle;
      }
      decode_issued_ = true;
      return d;
    }
    const PrefillEntry& e = v.prefill_queue.front();
    active_ = e.id;
    emit_chunk(d, e);
    return d;
  }

 private:
  void reset(SchedulerDecision& d) {
    requests_in_cycle_ = 0;
    d.cycle_reset = true;
  }

  void emit_chunk(SchedulerDecision& d, const PrefillEntry& e) {
    BatchPlan p;
    p.tile = tile_;
    if (detail::push_tiled_chunk(p, e, tile_.lcm())) {
      ++requests_in_cycle_;
      active_.reset();
      d.flags |= batch_flags::kFinalChunk;
    }
    d.batch = std::move(p);
  }

  Tokens n_;
  TileConfig tile_;
  Tokens requests_in_cycle_ = 0;
  std::optional<RequestId> active_;
  bool decode_issued_ = false;
};

// Alternating cycles: prefill up to n requests, then decode with at most t_col active
// requests (refilled from D) until D drains.
class AltCycleScheduler {
 public:
  AltCycleScheduler(Tokens n, TileConfig tile) : n_(n), tile_(tile) {
    if (n_ < 1) throw ConfigError("alt_cycle: n must be >= 1");
  }

  bool in_decode_mode() const { return decode_mode_; }
  const std::vector<RequestId>& active_decodes() const { return d_active_; }
  Tokens requests_in_cycle() const { return requests_in_cycle_; }

  SchedulerDecision next(const SchedulerView& v) {
    SchedulerDecision d;
    for (int pass = 0; pass < 2; ++pass) {
      if (!decode_mode_) {
        if (active_) {
          if (const auto* e = detail::find_prefill(v.prefill_queue, *active_)) {
            emit_chunk(d, *e);
            return d;
          }
          active_.reset();
        }
        if (!v.prefill_queue.empty() && requests_in_cycle_ < n_) {
          active_ = v.prefill_queue.front().id;
          emit_chunk(d, v.prefill_queue.front());
          return d;
        }
        decode_mode_ = true;
        d_active_.clear();
      }
      std::erase_if(d_active_, [&](RequestId id) {
        return std::none_of(v.decode_set.begin(), v.decode_set.end(),
                            [&](const DecodeEntry& e) { return e.id == id; });
      });
      for (const auto& e : v.decode_set) {
        if (Tokens(d_active_.size()) >= tile_.col) break;
        if (std::find(d_active_.begin(), d_active_.end(), e.id) == d_active_.end()) {
          d_active_.push_back(e.id);
        }
      }
      if (!d_active_.empty()) {
        BatchPlan p;
        p.tile = tile_;
        for (const auto& e : v.decode_set) {
          if (std::find(d_active_.begin(), d_active_.end(), e.id) != d_active_.end()) {
            p.items.push_back(Iteration::decode(e.id, e.token_index));
          }
        }
        d.batch = std::move(p);
        return d;
      }
      decode_mode_ = false;
      requests_in_cycle_ = 0;
      d.cycle_reset = true;
    }
    return d;
  }

 private:
  void emit_chunk(SchedulerDecision& d, const PrefillEntry& e) {
    BatchPlan p;
    p.tile = tile_;
    if (detail::push_tiled_chunk(p, e, tile_.lcm())) {
      ++requests_in_cycle_;
      active_.reset();
      d.flags |= batch_flags::kFinalChunk;
    }
    d.batch = std::move(p);
  }

  Tokens n_;
  TileConfig tile_;
  bool decode_mode_ = false;
  Tokens requests_in_cycle_ = 0;
  std::optional<RequestId> active_;
  std::vector<RequestId> d_active_;
};

}  // namespace llmsched
