// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llmsched/cost_model.hpp"

namespace llmsched {

// What a scheduler may see of a queued request. There is deliberately no output length.
struct PrefillEntry {
  RequestId id = 0;
  Tokens prompt_len = 1;
  Tokens next_index = 1;  // first token not yet prefilled
  int class_id = 0;
  Seconds arrival_time = 0;
  Seconds tbt_slo = 0;

  bool started() const { return next_index > 1; }
  Tokens remaining() const { return prompt_len - next_index + 1; }
};

struct DecodeEntry {
  RequestId id = 0;
  Tokens token_index = 2;  // index of the token the next DI computes
  int class_id = 0;
  Seconds tbt_slo = 0;
  Seconds last_emit = 0;
};

// prefill_queue is in arrival order (ties by id); decode_set in decode-entry order.
struct SchedulerView {
  Seconds clock = 0;
  std::span<const PrefillEntry> prefill_queue;
  std::span<const DecodeEntry> decode_set;
  Seconds mean_batch_time = 0;
  Tokens kv_tokens_used = 0;
  Tokens kv_token_capacity = 0;
};

namespace batch_flags {
inline constexpr std::uint32_t kEndOfCycle = 1u << 0;        // decode batch forced by n reached
inline constexpr std::uint32_t kPrefillExhausted = 1u << 1;  // decode batch forced by empty P
inline constexpr std::uint32_t kCycleEnd = 1u << 2;          // this batch emptied D
inline constexpr std::uint32_t kFinalChunk = 1u << 3;        // completes some prompt

inline std::string to_string(std::uint32_t f) {
  std::string s;
  auto add = [&](std::uint32_t bit, const char* name) {
    if (f & bit) s += (s.empty() ? "" : "|") + std::string(name);
  };
  add(kEndOfCycle, "end_of_cycle");
  add(kPrefillExhausted, "prefill_exhausted");
  add(kCycleEnd, "cycle_end");
  add(kFinalChunk, "final_chunk");
  return s.empty() ? "-" : s;
}
}  // namespace batch_flags

struct SchedulerDecision {
  std::optional<BatchPlan> batch;  // nullopt = idle
  std::uint32_t flags = 0;
  bool cycle_reset = false;         // a cycle ended before this decision
  std::vector<RequestId> critical;  // decodes judged critical at this decision

  bool idle() const { return !batch.has_value(); }
};

enum class PolicyKind { kRad, kAltCycle, kRequestLevel, kSarathi, kVllm, kSlai, kDistServe };
enum class PrefillOrder { kFcfs, kSpf };

inline constexpr std::string_view kPolicyNames[] = {
    "rad", "alt_cycle", "request_level", "sarathi", "vllm", "slai", "distserve"};

inline std::string_view policy_name(PolicyKind k) { return kPolicyNames[int(k)]; }

inline std::optional<PolicyKind> parse_policy(std::string_view s) {
  for (int i = 0; i < 7; ++i) {
    if (kPolicyNames[i] == s) return PolicyKind(i);
  }
  return std::nullopt;
}

inline std::string valid_policy_list() {
  std::string s;
  for (auto n : kPolicyNames) s += (s.empty() ? "" : "|") + std::string(n);
  return s;
}

inline std::optional<PrefillOrder> parse_order(std::string_view s) {
  if (s == "fcfs") return PrefillOrder::kFcfs;
  if (s == "spf") return PrefillOrder::kSpf;
  return std::nullopt;
}

inline std::string_view order_name(PrefillOrder o) {
  return o == PrefillOrder::kFcfs ? "fcfs" : "spf";
}

inline bool uses_order(PolicyKind k) {
  return k == PolicyKind::kSarathi || k == PolicyKind::kSlai;
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kRad;
  Tokens n = 16;
  Tokens b = 8;
  Tokens token_budget = 512;
  Tokens alpha = 128;
  Tokens beta = 128;
  double delta = 10;
  bool dynamic_offset = false;
  double delta_low = 5;
  double delta_high = 10;
  double mem_threshold = 0.96;
  PrefillOrder order = PrefillOrder::kFcfs;
  bool priority_paying = false;
  Seconds kv_transfer_delay = 0;
  bool distserve_chunked = false;
};

namespace detail {

inline BatchPlan decode_all(std::span<const DecodeEntry> d, const TileConfig& tile) {
  BatchPlan p;
  p.tile = tile;
  p.items.reserve(d.size());
  for (const auto& e : d) p.items.push_back(Iteration::decode(e.id, e.token_index));
  return p;
}

// Started prefills first, then new ones; each group sorted by the policy order.
// priority_paying puts tighter-SLO classes ahead within each group.
inline std::vector<const PrefillEntry*> ordered_prefills(std::span<const PrefillEntry> q,
                                                         PrefillOrder order,
                                                         bool priority_paying) {
  std::vector<const PrefillEntry*> out;
  out.reserve(q.size());
  for (const auto& e : q) out.push_back(&e);
  auto key_less = [&](const PrefillEntry* a, const PrefillEntry* b) {
    if (a->started() != b->started()) return a->started();
    if (priority_paying && a->tbt_slo != b->tbt_slo) return a->tbt_slo < b->tbt_slo;
    if (order == PrefillOrder::kSpf && a->prompt_len != b->prompt_len) {
      return a->prompt_len < b->prompt_len;
    }
    if (order == PrefillOrder::kFcfs && a->arrival_time != b->arrival_time) {
      return a->arrival_time < b->arrival_time;
    }
    return a->id < b->id;
  };
  std::stable_sort(out.begin(), out.end(), key_less);
  return out;
}

inline std::int64_t started_count(std::span<const PrefillEntry> q) {
  return std::count_if(q.begin(), q.end(), [](const auto& e) { return e.started(); });
}

}  // namespace detail

}  // namespace llmsched
