// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <variant>

#include "llmsched/sched/baselines.hpp"
#include "llmsched/sched/cyclic.hpp"
#include "llmsched/sched/slai.hpp"
#include "llmsched/sched/types.hpp"

namespace llmsched {

enum class NodeRole { kUnified, kPrefill, kDecode };

using Scheduler =
    std::variant<RadScheduler, AltCycleScheduler, RequestLevelScheduler, SarathiScheduler,
                 PrefillPriorityScheduler, SlaiScheduler, DistServePrefillScheduler,
                 DistServeDecodeScheduler>;

inline SchedulerDecision next(Scheduler& s, const SchedulerView& v) {
  return std::visit([&](auto& impl) { return impl.next(v); }, s);
}

inline Scheduler make_scheduler(const PolicyConfig& c, NodeRole role, const GpuSpec& gpu) {
  const TileConfig tile = gpu.optimal_tile;
  switch (c.kind) {
    case PolicyKind::kRad:
      return RadScheduler(c.n, tile);
    case PolicyKind::kAltCycle:
      return AltCycleScheduler(c.n, tile);
    case PolicyKind::kRequestLevel:
      return RequestLevelScheduler(c.b, tile);
    case PolicyKind::kSarathi:
      return SarathiScheduler(c, tile);
    case PolicyKind::kVllm:
      return PrefillPriorityScheduler(c, tile);
    case PolicyKind::kSlai:
      return SlaiScheduler(c, tile);
    case PolicyKind::kDistServe:
      if (role == NodeRole::kDecode) return DistServeDecodeScheduler(tile);
      return DistServePrefillScheduler(c.distserve_chunked, tile);
  }
  throw ConfigError("unknown policy");
}

}  // namespace llmsched
