// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "llmsched/engine.hpp"
#include "llmsched/errors.hpp"
#include "llmsched/io.hpp"
#include "support/toy.hpp"

namespace llmsched {
namespace {

using testing::kAllPolicies;
using testing::req;
using testing::toy_sim;

std::vector<Request> random_trace(std::uint64_t seed, int n, double rate) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::uniform_int_distribution<int> lp(1, 9), ld(1, 6), cls(0, 1);
  std::vector<Request> out;
  double t = 0;
  for (int k = 0; k < n; ++k) {
    t += gap(rng);
    out.push_back(req(k, t, lp(rng), ld(rng), cls(rng)));
  }
  return out;
}

TEST(Engine, EmptyTrace) {
  const auto r = run(toy_sim(PolicyKind::kRad), std::vector<Request>{});
  EXPECT_TRUE(r.requests.empty());
  EXPECT_TRUE(r.batches.empty());
}

TEST(Engine, HandTracedSingleRequest) {
  // PI(R,1,2): 1 + 2 + 2 = 5; DI at 3: 1 + 1 + 4 = 6; DI at 4: 1 + 1 + 4 = 6
  const std::vector<Request> trace{req(0, 0.0, 2, 2)};
  const auto r = run(toy_sim(PolicyKind::kRad), trace);
  ASSERT_EQ(r.requests.size(), 1u);
  const auto& q = r.requests[0];
  EXPECT_EQ(*q.first_token, 5.0);
  EXPECT_EQ(*q.completion, 17.0);
  EXPECT_EQ(q.emits, (std::vector<Seconds>{5.0, 11.0, 17.0}));
  ASSERT_EQ(r.batches.size(), 3u);
  EXPECT_EQ(r.batches[0].n_prefill, 1);
  EXPECT_EQ(r.batches[1].n_decode, 1);
  EXPECT_EQ(r.end_time, 17.0);
}

TEST(Engine, KvTokens) {
  EXPECT_EQ(kv_tokens({64, 1, 0, false}), 0);
  EXPECT_EQ(kv_tokens({64, 33, 0, false}), 32);
  EXPECT_EQ(kv_tokens({64, 65, 3, false}), 67);
  EXPECT_EQ(kv_tokens({64, 65, 3, true}), 0);
}

TEST(Engine, SingleNodeRoutesToZero) {
  Router r(RouterKind::kUniformRandom, {0});
  Rng rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(r.route(rng), 0);
}

TEST(Engine, UniformRouterWithinThreeSigma) {
  Router r(RouterKind::kUniformRandom, {0, 1, 2, 3});
  Rng rng(5);
  std::vector<int> hits(4, 0);
  for (int k = 0; k < 10000; ++k) ++hits[std::size_t(r.route(rng))];
  const double sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (int h : hits) EXPECT_NEAR(h, 2500, 3 * sigma);
}

TEST(Engine, DistServeArrivalsGoToPrefillNode) {
  auto cfg = toy_sim(PolicyKind::kDistServe, 2);
  const auto trace = random_trace(3, 60, 0.05);
  const auto r = run(cfg, trace);
  ASSERT_EQ(r.roles, (std::vector<NodeRole>{NodeRole::kPrefill, NodeRole::kDecode}));
  for (const auto& q : r.requests) {
    EXPECT_EQ(q.node, 0);
    EXPECT_TRUE(q.completion.has_value());
  }
  for (const auto& b : r.batches) {
    if (b.node == 0) {
      EXPECT_EQ(b.n_decode, 0);
    } else {
      EXPECT_EQ(b.n_prefill, 0);
    }
  }
}

TEST(Engine, DecodeNodeRejectsRawRequest) {
  const std::vector<Request> trace{req(0, 0.0, 2, 2)};
  Simulation sim(toy_sim(PolicyKind::kDistServe, 2), trace);
  EXPECT_THROW(sim.deliver_arrival(1, 0), RoutingError);
  Simulation sim2(toy_sim(PolicyKind::kDistServe, 2), trace);
  EXPECT_THROW(sim2.deliver_transfer(1, 0), RoutingError);
}

TEST(Engine, DistServeNeedsBothRoles) {
  EXPECT_THROW(Simulation(toy_sim(PolicyKind::kDistServe, 1), std::vector<Request>{}),
               ConfigError);
}

TEST(Engine, SimultaneousArrivalsShareFirstBatch) {
  const std::vector<Request> trace{req(0, 1.0, 3, 1), req(1, 1.0, 3, 1), req(2, 1.0, 3, 1)};
  const auto r = run(toy_sim(PolicyKind::kSarathi), trace);
  ASSERT_FALSE(r.batches.empty());
  EXPECT_EQ(r.batches[0].n_prefill, 3);
  EXPECT_EQ(r.batches[0].start, 1.0);
}

TEST(Engine, AllPoliciesCompleteAndStayLegal) {
  for (PolicyKind k : kAllPolicies) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const int nodes = k == PolicyKind::kDistServe ? 3 : 2;
      const auto trace = random_trace(seed, 80, 0.08);
      SimResult r;
      ASSERT_NO_THROW(r = run(toy_sim(k, nodes), trace)) << policy_name(k);
      for (const auto& q : r.requests) {
        ASSERT_TRUE(q.completion) << policy_name(k) << " request " << q.id;
        ASSERT_EQ(std::int64_t(q.emits.size()), q.output_len + 1);
        for (std::size_t j = 1; j < q.emits.size(); ++j) ASSERT_LT(q.emits[j - 1], q.emits[j]);
        ASSERT_GE(*q.first_token, q.arrival);
      }
      // non-overlapping batches per node
      std::vector<Seconds> last(std::size_t(nodes), 0.0);
      for (const auto& b : r.batches) {
        ASSERT_GE(b.start, last[std::size_t(b.node)]);
        last[std::size_t(b.node)] = b.end;
      }
      for (std::size_t j = 1; j < r.queue.size(); ++j) ASSERT_LE(r.queue[j - 1].time, r.queue[j].time);
      ASSERT_EQ(r.queue.back().pending, 0);
    }
  }
}

TEST(Engine, DeterministicBatchLogs) {
  for (PolicyKind k : kAllPolicies) {
    const auto trace = random_trace(8, 60, 0.1);
    auto cfg = toy_sim(k, k == PolicyKind::kDistServe ? 2 : 3);
    std::ostringstream a, b;
    write_batch_log(a, run(cfg, trace));
    write_batch_log(b, run(cfg, trace));
    EXPECT_EQ(a.str(), b.str()) << policy_name(k);
  }
}

TEST(Engine, KvOverflowAborts) {
  auto cfg = toy_sim(PolicyKind::kSarathi);
  cfg.gpu.kv_token_capacity = 10;
  std::vector<Request> trace;
  for (int k = 0; k < 6; ++k) trace.push_back(req(k, 0.0, 4, 4));
  try {
    run(cfg, trace);
    FAIL() << "expected overflow";
  } catch (const MemoryOverflowError& e) {
    EXPECT_EQ(e.node(), 0);
    EXPECT_GE(e.batch_seq(), 0);
  }
}

TEST(Engine, LcmModeRejectsUnroundedPrompt) {
  auto cfg = toy_sim(PolicyKind::kRad);
  cfg.assumption3_mode = true;
  const std::vector<Request> trace{req(0, 0.0, 3, 1)};
  EXPECT_THROW(Simulation(cfg, trace), DivisibilityError);
}

TEST(Engine, UnsortedTraceRejected) {
  const std::vector<Request> trace{req(0, 2.0, 2, 1), req(1, 1.0, 2, 1)};
  EXPECT_THROW(Simulation(toy_sim(PolicyKind::kRad), trace), ValidationError);
}

TEST(Engine, HorizonTruncates) {
  auto cfg = toy_sim(PolicyKind::kRad);
  cfg.horizon = 20.0;
  const auto trace = random_trace(4, 100, 0.5);
  const auto r = run(cfg, trace);
  EXPECT_EQ(r.end_time, 20.0);
  for (const auto& b : r.batches) EXPECT_LE(b.start, 20.0);
}

TEST(Engine, RadCycleAccounting) {
  auto cfg = toy_sim(PolicyKind::kRad);
  cfg.policy.n = 3;
  const auto trace = random_trace(12, 300, 0.09);
  const auto r = run(cfg, trace);
  int loaded = 0;
  for (const auto& c : r.cycles) {
    EXPECT_LE(c.started, 3);
    if (c.closed && c.pending_at_start >= 3) {
      EXPECT_EQ(c.completed, 3) << c.start;
      ++loaded;
    }
  }
  EXPECT_GT(loaded, 5);
}

TEST(Engine, RadTilingInvariant) {
  auto cfg = toy_sim(PolicyKind::kRad);
  cfg.policy.n = 4;
  const auto trace = random_trace(21, 300, 0.09);
  const auto r = run(cfg, trace);
  const auto lcm = cfg.gpu.lcm();
  for (const auto& b : r.batches) {
    if (b.n_prefill == 0) {
      const bool forced = b.flags & (batch_flags::kEndOfCycle | batch_flags::kPrefillExhausted);
      if (!forced) {
        EXPECT_EQ(b.n_decode, cfg.gpu.optimal_tile.col);
      }
    } else {
      ASSERT_EQ(b.items.size(), 1u);
      const auto& it = b.items[0];
      const auto& q = r.requests[std::size_t(it.request)];
      if (it.index + it.chunk - 1 < q.prompt_len) {
        EXPECT_EQ(it.chunk, lcm);
      }
    }
  }
}

}  // namespace
}  // namespace llmsched
