// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "llmsched/cost_model.hpp"
#include "llmsched/csv.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

// Lower bound on the GPU time any schedule spends on one request.
inline double t_star_r(Tokens lp, Tokens ld, const GpuSpec& g, const ModelSpec& m,
                       bool assumption3 = false) {
  const TileConfig& o = g.optimal_tile;
  const Tokens lcm = o.lcm();
  if (assumption3 && lp % lcm != 0) {
    throw DivisibilityError("prompt_len " + std::to_string(lp) + " not a multiple of t_lcm " +
                            std::to_string(lcm));
  }
  const double len = double(lp + ld);
  const double lin = len / (linear_rate(o, m, g) * double(o.col));
  const double nonlin = len / g.nonlinear_rate;
  const double dsa = double(m.n_layers) * decode_sa_sum(lp + 1, lp + ld, m, g);
  const double pre = double(m.n_layers) * double(m.d_attn) /
                     (double(g.sm_count) * g.gemm_rate_for(o) * double(o.row * o.col * o.red)) *
                     double(lp) * double(lp + lcm);
  return lin + nonlin + dsa + pre;
}

inline double t_star_r(const Request& r, const GpuSpec& g, const ModelSpec& m,
                       bool assumption3 = false) {
  return t_star_r(r.prompt_len, r.output_len, g, m, assumption3);
}

struct Estimate {
  double mean = 0;
  double ci_half_width = 0;  // 99%
  std::int64_t samples = 0;
};

inline Estimate t_bar_r(const LengthDistribution& dist, const GpuSpec& g, const ModelSpec& m,
                        std::int64_t n_samples = 100000, std::uint64_t seed = 1) {
  auto shape = [&](Tokens p) {
    return dist.round_to_lcm ? round_to_lcm(p, dist.t_lcm, dist.lp_max) : p;
  };
  switch (dist.kind) {
    case LengthKind::kDeterministic:
      return {t_star_r(shape(dist.prompt_len), dist.output_len, g, m), 0.0, 1};
    case LengthKind::kEmpirical: {
      LengthSampler check(dist);
      double sum = 0;
      for (auto [p, o] : dist.samples) sum += t_star_r(shape(p), o, g, m);
      return {sum / double(dist.samples.size()), 0.0, std::int64_t(dist.samples.size())};
    }
    case LengthKind::kLogNormal: {
      LengthSampler sampler(dist);
      Rng rng(seed);
      double mean = 0, m2 = 0;
      for (std::int64_t k = 1; k <= n_samples; ++k) {
        auto [p, o] = sampler.sample(rng);
        const double x = t_star_r(p, o, g, m);
        const double delta = x - mean;
        mean += delta / double(k);
        m2 += delta * (x - mean);
      }
      const double sd = n_samples > 1 ? std::sqrt(m2 / double(n_samples - 1)) : 0.0;
      return {mean, 2.5758293035489004 * sd / std::sqrt(double(n_samples)), n_samples};
    }
  }
  return {};
}

// Worst-case solo completion time for a request at the length caps, over all tiles.
inline double t_max(const GpuSpec& g, const ModelSpec& m, Tokens lp_max, Tokens ld_max) {
  if (lp_max < 1 || ld_max < 1) throw std::invalid_argument("caps must be >= 1");
  const Tokens len = lp_max + ld_max;
  const double rest =
      double(len) / g.nonlinear_rate + double(m.n_layers) * decode_sa_sum(1, len, m, g);
  double best = 0;
  for (const auto& t : g.tile_configs()) {
    best = std::max(best, double(len) / linear_rate(t, m, g) + rest);
  }
  return best;
}

enum class Verdict { kStable, kUnstable, kIndeterminate };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kStable:
      return "stable-guaranteed";
    case Verdict::kUnstable:
      return "unstable-guaranteed";
    case Verdict::kIndeterminate:
      return "indeterminate-boundary";
  }
  return "?";
}

struct CapacityReport {
  double lambda = 0;
  int r = 1;
  double t_bar_r = 0;
  double t_bar_r_ci = 0;
  double t_max = 0;
  double load = 0;  // lambda * t_bar_r / r
  double margin = 0;
  double epsilon = 0;
  Verdict verdict = Verdict::kIndeterminate;
  std::optional<std::int64_t> rad_min_n;
};

inline CapacityReport capacity_check(double lambda, int r, double t_bar, double t_max_v,
                                     Tokens t_col) {
  if (!(lambda >= 0) || r < 1) throw std::invalid_argument("need lambda >= 0 and r >= 1");
  CapacityReport c;
  c.lambda = lambda;
  c.r = r;
  c.t_bar_r = t_bar;
  c.t_max = t_max_v;
  c.load = lambda * t_bar / double(r);
  c.margin = double(r) - lambda * t_bar;
  if (std::abs(c.margin) <= 1e-12 * double(r)) {
    c.margin = 0;
    c.verdict = Verdict::kIndeterminate;
    return c;
  }
  if (c.margin < 0) {
    c.verdict = Verdict::kUnstable;
    return c;
  }
  c.verdict = Verdict::kStable;
  c.epsilon = c.margin / double(r);
  const double bound = double(t_col - 1) * t_max_v / (c.epsilon * t_bar);
  if (bound < 9e18) c.rad_min_n = std::int64_t(std::floor(bound)) + 1;
  return c;
}

inline CapacityReport capacity_check(double lambda, int r, const LengthDistribution& dist,
                                     const GpuSpec& g, const ModelSpec& m,
                                     std::int64_t n_samples = 100000) {
  const Estimate tb = t_bar_r(dist, g, m, n_samples);
  const auto [lp, ld] = support_caps(dist);
  CapacityReport c = capacity_check(lambda, r, tb.mean, t_max(g, m, lp, ld), g.optimal_tile.col);
  c.t_bar_r_ci = tb.ci_half_width;
  return c;
}

inline std::string to_text(const CapacityReport& c) {
  std::ostringstream os;
  os << "lambda=" << csv::format_double(c.lambda) << '\n'
     << "r=" << c.r << '\n'
     << "t_bar_r=" << csv::format_double(c.t_bar_r) << '\n'
     << "t_bar_r_ci99=" << csv::format_double(c.t_bar_r_ci) << '\n'
     << "t_max=" << csv::format_double(c.t_max) << '\n'
     << "load=" << csv::format_double(c.load) << '\n'
     << "margin=" << csv::format_double(c.margin) << '\n'
     << "epsilon=" << csv::format_double(c.epsilon) << '\n'
     << "verdict=" << verdict_name(c.verdict) << '\n'
     << "rad_min_n=" << (c.rad_min_n ? std::to_string(*c.rad_min_n) : "undefined") << '\n';
  return os.str();
}

inline constexpr const char* kCapacityCsvHeader =
    "lambda,r,t_bar_r,t_bar_r_ci99,t_max,load,margin,epsilon,verdict,rad_min_n";

inline std::string to_csv_row(const CapacityReport& c) {
  std::ostringstream os;
  os << csv::format_double(c.lambda) << ',' << c.r << ',' << csv::format_double(c.t_bar_r) << ','
     << csv::format_double(c.t_bar_r_ci) << ',' << csv::format_double(c.t_max) << ','
     << csv::format_double(c.load) << ',' << csv::format_double(c.margin) << ','
     << csv::format_double(c.epsilon) << ',' << verdict_name(c.verdict) << ','
     << (c.rad_min_n ? std::to_string(*c.rad_min_n) : "");
  return os.str();
}

struct BoundsContext {
  GpuSpec gpu;
  ModelSpec model;
  int nodes = 1;
  double t_max = 0;
  double t_bar_r = 0;
  std::int64_t rad_n = 0;  // > 0 enables the cycle check
};

struct BoundCheck {
  bool applicable = false;
  bool pass = true;
  double worst = 0;  // largest (required - observed); <= 0 means slack
  std::int64_t violations = 0;
  std::int64_t checked = 0;
};

struct BoundsReport {
  BoundCheck drain;
  BoundCheck queue;
  BoundCheck cycle;
  double cycle_mean = 0;
  double cycle_limit = 0;
  double cycle_allowance = 0;

  bool all_pass() const { return drain.pass && queue.pass && cycle.pass; }
};

inline BoundsReport assert_bounds(const SimResult& res, const BoundsContext& ctx) {
  BoundsReport rep;
  const double r = double(ctx.nodes);
  std::vector<double> tstar;
  tstar.reserve(res.requests.size());
  for (const auto& q : res.requests) {
    tstar.push_back(t_star_r(q.prompt_len, q.output_len, ctx.gpu, ctx.model));
  }

  // drain time of the completed set
  double sum = 0, drain = 0;
  std::int64_t done = 0;
  for (std::size_t k = 0; k < res.requests.size(); ++k) {
    if (!res.requests[k].completion) continue;
    sum += tstar[k];
    drain = std::max(drain, *res.requests[k].completion);
    ++done;
  }
  if (done > 0) {
    rep.drain.applicable = true;
    rep.drain.checked = done;
    const double need = sum / r;
    rep.drain.worst = need - drain;
    if (drain < need * (1 - 1e-9)) {
      rep.drain.pass = false;
      rep.drain.violations = 1;
    }
  }

  // pending-count lower bound at every sample
  if (!res.queue.empty() && ctx.t_max > 0) {
    rep.queue.applicable = true;
    std::vector<double> cum(tstar.size() + 1, 0.0);
    for (std::size_t k = 0; k < tstar.size(); ++k) cum[k + 1] = cum[k] + tstar[k];
    rep.queue.worst = -std::numeric_limits<double>::infinity();
    for (const auto& s : res.queue) {
      const double work = cum[std::size_t(s.arrived)] / r;
      const double lhs = double(s.pending) * ctx.t_max + s.time;
      rep.queue.worst = std::max(rep.queue.worst, (work - s.time) / ctx.t_max - double(s.pending));
      ++rep.queue.checked;
      if (lhs < work - 1e-9 * std::max(1.0, work)) {
        rep.queue.pass = false;
        ++rep.queue.violations;
      }
    }
  }

  // mean length of cycles that start with at least n pending
  if (ctx.rad_n > 0) {
    std::vector<double> len;
    for (const auto& c : res.cycles) {
      if (c.closed && c.pending_at_start >= ctx.rad_n) len.push_back(c.end - c.start);
    }
    rep.cycle.checked = std::int64_t(len.size());
    if (len.size() >= 2) {
      rep.cycle.applicable = true;
      double mean = 0;
      for (double x : len) mean += x;
      mean /= double(len.size());
      double var = 0;
      for (double x : len) var += (x - mean) * (x - mean);
      var /= double(len.size() - 1);
      rep.cycle_mean = mean;
      rep.cycle_limit = double(ctx.rad_n) * ctx.t_bar_r +
                        double(ctx.gpu.optimal_tile.col - 1) * ctx.t_max;
      rep.cycle_allowance = 3 * std::sqrt(var) / std::sqrt(double(len.size()));
      rep.cycle.worst = mean - (rep.cycle_limit + rep.cycle_allowance);
      if (rep.cycle.worst > 0) {
        rep.cycle.pass = false;
        rep.cycle.violations = 1;
      }
    }
  }
  return rep;
}

inline std::string to_text(const BoundsReport& b) {
  std::ostringstream os;
  auto line = [&](const char* name, const BoundCheck& c) {
    os << name << ".applicable=" << (c.applicable ? "true" : "false") << '\n'
       << name << ".pass=" << (c.pass ? "true" : "false") << '\n'
       << name << ".checked=" << c.checked << '\n'
       << name << ".violations=" << c.violations << '\n'
       << name << ".worst=" << csv::format_double(c.worst) << '\n';
  };
  line("drain", b.drain);
  line("queue", b.queue);
  line("cycle", b.cycle);
  os << "cycle.mean=" << csv::format_double(b.cycle_mean) << '\n'
     << "cycle.limit=" << csv::format_double(b.cycle_limit) << '\n'
     << "cycle.allowance=" << csv::format_double(b.cycle_allowance) << '\n'
     << "all_pass=" << (b.all_pass() ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace llmsched
