// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "llmsched/analysis.hpp"
#include "llmsched/config.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/io.hpp"
#include "llmsched/metrics.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kConfig = 2;
inline constexpr int kMemoryOverflow = 3;
inline constexpr int kBoundViolation = 4;
}  // namespace exit_code

// Maps library exceptions onto exit codes.
inline int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const FitError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const DivisibilityError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const MemoryOverflowError& e) {
    err << "memory overflow: " << e.what() << '\n';
    return exit_code::kMemoryOverflow;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kFailure;
  }
}

inline std::vector<Request> obtain_trace(const ExperimentConfig& e) {
  if (!e.trace_path.empty()) return load_trace(e.trace_path, e.classes);
  return generate_trace(e.trace_seed, e.trace_horizon, e.lambda, e.lengths, e.classes);
}

inline std::string policy_label(const PolicyConfig& p) {
  std::string s(policy_name(p.kind));
  if (uses_order(p.kind)) s += "-" + std::string(order_name(p.order));
  return s;
}

inline BoundsContext bounds_context(const ExperimentConfig& e, const std::vector<Request>& trace) {
  BoundsContext ctx;
  ctx.gpu = e.sim.gpu;
  ctx.model = e.sim.model;
  ctx.nodes = e.sim.nodes;
  auto [lp, ld] = support_caps(e.lengths);
  for (const auto& r : trace) {
    lp = std::max(lp, r.prompt_len);
    ld = std::max(ld, r.output_len);
  }
  ctx.t_max = t_max(ctx.gpu, ctx.model, lp, ld);
  if (e.trace_path.empty()) {
    ctx.t_bar_r = t_bar_r(e.lengths, ctx.gpu, ctx.model).mean;
  } else if (!trace.empty()) {
    double s = 0;
    for (const auto& r : trace) s += t_star_r(r, ctx.gpu, ctx.model);
    ctx.t_bar_r = s / double(trace.size());
  }
  if (e.sim.policy.kind == PolicyKind::kRad) ctx.rad_n = e.sim.policy.n;
  return ctx;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::function<void(std::ostream&)>& f) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  f(os);
}

}  // namespace detail

inline int cmd_gen_trace(const ExperimentConfig& e, const std::string& out_path, std::ostream& out) {
  auto trace = generate_trace(e.trace_seed, e.trace_horizon, e.lambda, e.lengths, e.classes);
  if (out_path.empty() || out_path == "-") {
    save_trace(out, trace, e.classes);
  } else {
    save_trace(out_path, trace, e.classes);
    out << "wrote " << trace.size() << " requests to " << out_path << '\n';
  }
  return exit_code::kOk;
}

inline int cmd_run(const ExperimentConfig& e, const KeyValues& effective, const std::string& out_dir,
                   bool check_bounds, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  for (const auto& w : e.warnings) err << "warning: " << w << '\n';
  const auto trace = obtain_trace(e);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  detail::write_file(dir / "effective_config.ini", [&](std::ostream& os) { write_ini(os, effective); });
  detail::write_file(dir / "trace.csv", [&](std::ostream& os) { save_trace(os, trace, e.classes); });

  SimResult res;
  try {
    res = run(e.sim, trace);
  } catch (const MemoryOverflowError& ex) {
    detail::write_file(dir / "overflow.txt", [&](std::ostream& os) {
      os << "node=" << ex.node() << "\nbatch_seq=" << ex.batch_seq() << "\nmessage=" << ex.what()
         << '\n';
    });
    throw;
  }
  detail::write_file(dir / "batches.csv", [&](std::ostream& os) { write_batch_log(os, res); });
  detail::write_file(dir / "requests.csv", [&](std::ostream& os) { write_requests(os, res, e.classes); });
  detail::write_file(dir / "tokens.csv", [&](std::ostream& os) { write_token_emits(os, res); });

  const auto agg = aggregate(res, e.classes, {e.warmup_frac});
  const std::string label = policy_label(e.sim.policy);
  detail::write_file(dir / "metrics.txt", [&](std::ostream& os) {
    os << "policy=" << label << "\nlambda=" << csv::format_double(e.lambda)
       << "\nrequests=" << trace.size() << '\n'
       << to_text(agg);
  });
  detail::write_file(dir / "metrics.csv", [&](std::ostream& os) {
    os << kMetricsCsvHeader << '\n';
    for (const auto& c : agg.classes) {
      os << metrics_row("run", label, e.lambda, c, agg.throughput, agg.queue_slope) << '\n';
    }
    os << metrics_row("run", label, e.lambda, agg.all, agg.throughput, agg.queue_slope) << '\n';
  });
  out << "requests=" << trace.size() << " completed=" << agg.completed
      << " batches=" << res.batches.size() << '\n';

  if (check_bounds) {
    const auto rep = assert_bounds(res, bounds_context(e, trace));
    detail::write_file(dir / "bounds.txt", [&](std::ostream& os) { os << to_text(rep); });
    out << to_text(rep);
    if (!rep.all_pass()) {
      err << "bound violation, see " << (dir / "bounds.txt").string() << '\n';
      return exit_code::kBoundViolation;
    }
  }
  return exit_code::kOk;
}

inline int cmd_bounds(const ExperimentConfig& e, const std::string& csv_path, std::ostream& out) {
  const auto rep = capacity_check(e.lambda, e.sim.nodes, e.lengths, e.sim.gpu, e.sim.model);
  out << to_text(rep);
  if (rep.verdict == Verdict::kStable && rep.rad_min_n) {
    out << "guidance: run rad with n >= " << *rep.rad_min_n << " at this load\n";
  } else if (rep.verdict == Verdict::kUnstable) {
    out << "guidance: no scheduler keeps the queue bounded at this load with r=" << rep.r << '\n';
  }
  if (!csv_path.empty()) {
    const bool fresh = !std::filesystem::exists(csv_path);
    std::ofstream os(csv_path, std::ios::app | std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + csv_path);
    if (fresh) os << kCapacityCsvHeader << '\n';
    os << to_csv_row(rep) << '\n';
  }
  return exit_code::kOk;
}

struct SweepVariant {
  std::string label;
  PolicyConfig policy;
};

inline std::vector<SweepVariant> sweep_variants(const ExperimentConfig& e) {
  std::vector<std::string> names = e.sweep_policies;
  if (names.empty()) names.push_back(std::string(policy_name(e.sim.policy.kind)));
  std::vector<std::string> orders = e.sweep_orders;
  std::vector<SweepVariant> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& pol, const std::string& ord) {
    PolicyConfig p = e.sim.policy;
    auto kind = parse_policy(pol);
    if (!kind) throw ConfigError("unknown policy '" + pol + "'; valid policies: " + valid_policy_list());
    p.kind = *kind;
    if (!ord.empty()) {
      auto o = parse_order(ord);
      if (!o) throw ConfigError("unknown prefill order '" + ord + "'");
      p.order = *o;
    }
    make_scheduler(p, NodeRole::kUnified, e.sim.gpu);
    SweepVariant v{policy_label(p), p};
    if (seen.insert(v.label).second) out.push_back(v);
  };
  for (const auto& n : names) {
    auto colon = n.find(':');
    if (colon != std::string::npos) {
      add(n.substr(0, colon), n.substr(colon + 1));
    } else if (orders.empty()) {
      add(n, "");
    } else {
      for (const auto& o : orders) add(n, o);
    }
  }
  return out;
}

struct SweepCell {
  std::size_t variant = 0;
  double lambda = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  LatencyAggregate agg;
  SlopeFit slope;
};

inline SweepCell run_sweep_cell(const ExperimentConfig& e, const SweepVariant& v, double lambda,
                                std::uint64_t seed) {
  SweepCell c;
  c.lambda = lambda;
  c.seed = seed;
  try {
    SimConfig sim = e.sim;
    sim.policy = v.policy;
    sim.seed = seed;
    sim.record_items = false;
    if (!std::isfinite(sim.horizon)) sim.horizon = e.trace_horizon;
    const auto trace = generate_trace(seed, e.trace_horizon, lambda, e.lengths, e.classes);
    const auto res = run(sim, trace);
    c.agg = aggregate(res, e.classes, {e.warmup_frac});
    try {
      c.slope = fit_queue_slope(res.queue, 0, res.end_time);
    } catch (const std::invalid_argument&) {
    }
    c.ok = true;
  } catch (const std::exception& ex) {
    c.error = ex.what();
  }
  return c;
}

namespace detail {

// Seeds of one (variant, lambda) group are independent replicates: the group diverges when
// the mean queue slope is positive at 99% (one-sided t-test). A lone cell falls back to its
// own least-squares interval.
inline bool diverging(const std::vector<SweepCell>& cells, const SweepCell& c) {
  std::vector<double> slopes;
  for (const auto& x : cells) {
    if (x.ok && x.variant == c.variant && x.lambda == c.lambda) slopes.push_back(x.slope.slope);
  }
  if (slopes.size() < 2) return c.slope.slope - 3 * c.slope.stderr_ > 0;
  const double k = double(slopes.size());
  double mean = 0, var = 0;
  for (double s : slopes) mean += s / k;
  for (double s : slopes) var += (s - mean) * (s - mean) / (k - 1);
  if (var == 0) return mean > 0;
  const boost::math::students_t t(k - 1);
  return mean / std::sqrt(var / k) > boost::math::quantile(t, 0.99);
}

}  // namespace detail

inline int cmd_sweep(const ExperimentConfig& e, const std::string& out_dir, std::ostream& out,
                     std::ostream& err) {
  namespace fs = std::filesystem;
  for (const auto& w : e.warnings) err << "warning: " << w << '\n';
  if (e.sweep_lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
  if (e.sweep_seeds.empty()) throw ConfigError("sweep needs at least one seed");
  const auto variants = sweep_variants(e);
  std::vector<SweepCell> cells;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (double l : e.sweep_lambdas) {
      for (auto s : e.sweep_seeds) {
        SweepCell c;
        c.variant = v;
        c.lambda = l;
        c.seed = s;
        cells.push_back(c);
      }
    }
  }
  out << "sweep: " << variants.size() << " policies x " << e.sweep_lambdas.size() << " lambdas x "
      << e.sweep_seeds.size() << " seeds = " << cells.size() << " cells\n";

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      const std::size_t v = cells[k].variant;
      cells[k] = run_sweep_cell(e, variants[v], cells[k].lambda, cells[k].seed);
      cells[k].variant = v;
    }
  };
  const int jobs = std::max(1, std::min<int>(e.jobs, int(cells.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  auto run_id = [&](const SweepCell& c) {
    return variants[c.variant].label + "-l" + csv::format_double(c.lambda) + "-s" +
           std::to_string(c.seed);
  };
  detail::write_file(dir / "sweep.csv", [&](std::ostream& os) {
    os << kMetricsCsvHeader << '\n';
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (double l : e.sweep_lambdas) {
        ClassAggregate mean;
        mean.name = "all";
        double tp = 0, slope = 0;
        std::int64_t n = 0;
        double med = 0, avg = 0, p99 = 0, viol = 0;
        for (const auto& c : cells) {
          if (c.variant != v || c.lambda != l) continue;
          ClassAggregate row = c.agg.all;
          row.name = "all";
          const double nan = std::numeric_limits<double>::quiet_NaN();
          os << metrics_row(run_id(c), variants[v].label, l, row, c.ok ? c.agg.throughput : nan,
                            c.ok ? c.agg.queue_slope : nan)
             << '\n';
          if (!c.ok) continue;
          ++n;
          med += row.ttft_median;
          avg += row.ttft_mean;
          p99 += row.tbt_p99;
          viol += row.viol_rate;
          tp += c.agg.throughput;
          slope += c.agg.queue_slope;
        }
        const double k = n > 0 ? double(n) : std::numeric_limits<double>::quiet_NaN();
        mean.ttft_median = med / k;
        mean.ttft_mean = avg / k;
        mean.tbt_p99 = p99 / k;
        mean.viol_rate = viol / k;
        os << metrics_row("mean", variants[v].label, l, mean, tp / k, slope / k) << '\n';
      }
    }
  });
  detail::write_file(dir / "sweep_classes.csv", [&](std::ostream& os) {
    os << kMetricsCsvHeader << '\n';
    for (const auto& c : cells) {
      if (!c.ok) continue;
      for (const auto& cl : c.agg.classes) {
        os << metrics_row(run_id(c), variants[c.variant].label, c.lambda, cl, c.agg.throughput,
                          c.agg.queue_slope)
           << '\n';
      }
    }
  });
  int failures = 0;
  detail::write_file(dir / "sweep_status.csv", [&](std::ostream& os) {
    os << "run_id,status,diverging,slope_stderr,message\n";
    for (const auto& c : cells) {
      const bool diverging = c.ok && detail::diverging(cells, c);
      std::string msg = c.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      os << run_id(c) << ',' << (c.ok ? "ok" : "failed") << ',' << (diverging ? "true" : "false")
         << ',' << csv::format_double(c.slope.stderr_) << ',' << msg << '\n';
      if (!c.ok) ++failures;
    }
  });
  detail::write_file(dir / "summary.txt", [&](std::ostream& os) {
    const double limit = e.ttft_threshold * e.time_scale;
    os << "cells=" << cells.size() << "\nfailed=" << failures
       << "\nttft_threshold=" << csv::format_double(limit) << '\n';
    std::vector<double> lambdas = e.sweep_lambdas;
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
    for (std::size_t v = 0; v < variants.size(); ++v) {
      std::optional<double> best, above;
      for (double l : lambdas) {
        double s = 0;
        int n = 0;
        for (const auto& c : cells) {
          if (c.variant == v && c.lambda == l && c.ok && !std::isnan(c.agg.all.ttft_median)) {
            s += c.agg.all.ttft_median;
            ++n;
          }
        }
        const bool meets = n > 0 && s / n <= limit;
        if (meets && !above) best = l;
        if (!meets && best && !above) above = l;
      }
      const std::string p = "capacity." + variants[v].label;
      os << p << ".max_lambda=" << (best ? csv::format_double(*best) : "none") << '\n'
         << p << ".bracket_above=" << (above ? csv::format_double(*above) : "none") << '\n';
    }
  });
  out << "wrote " << (dir / "sweep.csv").string() << (failures ? " with failed cells" : "") << '\n';
  return exit_code::kOk;
}

}  // namespace llmsched
