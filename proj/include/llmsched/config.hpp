// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "llmsched/csv.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/errors.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

inline constexpr const char* kConfigEnvVar = "LLMSCHED_CONFIG";

struct ConfigKey {
  const char* section;
  const char* key;
  const char* type;
  const char* fallback;
  const char* flag;  // CLI spelling without dashes
  const char* help;
};

// Every recognised key. Rate tables (gpu.gemm_rate.<RxCxK>, gpu.gemv_rate.<RxC>) are open-ended.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"gpu", "sm_count", "int", "1", "sm-count", "streaming multiprocessors"},
      {"gpu", "out_tiles", "list", "2x2", "out-tiles", "output tiles, e.g. 128x256,256x128"},
      {"gpu", "red_tiles", "list", "2", "red-tiles", "reduction tile sizes"},
      {"gpu", "optimal_tile", "tile", "2x2x2", "optimal-tile", "throughput-optimal RxCxK tile"},
      {"gpu", "gemv_tile", "tile", "2x2", "gemv-tile", "GeMV tile RxC"},
      {"gpu", "nonlinear_rate", "float", "1", "nonlinear-rate", "non-linear ops, tokens/s"},
      {"gpu", "kv_token_capacity", "int", "1073741824", "kv-capacity", "KV cache size in tokens"},
      {"model", "n_layers", "int", "1", "n-layers", "transformer layers"},
      {"model", "d_attn", "int", "2", "d-attn", "attention dimension"},
      {"model", "d_model", "int", "0", "d-model", "embedding dimension (0 = unset)"},
      {"model", "d_ff", "int", "0", "d-ff", "MLP hidden dimension (0 = unset)"},
      {"model", "d_out", "int", "0", "d-out", "output dimension (0 = unset)"},
      {"model", "lin_rate", "float", "1", "lin-rate",
       "linear-layer rate at the optimal tile; empty derives it from the dims"},
      {"workload", "dist", "enum", "deterministic", "dist",
       "deterministic|empirical|lognormal|table1"},
      {"workload", "prompt_len", "int", "2", "prompt-len", "deterministic prompt length"},
      {"workload", "output_len", "int", "1", "output-len", "deterministic output length"},
      {"workload", "samples", "list", "", "samples", "empirical points P:D,P:D,..."},
      {"workload", "prompt_median", "float", "1730", "prompt-median", "log-normal target"},
      {"workload", "prompt_p90", "float", "5696", "prompt-p90", "log-normal target"},
      {"workload", "decode_median", "float", "415", "decode-median", "log-normal target"},
      {"workload", "decode_p90", "float", "834", "decode-p90", "log-normal target"},
      {"workload", "lp_max", "int", "8191", "lp-max", "prompt length cap"},
      {"workload", "ld_max", "int", "4096", "ld-max", "output length cap"},
      {"workload", "max_total_len", "int", "8192", "max-total-len", "prompt+output cap"},
      {"workload", "round_to_lcm", "bool", "false", "round-to-lcm",
       "round prompts up to the tile lcm"},
      {"workload", "paying_frac", "float", "0.05", "paying-frac", "share of paying requests"},
      {"workload", "paying_tbt", "float", "0.1", "paying-tbt", "paying TBT SLO, seconds"},
      {"workload", "free_tbt", "float", "0.5", "free-tbt", "free-tier TBT SLO, seconds"},
      {"workload", "time_scale", "float", "1", "time-scale",
       "model time units per second, applied to SLOs and thresholds"},
      {"workload", "lambda", "float", "1", "lambda", "arrival rate, requests per time unit"},
      {"workload", "horizon", "float", "1000", "horizon", "arrival horizon"},
      {"workload", "seed", "int", "1", "seed", "trace seed"},
      {"workload", "trace", "path", "", "trace", "trace CSV to load instead of generating"},
      {"policy", "policy", "enum", "rad", "policy",
       "rad|alt_cycle|request_level|sarathi|vllm|slai|distserve"},
      {"policy", "n", "int", "16", "n", "requests per cycle (rad, alt_cycle)"},
      {"policy", "b", "int", "8", "b", "prefill batch size (request_level)"},
      {"policy", "token_budget", "int", "512", "token-budget", "tokens per batch"},
      {"policy", "alpha", "int", "128", "alpha", "max requests holding KV"},
      {"policy", "beta", "int", "128", "beta", "max decodes per batch (slai)"},
      {"policy", "delta", "float", "10", "delta", "deadline offset in mean batches (slai)"},
      {"policy", "dynamic_offset", "bool", "false", "dynamic-offset", "switch delta on memory use"},
      {"policy", "delta_low", "float", "5", "delta-low", "offset below mem_threshold"},
      {"policy", "delta_high", "float", "10", "delta-high", "offset at or above mem_threshold"},
      {"policy", "mem_threshold", "float", "0.96", "mem-threshold", "KV use fraction"},
      {"policy", "prefill_order", "enum", "fcfs", "prefill-order", "fcfs|spf"},
      {"policy", "priority_paying", "bool", "false", "priority-paying",
       "admit tighter-SLO classes first"},
      {"policy", "kv_transfer_delay", "float", "0", "kv-transfer-delay", "distserve hop delay"},
      {"policy", "distserve_chunked", "bool", "false", "distserve-chunked",
       "chunk prompts on prefill nodes"},
      {"sim", "nodes", "int", "1", "nodes", "number of nodes r"},
      {"sim", "prefill_nodes", "int", "0", "prefill-nodes", "distserve prefill nodes (0 = half)"},
      {"sim", "router", "enum", "uniform_random", "router", "uniform_random|round_robin"},
      {"sim", "horizon", "float", "inf", "sim-horizon", "stop time; inf drains"},
      {"sim", "seed", "int", "1", "route-seed", "routing seed"},
      {"sim", "assumption3_mode", "bool", "false", "assumption3",
       "require prompts to be multiples of the tile lcm"},
      {"sim", "warmup_frac", "float", "0.1", "warmup-frac", "horizon share dropped from latency"},
      {"sim", "record_items", "bool", "true", "record-items", "keep batch composition"},
      {"sweep", "lambdas", "list", "", "lambdas", "arrival rates"},
      {"sweep", "policies", "list", "", "policies", "policies to compare"},
      {"sweep", "seeds", "list", "1", "seeds", "seeds"},
      {"sweep", "orders", "list", "", "order", "prefill orders (fcfs,spf)"},
      {"sweep", "jobs", "int", "1", "jobs", "parallel cells"},
      {"sweep", "ttft_threshold", "float", "0.5", "ttft-threshold",
       "median TTFT limit (seconds) for capacity"},
  };
  return keys;
}

// Flat "section.key" -> value.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues default_key_values() {
  KeyValues kv;
  for (const auto& k : config_keys()) kv[std::string(k.section) + "." + k.key] = k.fallback;
  return kv;
}

inline bool is_rate_key(const std::string& full) {
  return full.rfind("gpu.gemm_rate.", 0) == 0 || full.rfind("gpu.gemv_rate.", 0) == 0;
}

inline KeyValues read_ini(std::istream& is, const std::string& origin = "config") {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  KeyValues kv;
  for (const auto& [section, body] : pt) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' outside a section");
    }
    for (const auto& [key, node] : body) kv[section + "." + key] = node.data();
  }
  return kv;
}

inline KeyValues read_ini_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  return read_ini(f, path);
}

inline void check_known(const KeyValues& kv) {
  auto defaults = default_key_values();
  for (const auto& [k, v] : kv) {
    if (!defaults.count(k) && !is_rate_key(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

// Defaults, then the file, then explicit overrides.
inline KeyValues merge_config(const KeyValues& file, const KeyValues& overrides) {
  check_known(file);
  check_known(overrides);
  KeyValues kv = default_key_values();
  for (const auto& src : {file, overrides}) {
    for (const auto& [k, v] : src) kv[k] = v;
  }
  auto any_prefix = [&](const char* p) {
    for (const auto& [k, v] : kv) {
      if (k.rfind(p, 0) == 0) return true;
    }
    return false;
  };
  if (!any_prefix("gpu.gemm_rate.")) kv["gpu.gemm_rate.2x2x2"] = "1";
  if (!any_prefix("gpu.gemv_rate.")) kv["gpu.gemv_rate.2x2"] = "1";
  return kv;
}

inline void write_ini(std::ostream& os, const KeyValues& kv) {
  std::string current;
  for (const auto& [full, v] : kv) {
    auto dot = full.find('.');
    std::string section = full.substr(0, dot);
    if (section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << full.substr(dot + 1) << " = " << v << '\n';
  }
}

struct ExperimentConfig {
  SimConfig sim;
  LengthDistribution lengths;
  std::vector<SloClass> classes;
  double lambda = 1;
  Seconds trace_horizon = 1000;
  std::uint64_t trace_seed = 1;
  std::string trace_path;
  double time_scale = 1;
  double warmup_frac = 0.1;
  std::vector<double> sweep_lambdas;
  std::vector<std::string> sweep_policies;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> sweep_orders;
  int jobs = 1;
  double ttft_threshold = 0.5;  // seconds
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : csv::split(s, ',')) {
    auto t = csv::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  const std::string& str(const std::string& k) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) throw ConfigError("missing key " + k);
    return it->second;
  }

  template <typename T>
  T num(const std::string& k) const {
    const auto s = std::string(csv::trim(str(k)));
    if constexpr (std::is_floating_point_v<T>) {
      if (s == "inf") return std::numeric_limits<T>::infinity();
    }
    auto v = csv::parse_number<T>(s);
    if (!v) throw ConfigError(k + ": cannot parse '" + s + "' as a number");
    return *v;
  }

  bool flag(const std::string& k) const {
    const auto s = std::string(csv::trim(str(k)));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(k + ": expected true/false, got '" + s + "'");
  }

 private:
  const KeyValues& kv_;
};

}  // namespace detail

inline ExperimentConfig build_config(const KeyValues& kv) {
  detail::Reader rd(kv);
  ExperimentConfig e;
  SimConfig& s = e.sim;

  // gpu
  GpuSpec& g = s.gpu;
  g.sm_count = rd.num<std::int64_t>("gpu.sm_count");
  for (const auto& t : detail::split_list(rd.str("gpu.out_tiles"))) {
    auto d = parse_dims(t, 2);
    if (!d) throw ConfigError("gpu.out_tiles: bad tile '" + t + "'");
    g.out_tiles.emplace_back((*d)[0], (*d)[1]);
  }
  for (const auto& t : detail::split_list(rd.str("gpu.red_tiles"))) {
    auto v = csv::parse_number<Tokens>(t);
    if (!v) throw ConfigError("gpu.red_tiles: bad value '" + t + "'");
    g.red_tiles.push_back(*v);
  }
  auto opt = parse_tile(rd.str("gpu.optimal_tile"));
  if (!opt) throw ConfigError("gpu.optimal_tile: expected RxCxK");
  g.optimal_tile = *opt;
  auto gv = parse_gemv_tile(rd.str("gpu.gemv_tile"));
  if (!gv) throw ConfigError("gpu.gemv_tile: expected RxC");
  g.gemv_tile = *gv;
  g.nonlinear_rate = rd.num<double>("gpu.nonlinear_rate");
  g.kv_token_capacity = rd.num<Tokens>("gpu.kv_token_capacity");
  for (const auto& [k, v] : kv) {
    if (!is_rate_key(k)) continue;
    const bool gemm = k.rfind("gpu.gemm_rate.", 0) == 0;
    const std::string tile = k.substr(std::string("gpu.gemm_rate.").size());
    const double rate = rd.num<double>(k);
    if (gemm) {
      auto t = parse_tile(tile);
      if (!t) throw ConfigError(k + ": tile key must look like RxCxK");
      g.gemm_rate[*t] = rate;
    } else {
      auto t = parse_gemv_tile(tile);
      if (!t) throw ConfigError(k + ": tile key must look like RxC");
      g.gemv_rate[*t] = rate;
    }
  }

  // model
  ModelSpec& m = s.model;
  m.n_layers = rd.num<Tokens>("model.n_layers");
  m.d_attn = rd.num<Tokens>("model.d_attn");
  m.d_model = rd.num<Tokens>("model.d_model");
  m.d_ff = rd.num<Tokens>("model.d_ff");
  m.d_out = rd.num<Tokens>("model.d_out");
  if (!csv::trim(rd.str("model.lin_rate")).empty()) m.lin_rate = rd.num<double>("model.lin_rate");

  // workload
  LengthDistribution& d = e.lengths;
  const std::string dist = rd.str("workload.dist");
  if (dist == "deterministic") {
    d.kind = LengthKind::kDeterministic;
  } else if (dist == "empirical") {
    d.kind = LengthKind::kEmpirical;
  } else if (dist == "lognormal" || dist == "table1") {
    d.kind = LengthKind::kLogNormal;
  } else {
    throw ConfigError("workload.dist: '" + dist + "' not one of deterministic|empirical|lognormal|table1");
  }
  d.prompt_len = rd.num<Tokens>("workload.prompt_len");
  d.output_len = rd.num<Tokens>("workload.output_len");
  for (const auto& p : detail::split_list(rd.str("workload.samples"))) {
    auto parts = csv::split(p, ':');
    std::optional<Tokens> a, b;
    if (parts.size() == 2) {
      a = csv::parse_number<Tokens>(parts[0]);
      b = csv::parse_number<Tokens>(parts[1]);
    }
    if (!a || !b) throw ConfigError("workload.samples: bad point '" + p + "', expected P:D");
    d.samples.emplace_back(*a, *b);
  }
  if (dist == "table1") {
    const auto t1 = table1_distribution();
    d.prompt_median = t1.prompt_median;
    d.prompt_p90 = t1.prompt_p90;
    d.decode_median = t1.decode_median;
    d.decode_p90 = t1.decode_p90;
  } else {
    d.prompt_median = rd.num<double>("workload.prompt_median");
    d.prompt_p90 = rd.num<double>("workload.prompt_p90");
    d.decode_median = rd.num<double>("workload.decode_median");
    d.decode_p90 = rd.num<double>("workload.decode_p90");
  }
  d.lp_max = rd.num<Tokens>("workload.lp_max");
  d.ld_max = rd.num<Tokens>("workload.ld_max");
  d.max_total_len = rd.num<Tokens>("workload.max_total_len");
  d.round_to_lcm = rd.flag("workload.round_to_lcm");
  d.t_lcm = g.optimal_tile.lcm();

  e.time_scale = rd.num<double>("workload.time_scale");
  if (!(e.time_scale > 0)) throw ConfigError("workload.time_scale must be > 0");
  const double pf = rd.num<double>("workload.paying_frac");
  if (!(pf >= 0 && pf <= 1)) throw ConfigError("workload.paying_frac must be in [0, 1]");
  e.classes = paying_free_classes(pf, rd.num<double>("workload.paying_tbt") * e.time_scale,
                                  rd.num<double>("workload.free_tbt") * e.time_scale);
  e.lambda = rd.num<double>("workload.lambda");
  e.trace_horizon = rd.num<double>("workload.horizon");
  e.trace_seed = rd.num<std::uint64_t>("workload.seed");
  e.trace_path = rd.str("workload.trace");

  // policy
  PolicyConfig& p = s.policy;
  const std::string pol = rd.str("policy.policy");
  auto kind = parse_policy(pol);
  if (!kind) {
    throw ConfigError("unknown policy '" + pol + "'; valid policies: " + valid_policy_list());
  }
  p.kind = *kind;
  p.n = rd.num<Tokens>("policy.n");
  p.b = rd.num<Tokens>("policy.b");
  p.token_budget = rd.num<Tokens>("policy.token_budget");
  p.alpha = rd.num<Tokens>("policy.alpha");
  p.beta = rd.num<Tokens>("policy.beta");
  p.delta = rd.num<double>("policy.delta");
  p.dynamic_offset = rd.flag("policy.dynamic_offset");
  p.delta_low = rd.num<double>("policy.delta_low");
  p.delta_high = rd.num<double>("policy.delta_high");
  p.mem_threshold = rd.num<double>("policy.mem_threshold");
  auto ord = parse_order(rd.str("policy.prefill_order"));
  if (!ord) throw ConfigError("policy.prefill_order must be fcfs or spf");
  p.order = *ord;
  p.priority_paying = rd.flag("policy.priority_paying");
  p.kv_transfer_delay = rd.num<double>("policy.kv_transfer_delay");
  p.distserve_chunked = rd.flag("policy.distserve_chunked");

  // sim
  s.nodes = rd.num<int>("sim.nodes");
  s.prefill_nodes = rd.num<int>("sim.prefill_nodes");
  const std::string router = rd.str("sim.router");
  if (router == "uniform_random") {
    s.router = RouterKind::kUniformRandom;
  } else if (router == "round_robin") {
    s.router = RouterKind::kRoundRobin;
  } else {
    throw ConfigError("sim.router must be uniform_random or round_robin");
  }
  s.horizon = rd.num<double>("sim.horizon");
  s.seed = rd.num<std::uint64_t>("sim.seed");
  s.assumption3_mode = rd.flag("sim.assumption3_mode");
  e.warmup_frac = rd.num<double>("sim.warmup_frac");
  if (!(e.warmup_frac >= 0 && e.warmup_frac < 1)) throw ConfigError("sim.warmup_frac must be in [0, 1)");
  s.record_items = rd.flag("sim.record_items");

  // sweep
  for (const auto& x : detail::split_list(rd.str("sweep.lambdas"))) {
    auto v = csv::parse_number<double>(x);
    if (!v || *v < 0) throw ConfigError("sweep.lambdas: bad value '" + x + "'");
    e.sweep_lambdas.push_back(*v);
  }
  e.sweep_policies = detail::split_list(rd.str("sweep.policies"));
  for (const auto& x : detail::split_list(rd.str("sweep.seeds"))) {
    auto v = csv::parse_number<std::uint64_t>(x);
    if (!v) throw ConfigError("sweep.seeds: bad value '" + x + "'");
    e.sweep_seeds.push_back(*v);
  }
  e.sweep_orders = detail::split_list(rd.str("sweep.orders"));
  e.jobs = rd.num<int>("sweep.jobs");
  e.ttft_threshold = rd.num<double>("sweep.ttft_threshold");

  validate(g);
  e.warnings = validate(m, g);
  validate(s);
  make_scheduler(p, NodeRole::kUnified, g);  // surfaces policy parameter errors early
  return e;
}

// Resolves the config file: explicit path, else the environment variable, else none.
inline KeyValues load_config_file(const std::string& explicit_path) {
  std::string path = explicit_path;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) path = env;
  }
  if (path.empty()) return {};
  return read_ini_file(path);
}

}  // namespace llmsched
