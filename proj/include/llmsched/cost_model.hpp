// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "llmsched/errors.hpp"

namespace llmsched {

using Tokens = std::int64_t;
using RequestId = std::int64_t;
using Seconds = double;

constexpr Tokens ceil_div(Tokens a, Tokens b) { return (a + b - 1) / b; }
constexpr bool is_pow2(Tokens x) { return x >= 1 && (x & (x - 1)) == 0; }

struct TileConfig {
  Tokens row = 1;
  Tokens col = 1;
  Tokens red = 1;

  auto operator<=>(const TileConfig&) const = default;
  Tokens lcm() const { return std::lcm(std::lcm(row, col), red); }
  std::string key() const {
    return std::to_string(row) + "x" + std::to_string(col) + "x" + std::to_string(red);
  }
};

struct GemvTile {
  Tokens row = 1;
  Tokens col = 1;

  auto operator<=>(const GemvTile&) const = default;
  std::string key() const { return std::to_string(row) + "x" + std::to_string(col); }
};

// Parses "AxBxC" / "A x B" (spaces allowed) into `n` positive integers.
inline std::optional<std::vector<Tokens>> parse_dims(std::string_view s, std::size_t n) {
  std::vector<Tokens> out;
  std::string compact;
  for (char c : s) {
    if (c != ' ' && c != '\t') compact.push_back(c == 'X' ? 'x' : c);
  }
  std::string_view rest = compact;
  while (true) {
    auto pos = rest.find('x');
    auto part = rest.substr(0, pos);
    Tokens v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size() || v < 1) return std::nullopt;
    out.push_back(v);
    if (pos == std::string_view::npos) break;
    rest = rest.substr(pos + 1);
  }
  if (out.size() != n) return std::nullopt;
  return out;
}

inline std::optional<TileConfig> parse_tile(std::string_view s) {
  auto d = parse_dims(s, 3);
  if (!d) return std::nullopt;
  return TileConfig{(*d)[0], (*d)[1], (*d)[2]};
}

inline std::optional<GemvTile> parse_gemv_tile(std::string_view s) {
  auto d = parse_dims(s, 2);
  if (!d) return std::nullopt;
  return GemvTile{(*d)[0], (*d)[1]};
}

struct GpuSpec {
  std::int64_t sm_count = 1;
  std::vector<std::pair<Tokens, Tokens>> out_tiles;
  std::vector<Tokens> red_tiles;
  std::map<TileConfig, double> gemm_rate;  // tile-pairs/s per SM
  std::map<GemvTile, double> gemv_rate;
  GemvTile gemv_tile;
  double nonlinear_rate = 1.0;  // tokens/s
  TileConfig optimal_tile;
  Tokens kv_token_capacity = 1 << 30;

  bool has_tile(const TileConfig& t) const {
    bool out = std::find(out_tiles.begin(), out_tiles.end(), std::pair{t.row, t.col}) !=
               out_tiles.end();
    bool red = std::find(red_tiles.begin(), red_tiles.end(), t.red) != red_tiles.end();
    return out && red;
  }

  double gemm_rate_for(const TileConfig& t) const {
    if (!has_tile(t)) throw InvalidTileError("tile " + t.key() + " not in gpu tile sets");
    auto it = gemm_rate.find(t);
    if (it == gemm_rate.end()) throw InvalidTileError("no gemm rate for tile " + t.key());
    return it->second;
  }

  double gemv_rate_for(const GemvTile& t) const {
    auto it = gemv_rate.find(t);
    if (it == gemv_rate.end()) throw InvalidTileError("no gemv rate for tile " + t.key());
    return it->second;
  }

  std::vector<TileConfig> tile_configs() const {
    std::vector<TileConfig> out;
    for (auto [r, c] : out_tiles) {
      for (Tokens k : red_tiles) out.push_back({r, c, k});
    }
    return out;
  }

  Tokens lcm() const { return optimal_tile.lcm(); }
};

// d_model / d_ff / d_out are only needed when lin_rate is derived; 0 means absent.
struct ModelSpec {
  Tokens n_layers = 1;
  Tokens d_attn = 1;
  Tokens d_model = 0;
  Tokens d_ff = 0;
  Tokens d_out = 0;
  std::optional<double> lin_rate;

  bool has_linear_dims() const { return d_model > 0 && d_ff > 0 && d_out > 0; }
};

// Checks tile sets, rates and the optimal-tile throughput condition. Throws ConfigError.
inline void validate(const GpuSpec& g) {
  auto fail = [](const std::string& m) { throw ConfigError("gpu: " + m); };
  if (g.sm_count < 1) fail("sm_count must be >= 1");
  if (g.out_tiles.empty() || g.red_tiles.empty()) fail("tile sets must be nonempty");
  for (auto [r, c] : g.out_tiles) {
    if (!is_pow2(r) || !is_pow2(c)) fail("tile dims must be powers of two");
  }
  for (Tokens k : g.red_tiles) {
    if (!is_pow2(k)) fail("tile dims must be powers of two");
  }
  if (!g.has_tile(g.optimal_tile)) fail("optimal_tile " + g.optimal_tile.key() + " not in tile sets");
  for (const auto& t : g.tile_configs()) {
    auto it = g.gemm_rate.find(t);
    if (it == g.gemm_rate.end()) fail("missing gemm_rate for " + t.key());
    if (!(it->second > 0)) fail("gemm_rate must be > 0 for " + t.key());
  }
  if (!is_pow2(g.gemv_tile.row) || !is_pow2(g.gemv_tile.col)) fail("gemv tile dims must be powers of two");
  auto gv = g.gemv_rate.find(g.gemv_tile);
  if (gv == g.gemv_rate.end() || !(gv->second > 0)) fail("missing gemv_rate for " + g.gemv_tile.key());
  if (!(g.nonlinear_rate > 0)) fail("nonlinear_rate must be > 0");
  if (g.kv_token_capacity < 1) fail("kv_token_capacity must be >= 1");

  const auto& o = g.optimal_tile;
  const double best = g.gemm_rate.at(o) * double(o.row * o.col * o.red);
  for (const auto& t : g.tile_configs()) {
    if (g.gemm_rate.at(t) * double(t.row * t.col * t.red) > best * (1 + 1e-12)) {
      fail("optimal_tile " + o.key() + " is beaten by " + t.key());
    }
  }
}

// ---- kernel times ----

inline double gemm_time(Tokens d_row, Tokens d_col, Tokens d_red, const TileConfig& tile,
                        const GpuSpec& g) {
  if (d_row < 1 || d_col < 1 || d_red < 1) throw std::invalid_argument("gemm dims must be >= 1");
  const double mu = g.gemm_rate_for(tile);
  const double pairs = double(ceil_div(d_row, tile.row)) * double(ceil_div(d_col, tile.col)) *
                       double(ceil_div(d_red, tile.red));
  return pairs / (double(g.sm_count) * mu);
}

inline double gemv_time(Tokens d_row, Tokens d_col, const GemvTile& tile, const GpuSpec& g) {
  if (d_row < 1 || d_col < 1) throw std::invalid_argument("gemv dims must be >= 1");
  const double mu = g.gemv_rate_for(tile);
  const double pairs = double(ceil_div(d_row, tile.row)) * double(ceil_div(d_col, tile.col));
  return pairs / (double(g.sm_count) * mu);
}

// Effective tokens-per-column-tile rate of the model's linear layers.
// A direct lin_rate is taken as the rate at the optimal tile; other tiles scale with
// s*mu*t_row*t_red exactly as the derived form does.
inline double linear_rate(const TileConfig& tile, const ModelSpec& m, const GpuSpec& g) {
  const double mu = g.gemm_rate_for(tile);
  if (m.lin_rate) {
    if (tile == g.optimal_tile) return *m.lin_rate;
    const auto& o = g.optimal_tile;
    const double mu_o = g.gemm_rate_for(o);
    return *m.lin_rate * (mu * double(tile.row * tile.red)) / (mu_o * double(o.row * o.red));
  }
  if (!m.has_linear_dims()) throw ConfigError("model: lin_rate or d_model/d_ff/d_out required");
  const double n = double(m.n_layers), d = double(m.d_attn), dx = double(m.d_model),
               dff = double(m.d_ff), dout = double(m.d_out);
  const double r = double(tile.red), c = double(tile.row);
  const double work = 3 * n * (dx / r) * (d / c) + n * (d / r) * (dff / c) +
                      n * (dff / r) * (dx / c) + (dx / r) * (dout / c);
  return double(g.sm_count) * mu / work;
}

inline double linear_time(Tokens tau, const TileConfig& tile, const ModelSpec& m,
                          const GpuSpec& g) {
  if (tau < 0) throw std::invalid_argument("negative token count");
  if (tau == 0) return 0.0;
  return double(ceil_div(tau, tile.col)) / linear_rate(tile, m, g);
}

// Per-layer decode self-attention for token index i, on the fixed GeMV tile.
inline double decode_sa_time(Tokens i, const ModelSpec& m, const GpuSpec& g) {
  if (i < 1) throw std::invalid_argument("token index must be >= 1");
  const auto& t = g.gemv_tile;
  const double mu = g.gemv_rate_for(t);
  const double d = double(m.d_attn);
  return ((d / double(t.col)) * double(ceil_div(i, t.row)) +
          double(ceil_div(i, t.col)) * (d / double(t.row))) /
         mu;
}

// Sum of decode_sa_time over i in [lo, hi], closed form per ceiling staircase.
inline double decode_sa_sum(Tokens lo, Tokens hi, const ModelSpec& m, const GpuSpec& g) {
  if (hi < lo) return 0.0;
  auto stair = [](Tokens n, Tokens t) -> double {  // sum_{i=1..n} ceil(i/t)
    if (n <= 0) return 0.0;
    const Tokens q = n / t, rem = n % t;
    return double(t) * double(q) * double(q + 1) / 2.0 + double(rem) * double(q + 1);
  };
  const auto& t = g.gemv_tile;
  const double mu = g.gemv_rate_for(t);
  const double d = double(m.d_attn);
  const double rows = stair(hi, t.row) - stair(lo - 1, t.row);
  const double cols = stair(hi, t.col) - stair(lo - 1, t.col);
  return ((d / double(t.col)) * rows + (d / double(t.row)) * cols) / mu;
}

// All layers of prefill self-attention for chunk [i, i+c-1].
inline double prefill_sa_time(Tokens i, Tokens c, const TileConfig& tile, const ModelSpec& m,
                              const GpuSpec& g) {
  if (i < 1 || c < 1) throw std::invalid_argument("prefill chunk needs i >= 1, c >= 1");
  const double mu = g.gemm_rate_for(tile);
  const Tokens end = i + c - 1;
  const double d = double(m.d_attn);
  const double qk = double(ceil_div(end, tile.row)) * double(ceil_div(c, tile.col)) *
                    (d / double(tile.red));
  const double pv = (d / double(tile.row)) * double(ceil_div(c, tile.col)) *
                    double(ceil_div(end, tile.red));
  return double(m.n_layers) / (double(g.sm_count) * mu) * (qk + pv);
}

// ---- batches ----

enum class IterationKind : std::uint8_t { kPrefill, kDecode };

// PI(R, index, chunk) or DI(R, index); chunk is 1 for decodes.
struct Iteration {
  IterationKind kind = IterationKind::kDecode;
  RequestId request = 0;
  Tokens index = 1;
  Tokens chunk = 1;

  static Iteration prefill(RequestId id, Tokens i, Tokens c) {
    return {IterationKind::kPrefill, id, i, c};
  }
  static Iteration decode(RequestId id, Tokens i) { return {IterationKind::kDecode, id, i, 1}; }
  bool is_prefill() const { return kind == IterationKind::kPrefill; }
  Tokens tokens() const { return chunk; }
  bool operator==(const Iteration&) const = default;
};

struct BatchPlan {
  std::vector<Iteration> items;
  TileConfig tile;

  bool empty() const { return items.empty(); }
  Tokens token_count() const {
    Tokens t = 0;
    for (const auto& it : items) t += it.tokens();
    return t;
  }
  std::int64_t prefill_count() const {
    return std::count_if(items.begin(), items.end(), [](const auto& x) { return x.is_prefill(); });
  }
  std::int64_t decode_count() const { return std::int64_t(items.size()) - prefill_count(); }
};

inline double batch_time(const BatchPlan& plan, const ModelSpec& m, const GpuSpec& g) {
  if (plan.empty()) return 0.0;
  const Tokens tau = plan.token_count();
  double decode_sa = 0.0, prefill_sa = 0.0;
  for (const auto& it : plan.items) {
    if (it.is_prefill()) {
      prefill_sa += prefill_sa_time(it.index, it.chunk, plan.tile, m, g);
    } else {
      decode_sa += decode_sa_time(it.index, m, g);
    }
  }
  return linear_time(tau, plan.tile, m, g) + double(tau) / g.nonlinear_rate +
         double(m.n_layers) * decode_sa + prefill_sa;
}

// Dimension checks plus a spot check that GeMV never beats stacked GeMM.
// Returns warnings; throws ConfigError on hard failures.
inline std::vector<std::string> validate(const ModelSpec& m, const GpuSpec& g) {
  std::vector<std::string> warnings;
  auto fail = [](const std::string& s) { throw ConfigError("model: " + s); };
  if (m.n_layers < 1 || m.d_attn < 1) fail("n_layers and d_attn must be >= 1");
  if (m.lin_rate && !(*m.lin_rate > 0)) fail("lin_rate must be > 0");
  if (!m.lin_rate && !m.has_linear_dims()) fail("need lin_rate or d_model, d_ff, d_out");
  if (m.lin_rate && m.has_linear_dims()) {
    warnings.push_back("model: both lin_rate and linear dims given; using lin_rate");
  }
  std::vector<Tokens> tiles{g.gemv_tile.row, g.gemv_tile.col};
  for (auto [r, c] : g.out_tiles) {
    tiles.push_back(r);
    tiles.push_back(c);
  }
  for (Tokens k : g.red_tiles) tiles.push_back(k);
  std::vector<std::pair<const char*, Tokens>> dims{{"d_attn", m.d_attn}};
  if (!m.lin_rate) {
    dims.insert(dims.end(), {{"d_model", m.d_model}, {"d_ff", m.d_ff}, {"d_out", m.d_out}});
  }
  for (auto [name, v] : dims) {
    for (Tokens t : tiles) {
      if (v % t != 0) {
        fail(std::string(name) + "=" + std::to_string(v) + " not divisible by tile dim " +
             std::to_string(t));
      }
    }
  }
  const Tokens grid[] = {1, 2, 3, 7, 16, 33, 64, 100, 128, 255, 512, 1024};
  for (Tokens r : grid) {
    for (Tokens c : grid) {
      for (Tokens k : grid) {
        const double gv = double(c) * gemv_time(r, k, g.gemv_tile, g);
        const double gm = gemm_time(r, c, k, g.optimal_tile, g);
        if (gv < gm * (1 - 1e-12)) {
          fail("gemv faster than stacked gemm at shape " + std::to_string(r) + "x" +
               std::to_string(c) + "x" + std::to_string(k));
        }
      }
    }
  }
  return warnings;
}

}  // namespace llmsched
