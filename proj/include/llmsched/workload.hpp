// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "llmsched/cost_model.hpp"
#include "llmsched/csv.hpp"
#include "llmsched/errors.hpp"

namespace llmsched {

using Rng = std::mt19937_64;

struct SloClass {
  std::string name;
  Seconds tbt_slo = std::numeric_limits<double>::infinity();
  double probability = 1.0;
};

struct Request {
  RequestId id = 0;
  Seconds arrival_time = 0;
  Tokens prompt_len = 1;
  Tokens output_len = 1;
  int class_id = 0;
  Seconds tbt_slo = std::numeric_limits<double>::infinity();

  bool operator==(const Request&) const = default;
};

enum class LengthKind { kDeterministic, kEmpirical, kLogNormal };

struct LengthDistribution {
  LengthKind kind = LengthKind::kDeterministic;
  // deterministic
  Tokens prompt_len = 1;
  Tokens output_len = 1;
  // empirical joint (prompt, output) points, equally weighted
  std::vector<std::pair<Tokens, Tokens>> samples;
  // truncated log-normal targets
  double prompt_median = 0, prompt_p90 = 0;
  double decode_median = 0, decode_p90 = 0;

  Tokens lp_max = 8191;
  Tokens ld_max = 4096;
  Tokens max_total_len = 8192;
  bool round_to_lcm = false;
  Tokens t_lcm = 1;
};

inline LengthDistribution table1_distribution() {
  LengthDistribution d;
  d.kind = LengthKind::kLogNormal;
  d.prompt_median = 1730;
  d.prompt_p90 = 5696;
  d.decode_median = 415;
  d.decode_p90 = 834;
  return d;
}

inline std::vector<SloClass> paying_free_classes(double paying_frac = 0.05,
                                                 Seconds paying_tbt = 0.1,
                                                 Seconds free_tbt = 0.5) {
  return {{"paying", paying_tbt, paying_frac}, {"free", free_tbt, 1.0 - paying_frac}};
}

inline Tokens round_to_lcm(Tokens prompt_len, Tokens t_lcm,
                           Tokens cap = std::numeric_limits<Tokens>::max()) {
  const Tokens up = ceil_div(prompt_len, t_lcm) * t_lcm;
  return std::min(up, cap);
}

// Largest (prompt, output) lengths the distribution can produce.
inline std::pair<Tokens, Tokens> support_caps(const LengthDistribution& d) {
  auto rp = [&](Tokens p) { return d.round_to_lcm ? round_to_lcm(p, d.t_lcm, d.lp_max) : p; };
  switch (d.kind) {
    case LengthKind::kDeterministic:
      return {rp(d.prompt_len), d.output_len};
    case LengthKind::kEmpirical: {
      Tokens lp = 0, ld = 0;
      for (const auto& [p, o] : d.samples) {
        lp = std::max(lp, rp(p));
        ld = std::max(ld, o);
      }
      return {lp, ld};
    }
    case LengthKind::kLogNormal:
      break;
  }
  return {d.lp_max, d.ld_max};
}

namespace detail {

// Nearest-rank quantile of an unsorted sample (mutates order).
inline double quantile(std::vector<double>& v, double p) {
  auto k = std::size_t(std::ceil(p * double(v.size())));
  k = std::clamp<std::size_t>(k, 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(k), v.end());
  return v[k];
}

constexpr double kZ90 = 1.2815515655446004;

}  // namespace detail

// Draws (prompt_len, output_len) pairs. For the log-normal family the underlying
// parameters are calibrated so that the capped, rounded samples hit the targets.
class LengthSampler {
 public:
  explicit LengthSampler(LengthDistribution dist) : dist_(std::move(dist)) {
    check();
    if (dist_.kind == LengthKind::kLogNormal) calibrate();
  }

  const LengthDistribution& distribution() const { return dist_; }
  double prompt_mu() const { return mu_p_; }
  double prompt_sigma() const { return sig_p_; }
  double decode_mu() const { return mu_d_; }
  double decode_sigma() const { return sig_d_; }

  std::pair<Tokens, Tokens> sample(Rng& rng) const {
    switch (dist_.kind) {
      case LengthKind::kDeterministic:
        return {shape_prompt(dist_.prompt_len), dist_.output_len};
      case LengthKind::kEmpirical: {
        std::uniform_int_distribution<std::size_t> pick(0, dist_.samples.size() - 1);
        auto [p, o] = dist_.samples[pick(rng)];
        return {shape_prompt(p), o};
      }
      case LengthKind::kLogNormal:
        return draw_lognormal(rng, mu_p_, sig_p_, mu_d_, sig_d_);
    }
    return {1, 1};
  }

 private:
  Tokens shape_prompt(Tokens p) const {
    return dist_.round_to_lcm ? round_to_lcm(p, dist_.t_lcm, dist_.lp_max) : p;
  }

  void check() const {
    const auto& d = dist_;
    auto bad = [](const std::string& m) { throw FitError("length distribution: " + m); };
    if (d.lp_max < 1 || d.ld_max < 1) bad("caps must be >= 1");
    if (d.round_to_lcm && d.t_lcm < 1) bad("t_lcm must be >= 1");
    auto within = [&](Tokens p, Tokens o) {
      p = shape_prompt(p);
      return p >= 1 && o >= 1 && p <= d.lp_max && o <= d.ld_max && p + o <= d.max_total_len;
    };
    switch (d.kind) {
      case LengthKind::kDeterministic:
        if (!within(d.prompt_len, d.output_len)) bad("fixed lengths violate caps");
        break;
      case LengthKind::kEmpirical:
        if (d.samples.empty()) bad("empirical sample list is empty");
        for (auto [p, o] : d.samples) {
          if (!within(p, o)) {
            bad("sample (" + std::to_string(p) + "," + std::to_string(o) + ") violates caps");
          }
        }
        break;
      case LengthKind::kLogNormal:
        if (!(d.prompt_median >= 1 && d.prompt_p90 > d.prompt_median)) {
          bad("need 1 <= prompt_median < prompt_p90");
        }
        if (!(d.decode_median >= 1 && d.decode_p90 > d.decode_median)) {
          bad("need 1 <= decode_median < decode_p90");
        }
        if (d.prompt_p90 >= double(d.lp_max) || d.decode_p90 >= double(d.ld_max)) {
          bad("p90 targets must lie below the caps");
        }
        break;
    }
  }

  Tokens draw_marginal(Rng& rng, double mu, double sigma, Tokens cap, bool prompt) const {
    std::normal_distribution<double> z(0.0, 1.0);
    for (int tries = 0; tries < 100000; ++tries) {
      const double x = std::exp(mu + sigma * z(rng));
      if (!(x < double(cap) + 0.5)) continue;
      Tokens v = std::max<Tokens>(1, std::llround(x));
      if (v > cap) continue;
      return prompt ? shape_prompt(v) : v;
    }
    throw FitError("rejection sampling stalled: mu=" + std::to_string(mu) +
                   " sigma=" + std::to_string(sigma) + " cap=" + std::to_string(cap));
  }

  std::pair<Tokens, Tokens> draw_lognormal(Rng& rng, double mp, double sp, double md,
                                           double sd) const {
    for (int tries = 0; tries < 100000; ++tries) {
      Tokens p = draw_marginal(rng, mp, sp, dist_.lp_max, true);
      Tokens o = draw_marginal(rng, md, sd, dist_.ld_max, false);
      if (p + o <= dist_.max_total_len) return {p, o};
    }
    throw FitError("total-length cap rejects nearly all samples");
  }

  void calibrate() {
    const auto& d = dist_;
    mu_p_ = std::log(d.prompt_median);
    sig_p_ = std::log(d.prompt_p90 / d.prompt_median) / detail::kZ90;
    mu_d_ = std::log(d.decode_median);
    sig_d_ = std::log(d.decode_p90 / d.decode_median) / detail::kZ90;

    constexpr int kSamples = 200000;
    constexpr int kRounds = 40;
    double worst = 0;
    std::string diag;
    for (int round = 0; round < kRounds; ++round) {
      Rng rng(0x5eedf17ULL);
      std::vector<double> ps(kSamples), ds(kSamples);
      for (int k = 0; k < kSamples; ++k) {
        auto [p, o] = draw_lognormal(rng, mu_p_, sig_p_, mu_d_, sig_d_);
        ps[k] = double(p);
        ds[k] = double(o);
      }
      const double pm = detail::quantile(ps, 0.5), p9 = detail::quantile(ps, 0.9);
      const double dm = detail::quantile(ds, 0.5), d9 = detail::quantile(ds, 0.9);
      auto rel = [](double a, double b) { return std::abs(a - b) / b; };
      worst = std::max({rel(pm, d.prompt_median), rel(p9, d.prompt_p90),
                        rel(dm, d.decode_median), rel(d9, d.decode_p90)});
      std::ostringstream os;
      os << "prompt median/p90 " << pm << "/" << p9 << " decode median/p90 " << dm << "/" << d9;
      diag = os.str();
      if (worst <= 0.004) return;
      mu_p_ += std::log(d.prompt_median / pm);
      mu_d_ += std::log(d.decode_median / dm);
      if (p9 > pm) sig_p_ *= std::log(d.prompt_p90 / d.prompt_median) / std::log(p9 / pm);
      if (d9 > dm) sig_d_ *= std::log(d.decode_p90 / d.decode_median) / std::log(d9 / dm);
      if (!(sig_p_ > 0 && sig_p_ < 20 && sig_d_ > 0 && sig_d_ < 20)) break;
    }
    if (worst > 0.015) {
      throw FitError("log-normal fit did not converge (worst rel err " + std::to_string(worst) +
                     "): " + diag);
    }
  }

  LengthDistribution dist_;
  double mu_p_ = 0, sig_p_ = 0, mu_d_ = 0, sig_d_ = 0;
};

inline void validate_classes(const std::vector<SloClass>& classes) {
  if (classes.empty()) throw ConfigError("at least one SLO class required");
  double total = 0;
  for (const auto& c : classes) {
    if (!(c.tbt_slo > 0)) throw ConfigError("class " + c.name + ": tbt_slo must be > 0");
    if (!(c.probability >= 0)) throw ConfigError("class " + c.name + ": probability < 0");
    total += c.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("class probabilities must sum to 1");
}

inline std::vector<Request> generate_trace(std::uint64_t seed, Seconds horizon, double lambda,
                                           const LengthSampler& lengths,
                                           const std::vector<SloClass>& classes) {
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be > 0");
  validate_classes(classes);
  std::vector<Request> out;
  if (lambda == 0) return out;
  Rng rng(seed);
  std::exponential_distribution<double> gap(lambda);
  std::vector<double> weights;
  for (const auto& c : classes) weights.push_back(c.probability);
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  Seconds t = 0;
  while (true) {
    Seconds next = t + gap(rng);
    if (!out.empty() && next <= t) next = std::nextafter(t, horizon);
    if (next >= horizon) break;
    t = next;
    auto [p, o] = lengths.sample(rng);
    const int c = pick(rng);
    out.push_back({RequestId(out.size()), t, p, o, c, classes[c].tbt_slo});
  }
  return out;
}

inline std::vector<Request> generate_trace(std::uint64_t seed, Seconds horizon, double lambda,
                                           const LengthDistribution& dist,
                                           const std::vector<SloClass>& classes) {
  return generate_trace(seed, horizon, lambda, LengthSampler(dist), classes);
}

inline constexpr const char* kTraceHeader = "id,arrival_time_s,prompt_len,output_len,class";

inline void save_trace(std::ostream& os, const std::vector<Request>& trace,
                       const std::vector<SloClass>& classes) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace) {
    os << r.id << ',' << csv::format_time(r.arrival_time) << ',' << r.prompt_len << ','
       << r.output_len << ',' << classes.at(std::size_t(r.class_id)).name << '\n';
  }
}

inline void save_trace(const std::string& path, const std::vector<Request>& trace,
                       const std::vector<SloClass>& classes) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  save_trace(f, trace, classes);
}

inline std::vector<Request> load_trace(std::istream& is, const std::vector<SloClass>& classes) {
  std::string line;
  if (!std::getline(is, line)) return {};
  if (csv::trim(line) != kTraceHeader) throw ParseError(0, "bad header, expected " + std::string(kTraceHeader));
  std::vector<Request> out;
  std::int64_t row = 0;
  while (std::getline(is, line)) {
    if (csv::trim(line).empty()) continue;
    ++row;
    auto f = csv::split(csv::trim(line));
    if (f.size() != 5) throw ParseError(row, "expected 5 fields");
    auto id = csv::parse_number<RequestId>(f[0]);
    auto t = csv::parse_number<double>(f[1]);
    auto p = csv::parse_number<Tokens>(f[2]);
    auto o = csv::parse_number<Tokens>(f[3]);
    if (!id || !t || !p || !o) throw ParseError(row, "malformed number");
    if (*p < 1 || *o < 1) throw ParseError(row, "lengths must be >= 1");
    if (!(*t >= 0) || !std::isfinite(*t)) throw ParseError(row, "bad arrival time");
    auto name = csv::trim(f[4]);
    auto it = std::find_if(classes.begin(), classes.end(),
                           [&](const SloClass& c) { return c.name == name; });
    if (it == classes.end()) throw ParseError(row, "unknown class '" + std::string(name) + "'");
    if (!out.empty() && *t < out.back().arrival_time) {
      throw ValidationError(row, "arrival time decreases");
    }
    const int cid = int(it - classes.begin());
    out.push_back({*id, *t, *p, *o, cid, it->tbt_slo});
  }
  return out;
}

inline std::vector<Request> load_trace(const std::string& path,
                                       const std::vector<SloClass>& classes) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return load_trace(f, classes);
}

}  // namespace llmsched
