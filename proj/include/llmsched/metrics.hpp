// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmsched/csv.hpp"
#include "llmsched/engine.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {

inline std::optional<Seconds> ttft(const RequestRecord& r) {
  if (!r.first_token) return std::nullopt;
  return *r.first_token - r.arrival;
}

inline std::vector<Seconds> tbt_series(const RequestRecord& r) {
  std::vector<Seconds> out;
  for (std::size_t k = 1; k < r.emits.size(); ++k) out.push_back(r.emits[k] - r.emits[k - 1]);
  return out;
}

// Nearest rank: the ceil(p*n)-th smallest sample, p in (0, 1].
inline double percentile(std::span<const double> xs, double p) {
  if (xs.empty()) throw std::invalid_argument("percentile of empty sample");
  if (!(p > 0 && p <= 1)) throw std::invalid_argument("percentile p must be in (0, 1]");
  std::vector<double> v(xs.begin(), xs.end());
  auto k = std::size_t(std::ceil(p * double(v.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(k), v.end());
  return v[k];
}

struct SlopeFit {
  double slope = 0;
  double stderr_ = 0;
  std::int64_t samples = 0;
};

// Least-squares fit of pending count against time over samples in [t0, t1].
inline SlopeFit fit_queue_slope(std::span<const QueueSample> s, Seconds t0, Seconds t1) {
  double n = 0, mt = 0, mq = 0;
  for (const auto& x : s) {
    if (x.time < t0 || x.time > t1) continue;
    n += 1;
    mt += (x.time - mt) / n;
    mq += (double(x.pending) - mq) / n;
  }
  if (n < 2) throw std::invalid_argument("slope window holds fewer than 2 samples");
  double stt = 0, stq = 0;
  for (const auto& x : s) {
    if (x.time < t0 || x.time > t1) continue;
    stt += (x.time - mt) * (x.time - mt);
    stq += (x.time - mt) * (double(x.pending) - mq);
  }
  if (stt == 0) throw std::invalid_argument("slope window has zero time extent");
  SlopeFit f;
  f.slope = stq / stt;
  f.samples = std::int64_t(n);
  if (n > 2) {
    double sse = 0;
    for (const auto& x : s) {
      if (x.time < t0 || x.time > t1) continue;
      const double e = double(x.pending) - mq - f.slope * (x.time - mt);
      sse += e * e;
    }
    f.stderr_ = std::sqrt(sse / (n - 2) / stt);
  }
  return f;
}

inline double stability_slope(std::span<const QueueSample> s, Seconds t0, Seconds t1) {
  return fit_queue_slope(s, t0, t1).slope;
}

// Number of times the series drops to zero from a positive value.
inline std::int64_t returns_to_zero(std::span<const QueueSample> s) {
  std::int64_t n = 0;
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k].pending == 0 && s[k - 1].pending > 0) ++n;
  }
  return n;
}

struct ClassAggregate {
  std::string name;
  std::int64_t requests = 0;
  std::int64_t censored = 0;
  std::int64_t tbt_samples = 0;
  double ttft_median = std::numeric_limits<double>::quiet_NaN();
  double ttft_mean = std::numeric_limits<double>::quiet_NaN();
  double tbt_p99 = std::numeric_limits<double>::quiet_NaN();
  double viol_rate = std::numeric_limits<double>::quiet_NaN();
};

struct LatencyAggregate {
  std::vector<ClassAggregate> classes;
  ClassAggregate all;
  double throughput = 0;
  double queue_slope = std::numeric_limits<double>::quiet_NaN();
  std::int64_t completed = 0;
  std::int64_t censored = 0;
  Tokens peak_kv = 0;
  Seconds horizon = 0;
};

struct AggregateOptions {
  double warmup_frac = 0.1;
};

inline LatencyAggregate aggregate(const SimResult& res, const std::vector<SloClass>& classes,
                                  const AggregateOptions& opt = {}) {
  LatencyAggregate a;
  a.horizon = res.end_time;
  a.peak_kv = res.peak_kv;
  const Seconds cut = opt.warmup_frac * res.end_time;
  struct Bucket {
    std::vector<double> ttft, tbt;
    std::int64_t viol = 0, requests = 0, censored = 0;
  };
  std::vector<Bucket> b(classes.size() + 1);
  Bucket& all = b.back();
  for (const auto& r : res.requests) {
    if (r.completion) ++a.completed;
    if (!r.first_token) ++a.censored;
    if (r.arrival < cut) continue;
    const Seconds slo = classes.at(std::size_t(r.class_id)).tbt_slo;
    for (Bucket* k : {&b[std::size_t(r.class_id)], &all}) {
      ++k->requests;
      if (auto t = ttft(r)) {
        k->ttft.push_back(*t);
      } else {
        ++k->censored;
      }
      for (double g : tbt_series(r)) {
        k->tbt.push_back(g);
        if (g > slo) ++k->viol;
      }
    }
  }
  auto fill = [](const Bucket& k, ClassAggregate& c) {
    c.requests = k.requests;
    c.censored = k.censored;
    c.tbt_samples = std::int64_t(k.tbt.size());
    if (!k.ttft.empty()) {
      c.ttft_median = percentile(k.ttft, 0.5);
      double s = 0;
      for (double x : k.ttft) s += x;
      c.ttft_mean = s / double(k.ttft.size());
    }
    if (!k.tbt.empty()) {
      c.tbt_p99 = percentile(k.tbt, 0.99);
      c.viol_rate = double(k.viol) / double(k.tbt.size());
    }
  };
  for (std::size_t c = 0; c < classes.size(); ++c) {
    ClassAggregate ca;
    ca.name = classes[c].name;
    fill(b[c], ca);
    a.classes.push_back(ca);
  }
  a.all.name = "all";
  fill(all, a.all);
  if (res.end_time > 0) a.throughput = double(a.completed) / res.end_time;
  try {
    a.queue_slope = stability_slope(res.queue, 0, res.end_time);
  } catch (const std::invalid_argument&) {
    a.queue_slope = 0;
  }
  return a;
}

inline constexpr const char* kMetricsCsvHeader =
    "run_id,policy,lambda,class,ttft_median_s,ttft_mean_s,tbt_p99_s,viol_rate,throughput_rps,"
    "queue_slope";

inline std::string metrics_row(const std::string& run_id, const std::string& policy,
                               double lambda, const ClassAggregate& c, double throughput,
                               double slope) {
  std::ostringstream os;
  os << run_id << ',' << policy << ',' << csv::format_double(lambda) << ',' << c.name << ','
     << csv::format_double(c.ttft_median) << ',' << csv::format_double(c.ttft_mean) << ','
     << csv::format_double(c.tbt_p99) << ',' << csv::format_double(c.viol_rate) << ','
     << csv::format_double(throughput) << ',' << csv::format_double(slope);
  return os.str();
}

inline std::string to_text(const LatencyAggregate& a) {
  std::ostringstream os;
  os << "horizon_s=" << csv::format_double(a.horizon) << '\n'
     << "completed=" << a.completed << '\n'
     << "censored=" << a.censored << '\n'
     << "throughput_rps=" << csv::format_double(a.throughput) << '\n'
     << "queue_slope=" << csv::format_double(a.queue_slope) << '\n'
     << "peak_kv_tokens=" << a.peak_kv << '\n';
  auto cls = [&](const ClassAggregate& c) {
    const std::string p = "class." + c.name + ".";
    os << p << "requests=" << c.requests << '\n'
       << p << "censored=" << c.censored << '\n'
       << p << "ttft_median_s=" << csv::format_double(c.ttft_median) << '\n'
       << p << "ttft_mean_s=" << csv::format_double(c.ttft_mean) << '\n'
       << p << "tbt_p99_s=" << csv::format_double(c.tbt_p99) << '\n'
       << p << "viol_rate=" << csv::format_double(c.viol_rate) << '\n';
  };
  for (const auto& c : a.classes) cls(c);
  cls(a.all);
  return os.str();
}

}  // namespace llmsched
