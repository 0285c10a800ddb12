// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "llmsched/errors.hpp"
#include "llmsched/workload.hpp"

namespace llmsched {
namespace {

LengthDistribution fixed(Tokens p, Tokens d) {
  LengthDistribution dist;
  dist.kind = LengthKind::kDeterministic;
  dist.prompt_len = p;
  dist.output_len = d;
  return dist;
}

double nearest_rank(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return v[std::size_t(std::ceil(p * double(v.size()))) - 1];
}

TEST(RoundToLcm, Examples) {
  EXPECT_EQ(round_to_lcm(1, 8), 8);
  EXPECT_EQ(round_to_lcm(16, 8), 16);
  EXPECT_EQ(round_to_lcm(17, 8), 24);
  EXPECT_EQ(round_to_lcm(17, 8, 20), 20);
}

TEST(GenerateTrace, ZeroRateIsEmpty) {
  EXPECT_TRUE(generate_trace(1, 100, 0.0, fixed(2, 1), paying_free_classes()).empty());
}

TEST(GenerateTrace, PoissonCountWithinThreeSigma) {
  const auto t = generate_trace(3, 1e5, 1.0, fixed(2, 1), paying_free_classes());
  EXPECT_NEAR(double(t.size()), 1e5, 3 * std::sqrt(1e5));
}

TEST(GenerateTrace, StrictlyIncreasingAndDeterministic) {
  const auto a = generate_trace(9, 1000, 2.0, fixed(4, 3), paying_free_classes());
  const auto b = generate_trace(9, 1000, 2.0, fixed(4, 3), paying_free_classes());
  const auto c = generate_trace(10, 1000, 2.0, fixed(4, 3), paying_free_classes());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (std::size_t k = 1; k < a.size(); ++k) ASSERT_LT(a[k - 1].arrival_time, a[k].arrival_time);
  for (const auto& r : a) {
    EXPECT_EQ(r.prompt_len, 4);
    EXPECT_EQ(r.output_len, 3);
    EXPECT_GE(r.arrival_time, 0);
    EXPECT_LT(r.arrival_time, 1000);
  }
}

TEST(GenerateTrace, InterArrivalMeanMatchesRate) {
  const auto t = generate_trace(5, 2e4, 0.5, fixed(2, 1), paying_free_classes());
  const double mean = t.back().arrival_time / double(t.size());
  // exponential(0.5): mean 2, sd 2
  EXPECT_NEAR(mean, 2.0, 3 * 2.0 / std::sqrt(double(t.size())));
}

TEST(GenerateTrace, ClassFrequencyWithinBinomialBound) {
  const auto classes = paying_free_classes(0.05);
  const auto t = generate_trace(11, 4e4, 1.0, fixed(2, 1), classes);
  ASSERT_GE(t.size(), 10000u);
  const double n = double(t.size());
  const double paying = double(std::count_if(t.begin(), t.end(), [](const Request& r) {
    return r.class_id == 0;
  }));
  EXPECT_NEAR(paying, 0.05 * n, 3 * std::sqrt(n * 0.05 * 0.95));
  for (const auto& r : t) EXPECT_EQ(r.tbt_slo, classes[std::size_t(r.class_id)].tbt_slo);
}

TEST(LengthSampler, LogNormalPresetMarginalsWithinTwoPercent) {
  const LengthDistribution d = table1_distribution();
  LengthSampler s(d);
  Rng rng(2024);
  std::vector<double> p, o;
  for (int k = 0; k < 100000; ++k) {
    auto [a, b] = s.sample(rng);
    ASSERT_LE(a, d.lp_max);
    ASSERT_LE(b, d.ld_max);
    ASSERT_LE(a + b, d.max_total_len);
    ASSERT_GE(a, 1);
    ASSERT_GE(b, 1);
    p.push_back(double(a));
    o.push_back(double(b));
  }
  EXPECT_NEAR(nearest_rank(p, 0.5), 1730, 0.02 * 1730);
  EXPECT_NEAR(nearest_rank(p, 0.9), 5696, 0.02 * 5696);
  EXPECT_NEAR(nearest_rank(o, 0.5), 415, 0.02 * 415);
  EXPECT_NEAR(nearest_rank(o, 0.9), 834, 0.02 * 834);
}

TEST(LengthSampler, RoundsUpInAssumption3Mode) {
  LengthDistribution d = table1_distribution();
  d.round_to_lcm = true;
  d.t_lcm = 16;
  LengthSampler s(d);
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    auto [p, o] = s.sample(rng);
    ASSERT_TRUE(p % 16 == 0 || p == d.lp_max) << p;
  }
}

TEST(LengthSampler, EmpiricalUsesOnlyGivenPoints) {
  LengthDistribution d;
  d.kind = LengthKind::kEmpirical;
  d.samples = {{2, 1}, {4, 3}, {8, 8}};
  LengthSampler s(d);
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    auto pt = s.sample(rng);
    ASSERT_NE(std::find(d.samples.begin(), d.samples.end(), pt), d.samples.end());
  }
}

TEST(LengthSampler, BadParametersRaiseFitError) {
  LengthDistribution d = table1_distribution();
  d.prompt_p90 = 1000;  // below median
  EXPECT_THROW(LengthSampler{d}, FitError);
  d = table1_distribution();
  d.lp_max = 4000;  // p90 above the cap
  EXPECT_THROW(LengthSampler{d}, FitError);
  LengthDistribution e;
  e.kind = LengthKind::kEmpirical;
  EXPECT_THROW(LengthSampler{e}, FitError);
}

TEST(Classes, Validation) {
  EXPECT_NO_THROW(validate_classes(paying_free_classes()));
  EXPECT_THROW(validate_classes({{"a", 0.1, 0.5}}), ConfigError);
  EXPECT_THROW(validate_classes({{"a", 0.0, 1.0}}), ConfigError);
  EXPECT_THROW(validate_classes({}), ConfigError);
}

TEST(TraceIo, RoundTrip) {
  const auto classes = paying_free_classes();
  const auto t = generate_trace(17, 100, 1.0, table1_distribution(), classes);
  ASSERT_GE(t.size(), 50u);
  std::vector<Request> first(t.begin(), t.begin() + 100 < t.end() ? t.begin() + 100 : t.end());
  std::stringstream ss;
  save_trace(ss, first, classes);
  EXPECT_EQ(load_trace(ss, classes), first);
}

TEST(TraceIo, HeaderOnlyIsEmpty) {
  std::stringstream ss("id,arrival_time_s,prompt_len,output_len,class\n");
  EXPECT_TRUE(load_trace(ss, paying_free_classes()).empty());
}

TEST(TraceIo, DecreasingArrivalNamesRow) {
  std::stringstream ss;
  ss << "id,arrival_time_s,prompt_len,output_len,class\n";
  for (int k = 1; k <= 8; ++k) {
    const double t = k == 7 ? 0.5 : double(k);
    ss << k << ',' << t << ",4,2,free\n";
  }
  try {
    load_trace(ss, paying_free_classes());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.row(), 7);
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos);
  }
}

TEST(TraceIo, MalformedRowIsParseError) {
  std::stringstream ss;
  ss << "id,arrival_time_s,prompt_len,output_len,class\n0,0.1,4,2,free\n1,abc,4,2,free\n";
  try {
    load_trace(ss, paying_free_classes());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2);
  }
  std::stringstream bad_class("id,arrival_time_s,prompt_len,output_len,class\n0,0.1,4,2,gold\n");
  EXPECT_THROW(load_trace(bad_class, paying_free_classes()), ParseError);
}

TEST(TraceIo, TimesCarrySixDecimals) {
  std::stringstream ss;
  save_trace(ss, {{0, 1.0, 2, 1, 1, 0.5}}, paying_free_classes());
  EXPECT_NE(ss.str().find("1.000000"), std::string::npos);
}

}  // namespace
}  // namespace llmsched
