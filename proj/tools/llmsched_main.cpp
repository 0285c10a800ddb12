// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "llmsched/commands.hpp"
#include "llmsched/config.hpp"

namespace {

using llmsched::KeyValues;

struct KeyOptions {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> sets;
};

// Mirrors every config key as a flag on `app`.
void add_key_options(CLI::App* app, KeyOptions& ko) {
  for (const auto& k : llmsched::config_keys()) {
    const std::string full = std::string(k.section) + "." + k.key;
    const std::string help = std::string(k.help) + " [" + k.type + ", " + full + ", default '" +
                             k.fallback + "']";
    ko.options[full] = app->add_option(std::string("--") + k.flag, ko.values[full], help)
                           ->group(k.section);
  }
  app->add_option("--set", ko.sets, "override any key: section.key=value (repeatable)");
}

KeyValues overrides(const KeyOptions& ko) {
  KeyValues kv;
  for (const auto& [full, opt] : ko.options) {
    if (opt->count() > 0) kv[full] = ko.values.at(full);
  }
  for (const auto& s : ko.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw llmsched::ConfigError("--set expects section.key=value");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"llmsched: LLM inference serving simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("-c,--config", config_path,
                 std::string("INI config file (default: $") + llmsched::kConfigEnvVar + ")");

  KeyOptions gen_keys, run_keys, sweep_keys, bounds_keys;
  std::string trace_out = "-";
  std::string run_dir = "out", sweep_dir = "sweep_out", bounds_csv;
  bool assert_bounds = false, table1 = false;

  auto* gen = app.add_subcommand("gen-trace", "generate a Poisson trace");
  add_key_options(gen, gen_keys);
  gen->add_option("-o,--out", trace_out, "trace CSV path ('-' for stdout)");
  gen->add_flag("--table1", table1, "use the log-normal length preset (prompt 1730/5696, decode 415/834 median/p90)");

  auto* runc = app.add_subcommand("run", "simulate one configuration");
  add_key_options(runc, run_keys);
  runc->add_option("-o,--out-dir", run_dir, "output directory");
  runc->add_flag("--assert-bounds", assert_bounds, "check the analytic bounds; exit 4 on violation");

  auto* sweep = app.add_subcommand("sweep", "run a policy x lambda x seed grid");
  add_key_options(sweep, sweep_keys);
  sweep->add_option("-o,--out-dir", sweep_dir, "output directory");

  auto* bounds = app.add_subcommand("bounds", "capacity report for the configured load");
  add_key_options(bounds, bounds_keys);
  bounds->add_option("--csv", bounds_csv, "append the report as a CSV row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : llmsched::exit_code::kConfig;
  }

  auto build = [&](const KeyOptions& ko, KeyValues extra, KeyValues& effective) {
    KeyValues ov = overrides(ko);
    for (const auto& [k, v] : extra) ov.emplace(k, v);
    effective = llmsched::merge_config(llmsched::load_config_file(config_path), ov);
    return llmsched::build_config(effective);
  };

  return llmsched::guarded(
      [&]() -> int {
        KeyValues effective;
        if (*gen) {
          KeyValues extra;
          if (table1) extra["workload.dist"] = "table1";
          auto e = build(gen_keys, extra, effective);
          return llmsched::cmd_gen_trace(e, trace_out, std::cout);
        }
        if (*runc) {
          auto e = build(run_keys, {}, effective);
          return llmsched::cmd_run(e, effective, run_dir, assert_bounds, std::cout, std::cerr);
        }
        if (*sweep) {
          auto e = build(sweep_keys, {}, effective);
          return llmsched::cmd_sweep(e, sweep_dir, std::cout, std::cerr);
        }
        auto e = build(bounds_keys, {}, effective);
        return llmsched::cmd_bounds(e, bounds_csv, std::cout);
      },
      std::cerr);
}
