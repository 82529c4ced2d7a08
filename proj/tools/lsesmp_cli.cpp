// SPDX-License-Identifier: Apache-2.0
// Command-line front end for the LSE-SMP simulator.
#include "lsesmp/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace lsesmp;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int trials = 0;
  int threads = 0;
  bool paper_scale = false;
};

SweepConfig resolve(const Overrides& o, CLI::App& sub) {
  SweepConfig cfg = o.config.empty() ? SweepConfig{} : load_config(o.config);
  if (o.paper_scale) cfg.use_paper_scale();
  if (sub.count("--seed")) cfg.seed = o.seed;
  if (sub.count("--trials")) cfg.trials = o.trials;
  if (sub.count("--threads")) cfg.threads = o.threads;
  if (sub.count("--out")) cfg.out = o.out;
  return cfg;
}

template <typename Writer>
void emit(const SweepConfig& cfg, Writer&& write) {
  if (cfg.out.empty() || cfg.out == "-") {
    write(std::cout);
    return;
  }
  auto f = open_output(cfg.out);
  write(f);
  if (!f) throw ConfigError("failed writing '" + cfg.out + "'");
}

std::string keys_help() {
  std::string s = "Config file: one `key = value` per line, `#` starts a comment.\nKeys:\n";
  for (const auto& [k, h] : config_keys()) s += "  " + k + std::string(k.size() < 18 ? 18 - k.size() : 1, ' ') + h + "\n";
  s += "Exit codes: 0 ok, 1 config error, 2 numeric abort.\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSE-SMP sparse channel estimation simulator"};
  app.footer(keys_help());
  app.require_subcommand(1);

  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key-value config file");
    sub->add_option("--seed", o.seed, "override the base seed");
    sub->add_option("--trials", o.trials, "override the trial count");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_option("--out", o.out, "output CSV path ('-' for stdout)");
    sub->add_flag("--paper-scale", o.paper_scale, "use N_t=32, N_r=64, N_s=32, T=64");
    sub->footer(keys_help());
  };
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo NMSE sweep");
  auto* exitc = app.add_subcommand("exit-chart", "EXIT transfer curves and fixed points");
  auto* crlb = app.add_subcommand("crlb", "CRLB traces versus SNR");
  auto* demo = app.add_subcommand("demo-beamspace", "beamspace sparsity of geometric channels");
  auto* val = app.add_subcommand("validate", "run the built-in property checks");
  for (auto* s : {sweep, exitc, crlb, demo, val}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*sweep) {
      auto cfg = resolve(o, *sweep);
      if (cfg.sweep == SweepKind::exit) throw ConfigError("sweep = exit belongs to the exit-chart subcommand");
      cfg.validate();
      if (!cfg.out.empty() && cfg.out != "-") open_output(cfg.out);  // fail before computing
      const auto rows = run_sweep(cfg, &std::cerr);
      emit(cfg, [&](std::ostream& os) { write_sweep_csv(os, rows); });
    } else if (*exitc) {
      auto cfg = resolve(o, *exitc);
      cfg.sweep = SweepKind::exit;
      if (cfg.sweep_values.empty()) cfg.sweep_values = {double(cfg.dims.t_len)};
      const auto rows = run_exit(cfg);
      emit(cfg, [&](std::ostream& os) { write_exit_csv(os, rows); });
    } else if (*crlb) {
      auto cfg = resolve(o, *crlb);
      const auto rows = run_crlb(cfg, &std::cerr);
      emit(cfg, [&](std::ostream& os) { write_crlb_csv(os, rows); });
    } else if (*demo) {
      auto cfg = resolve(o, *demo);
      const auto rows = beamspace_demo(cfg.dims, cfg.seed);
      emit(cfg, [&](std::ostream& os) { write_beamspace_csv(os, rows); });
    } else if (*val) {
      auto cfg = resolve(o, *val);
      bool all = true;
      for (const auto& c : run_validation(cfg.seed)) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        all = all && c.pass;
      }
      return all ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
