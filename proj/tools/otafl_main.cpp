#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otafl/channel.hpp"
#include "otafl/harness.hpp"
#include "otafl/sca.hpp"
#include "otafl/scenario.hpp"

namespace {

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw otafl::Error("cli: --set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string seed;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Config file (key = value lines)");
    app->add_option("--set", sets, "Override one config key, key=value (repeatable)");
    app->add_option("--seed", seed, "Master seed");
  }
  std::map<std::string, std::string> overrides() const {
    auto o = parse_sets(sets);
    if (!seed.empty()) o["seed"] = seed;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning over an active-STARS-assisted over-the-air uplink"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment and write CSV results");
  Common run_common;
  run_common.add(run);
  std::string manifest, baselines = "astars", data_mode, descent, sweep_q, sweep_lambda, out_dir = "out";
  std::string corollary_form, name = "run";
  int trials = 10, threads = 0;
  bool trace_ota = false, redraw = false;
  std::string sca_imax, sca_xi, sca_varpi, sca_restarts, noris_pen;
  run->add_option("--manifest", manifest, "Re-run from a manifest.txt written by an earlier run");
  run->add_option("--baseline", baselines, "Comma list of noisefree,astars,pstars,dualris,noris");
  run->add_option("--data-mode", data_mode, "set1|set2");
  run->add_option("--descent", descent, "batch|minibatch");
  run->add_option("--sweep-q", sweep_q, "Comma list of Q values");
  run->add_option("--sweep-lambda", sweep_lambda, "Comma list of lambda values");
  run->add_option("--trials", trials, "Monte-Carlo trials per curve");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--name", name, "Experiment name recorded in the manifest");
  run->add_option("--threads", threads, "Worker threads (0: all cores)");
  run->add_flag("--trace-ota", trace_ota, "Write ota_trace.csv");
  run->add_flag("--redraw-per-round", redraw, "Redraw fading every round");
  run->add_option("--sca.imax", sca_imax, "SCA iteration cap");
  run->add_option("--sca.xi", sca_xi, "SCA relative-change stop");
  run->add_option("--sca.varpi", sca_varpi, "SCA proximal weight");
  run->add_option("--sca.restarts", sca_restarts, "SCA random restarts");
  run->add_option("--noris.pen-db", noris_pen, "NoRIS penetration loss in dB");
  run->add_option("--corollary-form", corollary_form, "printed|series");

  // dump-channel
  auto* dump = app.add_subcommand("dump-channel", "Write one channel realization as CSV");
  Common dump_common;
  dump_common.add(dump);
  int dump_trial = 0;
  std::string dump_out;
  dump->add_option("--trial", dump_trial, "Trial index of the realization");
  dump->add_option("--out", dump_out, "Output file (default stdout)");

  // sca-trace
  auto* trace = app.add_subcommand("sca-trace", "Run the SCA optimizer on one draw and print iter,obj,rel_change");
  Common trace_common;
  trace_common.add(trace);
  int trace_trial = 0;
  std::string trace_baseline = "astars", trace_out;
  trace->add_option("--trial", trace_trial, "Trial index of the realization");
  trace->add_option("--baseline", trace_baseline, "astars|pstars|dualris|noris");
  trace->add_option("--out", trace_out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      otafl::ExperimentSpec spec;
      otafl::SystemConfig cfg;
      auto ov = run_common.overrides();
      if (!data_mode.empty()) ov["data.mode"] = data_mode;
      if (!descent.empty()) ov["descent"] = descent;
      if (redraw) ov["redraw_per_round"] = "true";
      if (!sca_imax.empty()) ov["sca.imax"] = sca_imax;
      if (!sca_xi.empty()) ov["sca.xi"] = sca_xi;
      if (!sca_varpi.empty()) ov["sca.varpi"] = sca_varpi;
      if (!sca_restarts.empty()) ov["sca.restarts"] = sca_restarts;
      if (!noris_pen.empty()) ov["noris.pen_db"] = noris_pen;
      if (!corollary_form.empty()) ov["bounds.corollary_form"] = corollary_form;
      if (!manifest.empty()) {
        std::tie(spec, cfg) = otafl::load_manifest(manifest, ov);
      } else {
        cfg = otafl::load_config(run_common.config, ov);
        spec.name = name;
        spec.baselines = otafl::parse_baseline_list(baselines);
        spec.trials = trials;
        spec.trace_ota = trace_ota;
        if (!sweep_q.empty() && !sweep_lambda.empty())
          throw otafl::Error("cli: --sweep-q and --sweep-lambda are exclusive");
        if (!sweep_q.empty()) {
          spec.sweep = otafl::SweepKind::kQ;
          spec.sweep_values = otafl::parse_double_list(sweep_q);
        } else if (!sweep_lambda.empty()) {
          spec.sweep = otafl::SweepKind::kLambda;
          spec.sweep_values = otafl::parse_double_list(sweep_lambda);
        }
      }
      spec.out_dir = out_dir;
      spec.threads = threads;
      const auto res = otafl::run(spec, cfg);
      for (const auto& row : res.summary) {
        std::cout << otafl::to_string(row.baseline);
        if (spec.sweep != otafl::SweepKind::kNone) std::cout << " " << row.sweep << "=" << row.sweep_value;
        std::cout << " acc=" << row.acc_mean << " +- " << row.acc_std << " loss=" << row.loss_mean
                  << " d=" << row.d_mean << " trials=" << row.trials_ok << "\n";
      }
      return 0;
    }

    if (*dump) {
      const auto cfg = otafl::load_config(dump_common.config, dump_common.overrides());
      auto rg = otafl::derive_stream(cfg.seed, {otafl::kTagGeometry, std::uint64_t(dump_trial), 0});
      const auto geo = otafl::place_users(cfg, rg);
      auto rc = otafl::derive_stream(cfg.seed, {otafl::kTagChannel, std::uint64_t(dump_trial), 0});
      const auto real = otafl::sample_channels(cfg, geo, rc);
      if (dump_out.empty()) {
        otafl::write_channel_csv(std::cout, real);
      } else {
        std::ofstream os(dump_out);
        if (!os) throw otafl::Error("cli: cannot write '" + dump_out + "'");
        otafl::write_channel_csv(os, real);
      }
      return 0;
    }

    if (*trace) {
      const auto base = otafl::load_config(trace_common.config, trace_common.overrides());
      const auto bs = otafl::apply_baseline(otafl::parse_baseline(trace_baseline), base);
      const auto& cfg = bs.cfg;
      const std::uint64_t tr = std::uint64_t(trace_trial);
      auto rg = otafl::derive_stream(cfg.seed, {otafl::kTagGeometry, tr, 0});
      const auto geo = otafl::place_users(cfg, rg);
      auto rp = otafl::derive_stream(cfg.seed, {otafl::kTagPartition, tr, 0});
      const auto da = otafl::assign_data(cfg, cfg.data_mode, rp);
      auto rc = otafl::derive_stream(cfg.seed, {otafl::kTagChannel, tr, 0});
      const auto real = otafl::sample_channels(cfg, geo, rc);
      auto rs = otafl::derive_stream(cfg.seed, {otafl::kTagSca, tr, 0});
      const auto stars0 = otafl::AstarsState::random(cfg, rs);
      const auto problem = otafl::make_problem(real, bs.link, da.K, cfg.gain_convention);
      const auto f0 = otafl::initial_beamformer(otafl::effective_channels(real, stars0, bs.link), da.K);
      auto settings = otafl::ScaSettings::from(cfg.sca);
      settings.optimize_theta = bs.optimize_theta;
      std::ofstream file;
      if (!trace_out.empty()) {
        file.open(trace_out);
        if (!file) throw otafl::Error("cli: cannot write '" + trace_out + "'");
      }
      std::ostream& os = trace_out.empty() ? std::cout : file;
      os << "restart,iter,obj,rel_change\n";
      os.precision(12);
      otafl::optimize(problem, stars0, f0, settings, rs, [&](const otafl::ScaIterate& it) {
        os << it.restart << "," << it.iter << "," << it.obj << "," << it.rel_change << "\n";
      });
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "otafl: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
