#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "otafl/bounds.hpp"
#include "otafl/channel.hpp"
#include "otafl/fl.hpp"
#include "otafl/sca.hpp"
#include "otafl/scenario.hpp"

namespace otafl {

enum class Baseline { kNoiseFree, kAstars, kPstars, kDualRis, kNoRis };

Baseline parse_baseline(const std::string& s);
std::string to_string(Baseline b);
std::vector<Baseline> parse_baseline_list(const std::string& csv);

struct BaselineSetup {
  SystemConfig cfg;    // may leave the validated region (DualRIS has beta = 1 per side)
  LinkModel link;
  bool ideal = false;  // error-free aggregation
  bool optimize_theta = true;
};

BaselineSetup apply_baseline(Baseline b, const SystemConfig& cfg);

enum class SweepKind { kNone, kQ, kLambda };

struct ExperimentSpec {
  std::string name = "run";
  std::vector<Baseline> baselines{Baseline::kAstars};
  SweepKind sweep = SweepKind::kNone;
  std::vector<double> sweep_values;
  int trials = 10;
  std::string out_dir = "out";
  bool trace_ota = false;
  int threads = 0;  // 0: hardware concurrency
};

// Data shared by all trials of a run: train pool, held-out test split, and
// the noise-free optimum with the fitted bound constants (LogReg only).
struct PreparedData {
  Dataset train;
  Dataset test;
  bool has_bounds = false;
  SmoothnessParams params;
  double F_star = 0.0;
};

PreparedData prepare_data(const SystemConfig& cfg);

struct TrialResult {
  bool ok = false;
  std::string error;
  TrainHistory history;
  std::vector<double> bound_rhs;  // per round, empty without bounds
  double d = 0.0;
  double upsilon = 0.0;
  double gap0 = 0.0;
  double sca_obj = 0.0;
  double sca_obj_initial = 0.0;
};

// Everything a trial needs before training: users and shards, the channel
// draw, the SCA solution and the OTA context. Pointers in setup.ota refer to
// the shared members, so they stay valid when the struct is moved.
struct TrialSetup {
  SystemConfig cfg;  // after apply_baseline
  Geometry geometry;
  std::vector<Dataset> users;
  std::vector<int> K;
  std::shared_ptr<ChannelRealization> real;
  std::shared_ptr<AstarsState> stars;
  TrainSetup setup;
  Model model;
  Rng noise_rng;
  double d = 0.0;
  double sca_obj = 0.0;
  double sca_obj_initial = 0.0;
};

TrialSetup prepare_trial(const SystemConfig& cfg, Baseline b, const PreparedData& data, int trial, int sweep_index);

// Draws geometry, data split and channels from (seed, trial, sweep_index)
// streams, optimizes (f, Theta), trains and evaluates the bound.
TrialResult run_trial(const SystemConfig& cfg, Baseline b, const PreparedData& data, int trial, int sweep_index);

// Applies one sweep value to a config (Q or lambda).
SystemConfig with_sweep_value(const SystemConfig& cfg, SweepKind kind, double value);

struct SummaryRow {
  Baseline baseline = Baseline::kAstars;
  std::string sweep;
  double sweep_value = 0.0;
  int trials_ok = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double loss_mean = 0.0;
  double loss_std = 0.0;
  double d_mean = 0.0;
  double sca_obj_mean = 0.0;
};

double mean_of(const std::vector<double>& xs);
// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& xs);

struct RunOutput {
  std::vector<SummaryRow> summary;
};

// Runs every (baseline, sweep point, trial), writes history.csv, summary.csv,
// bounds.csv, manifest.txt (and ota_trace.csv when requested) to out_dir.
RunOutput run(const ExperimentSpec& spec, const SystemConfig& cfg);

// The manifest is itself a config file. Its `experiment.*` keys rebuild the
// ExperimentSpec; everything else is the resolved SystemConfig.
std::string manifest_text(const ExperimentSpec& spec, const SystemConfig& cfg, const std::string& wall_clock);
std::pair<ExperimentSpec, SystemConfig> load_manifest(const std::string& path,
                                                      const std::map<std::string, std::string>& overrides = {});

std::vector<double> parse_double_list(const std::string& csv);

}  // namespace otafl
