#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otafl/rng.hpp"
#include "otafl/types.hpp"

namespace otafl {

double db_to_linear(double db);
double linear_to_db(double lin);
// dBm -> W, i.e. 10^((dBm - 30) / 10).
double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);

enum class GainConvention { kPerUser, kPaired };
enum class DataMode { kSet1, kSet2 };
enum class CorollaryForm { kPrinted, kSeries };

struct ScaOptions {
  int imax = 50;
  double xi = 1e-4;
  double varpi = 1e-2;
  int restarts = 4;
  int inner_iters = 2000;
};

struct DataOptions {
  std::string source = "synthetic";  // synthetic | mnist
  std::string mnist_images = "data/mnist/subset-images-idx3-ubyte";
  std::string mnist_labels = "data/mnist/subset-labels-idx1-ubyte";
  int limit = 2000;
  double holdout = 0.1;
  int classes = 3;
  int dim = 10;
  int per_class = 300;
  double margin = 4.0;
};

struct ModelOptions {
  std::string kind = "logreg";  // logreg | mlp
  int mlp_hidden = 32;
};

struct DescentOptions {
  std::string kind = "batch";  // batch | minibatch
  int batch_size = 8;
  int batches = 2;
};

// Physical and learning parameters. Every dB quantity is linear here;
// conversion happens once in load_config.
struct SystemConfig {
  int J = 5;
  int Q = 30;
  int N = 40;
  int M = 40;
  double kappa = 0.0;
  double alpha = 2.0;
  double eta0 = 0.0;
  double lambda_amp = 5.0;
  double beta_r = 0.7;
  double beta_t = 0.3;
  double sigma_s2 = 0.0;  // W
  double sigma_02 = 0.0;  // W
  double p_max = 0.1;     // W, per-user budget
  double eta_lr = 0.01;
  bool eta_inverse_l = false;  // eta_rule = inverse_l: step 1/L (LogReg only)
  double rho_reg = 1.0;
  int T = 150;
  std::uint64_t seed = 1;

  bool redraw_per_round = false;
  GainConvention gain_convention = GainConvention::kPerUser;
  double noris_penetration = 0.01;  // linear power factor, from noris.pen_db
  CorollaryForm corollary_form = CorollaryForm::kPrinted;
  DataMode data_mode = DataMode::kSet1;

  ScaOptions sca;
  DataOptions data;
  ModelOptions model;
  DescentOptions descent;

  // Resolved key=value pairs (file + overrides) in canonical order; enough
  // to rebuild this config bit-for-bit.
  std::map<std::string, std::string> resolved;

  int users() const { return N + M; }
};

// Reference system defaults with dB fields converted.
SystemConfig default_config();

// Parses a flat `key = value` file (`#` starts a comment) and applies the
// overrides on top. Unknown keys and invariant violations throw Error.
SystemConfig load_config(const std::string& path,
                         const std::map<std::string, std::string>& overrides = {});
// Raw `key = value` pairs of a file; errors carry path:line.
std::map<std::string, std::string> read_key_values(const std::string& path);
SystemConfig config_from_pairs(const std::map<std::string, std::string>& pairs);
// Re-validates a config after programmatic edits.
void validate(const SystemConfig& cfg);
std::string to_config_text(const SystemConfig& cfg);
std::vector<std::string> known_config_keys();

enum class Region { kReflection, kTransmission };

struct Geometry {
  Eigen::Vector3d bs_pos{0.0, 0.0, 10.0};
  Eigen::Vector3d stars_pos{50.0, 0.0, 10.0};
  std::vector<Eigen::Vector3d> user_pos;  // reflection users first
  std::vector<Region> region;

  double d_sr() const { return (bs_pos - stars_pos).norm(); }
  double d_r(int user) const { return (stars_pos - user_pos[user]).norm(); }
  double d_direct(int user) const { return (bs_pos - user_pos[user]).norm(); }
};

// Reflection users uniform in {(50+x, 50+y, 0): 0<=x<=20, |y|<=10};
// transmission users in the same set with -20<=x<=0.
Geometry place_users(const SystemConfig& cfg, Rng& rng);

struct DataAssignment {
  std::vector<int> K;
  DataMode mode = DataMode::kSet1;
  long total() const;
};

DataAssignment assign_data(const SystemConfig& cfg, DataMode mode, Rng& rng);

DataMode parse_data_mode(const std::string& s);
std::string to_string(DataMode m);

}  // namespace otafl
