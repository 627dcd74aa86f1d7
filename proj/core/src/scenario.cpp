#include "otafl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace otafl {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw Error("");
    return x;
  } catch (...) {
    throw Error("config: field '" + key + "' expects a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw Error("");
    return x;
  } catch (...) {
    throw Error("config: field '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("config: field '" + key + "' expects a boolean, got '" + v + "'");
}

struct Field {
  const char* key;
  const char* default_value;
  std::function<void(SystemConfig&, const std::string& key, const std::string& v)> apply;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"J", "5", [](SystemConfig& c, auto& k, auto& v) { c.J = int(parse_int(k, v)); }},
      {"Q", "30", [](SystemConfig& c, auto& k, auto& v) { c.Q = int(parse_int(k, v)); }},
      {"N", "40", [](SystemConfig& c, auto& k, auto& v) { c.N = int(parse_int(k, v)); }},
      {"M", "40", [](SystemConfig& c, auto& k, auto& v) { c.M = int(parse_int(k, v)); }},
      {"kappa_db", "-5", [](SystemConfig& c, auto& k, auto& v) { c.kappa = db_to_linear(parse_double(k, v)); }},
      {"alpha", "2", [](SystemConfig& c, auto& k, auto& v) { c.alpha = parse_double(k, v); }},
      {"eta0_db", "-30", [](SystemConfig& c, auto& k, auto& v) { c.eta0 = db_to_linear(parse_double(k, v)); }},
      {"lambda", "5", [](SystemConfig& c, auto& k, auto& v) { c.lambda_amp = parse_double(k, v); }},
      {"beta_r", "0.7", [](SystemConfig& c, auto& k, auto& v) { c.beta_r = parse_double(k, v); }},
      {"beta_t", "0.3", [](SystemConfig& c, auto& k, auto& v) { c.beta_t = parse_double(k, v); }},
      {"sigma_s2_dbm", "-70", [](SystemConfig& c, auto& k, auto& v) { c.sigma_s2 = dbm_to_watt(parse_double(k, v)); }},
      {"sigma_02_dbm", "-90", [](SystemConfig& c, auto& k, auto& v) { c.sigma_02 = dbm_to_watt(parse_double(k, v)); }},
      {"p_max", "0.1", [](SystemConfig& c, auto& k, auto& v) { c.p_max = parse_double(k, v); }},
      {"eta", "0.01", [](SystemConfig& c, auto& k, auto& v) { c.eta_lr = parse_double(k, v); }},
      {"eta_rule", "fixed",
       [](SystemConfig& c, auto& k, auto& v) {
         if (v == "fixed") c.eta_inverse_l = false;
         else if (v == "inverse_l") c.eta_inverse_l = true;
         else throw Error("config: field '" + k + "' must be fixed or inverse_l");
       }},
      {"rho", "1", [](SystemConfig& c, auto& k, auto& v) { c.rho_reg = parse_double(k, v); }},
      {"T", "150", [](SystemConfig& c, auto& k, auto& v) { c.T = int(parse_int(k, v)); }},
      {"seed", "1", [](SystemConfig& c, auto& k, auto& v) { c.seed = std::uint64_t(parse_int(k, v)); }},
      {"redraw_per_round", "false", [](SystemConfig& c, auto& k, auto& v) { c.redraw_per_round = parse_bool(k, v); }},
      {"gain_convention", "per_user",
       [](SystemConfig& c, auto& k, auto& v) {
         if (v == "per_user") c.gain_convention = GainConvention::kPerUser;
         else if (v == "paired") c.gain_convention = GainConvention::kPaired;
         else throw Error("config: field '" + k + "' must be per_user or paired");
       }},
      {"noris.pen_db", "-20", [](SystemConfig& c, auto& k, auto& v) { c.noris_penetration = db_to_linear(parse_double(k, v)); }},
      {"bounds.corollary_form", "printed",
       [](SystemConfig& c, auto& k, auto& v) {
         if (v == "printed") c.corollary_form = CorollaryForm::kPrinted;
         else if (v == "series") c.corollary_form = CorollaryForm::kSeries;
         else throw Error("config: field '" + k + "' must be printed or series");
       }},
      {"data.mode", "set1", [](SystemConfig& c, auto&, auto& v) { c.data_mode = parse_data_mode(v); }},
      {"sca.imax", "50", [](SystemConfig& c, auto& k, auto& v) { c.sca.imax = int(parse_int(k, v)); }},
      {"sca.xi", "1e-4", [](SystemConfig& c, auto& k, auto& v) { c.sca.xi = parse_double(k, v); }},
      {"sca.varpi", "1e-2", [](SystemConfig& c, auto& k, auto& v) { c.sca.varpi = parse_double(k, v); }},
      {"sca.restarts", "4", [](SystemConfig& c, auto& k, auto& v) { c.sca.restarts = int(parse_int(k, v)); }},
      {"sca.inner_iters", "2000", [](SystemConfig& c, auto& k, auto& v) { c.sca.inner_iters = int(parse_int(k, v)); }},
      {"data.source", "synthetic", [](SystemConfig& c, auto&, auto& v) { c.data.source = v; }},
      {"data.mnist_images", "data/mnist/subset-images-idx3-ubyte", [](SystemConfig& c, auto&, auto& v) { c.data.mnist_images = v; }},
      {"data.mnist_labels", "data/mnist/subset-labels-idx1-ubyte", [](SystemConfig& c, auto&, auto& v) { c.data.mnist_labels = v; }},
      {"data.limit", "2000", [](SystemConfig& c, auto& k, auto& v) { c.data.limit = int(parse_int(k, v)); }},
      {"data.holdout", "0.1", [](SystemConfig& c, auto& k, auto& v) { c.data.holdout = parse_double(k, v); }},
      {"data.classes", "3", [](SystemConfig& c, auto& k, auto& v) { c.data.classes = int(parse_int(k, v)); }},
      {"data.dim", "10", [](SystemConfig& c, auto& k, auto& v) { c.data.dim = int(parse_int(k, v)); }},
      {"data.per_class", "300", [](SystemConfig& c, auto& k, auto& v) { c.data.per_class = int(parse_int(k, v)); }},
      {"data.margin", "4", [](SystemConfig& c, auto& k, auto& v) { c.data.margin = parse_double(k, v); }},
      {"model", "logreg", [](SystemConfig& c, auto&, auto& v) { c.model.kind = v; }},
      {"mlp.hidden", "32", [](SystemConfig& c, auto& k, auto& v) { c.model.mlp_hidden = int(parse_int(k, v)); }},
      {"descent", "batch", [](SystemConfig& c, auto&, auto& v) { c.descent.kind = v; }},
      {"batch.size", "8", [](SystemConfig& c, auto& k, auto& v) { c.descent.batch_size = int(parse_int(k, v)); }},
      {"batch.count", "2", [](SystemConfig& c, auto& k, auto& v) { c.descent.batches = int(parse_int(k, v)); }},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("config: " + what);
}

}  // namespace

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void validate(const SystemConfig& c) {
  require(c.J >= 1, "field 'J' must be >= 1");
  require(c.Q >= 1, "field 'Q' must be >= 1");
  require(c.N >= 0 && c.M >= 0 && c.N + c.M >= 1, "fields 'N','M' must be >= 0 with N+M >= 1");
  require(c.beta_r > 0.0 && c.beta_r < 1.0, "field 'beta_r' must lie in (0,1)");
  require(c.beta_t > 0.0 && c.beta_t < 1.0, "field 'beta_t' must lie in (0,1)");
  // Tolerate the last ulp so that 0.6 + 0.4 style inputs on the boundary pass.
  require(c.beta_r + c.beta_t <= 1.0 + 1e-12, "beta sum exceeds 1 (fields 'beta_r' + 'beta_t')");
  require(c.kappa > 0.0, "field 'kappa_db' must give a positive Rician factor");
  require(c.alpha > 0.0, "field 'alpha' must be positive");
  require(c.eta0 > 0.0, "field 'eta0_db' must give a positive reference path loss");
  require(c.lambda_amp > 0.0, "field 'lambda' must be positive");
  require(c.sigma_s2 >= 0.0, "field 'sigma_s2_dbm' must give a non-negative power");
  require(c.sigma_02 >= 0.0, "field 'sigma_02_dbm' must give a non-negative power");
  require(c.p_max > 0.0, "field 'p_max' must be positive");
  require(c.eta_lr > 0.0, "field 'eta' must be positive");
  require(c.rho_reg >= 0.0, "field 'rho' must be non-negative");
  require(c.T >= 1, "field 'T' must be >= 1");
  require(c.sca.imax >= 1, "field 'sca.imax' must be >= 1");
  require(c.sca.varpi > 0.0, "field 'sca.varpi' must be positive");
  require(c.sca.restarts >= 1, "field 'sca.restarts' must be >= 1");
  require(c.sca.inner_iters >= 1, "field 'sca.inner_iters' must be >= 1");
  require(c.data.source == "synthetic" || c.data.source == "mnist", "field 'data.source' must be synthetic or mnist");
  require(c.data.holdout >= 0.0 && c.data.holdout < 1.0, "field 'data.holdout' must lie in [0,1)");
  require(c.data.classes >= 2, "field 'data.classes' must be >= 2");
  require(c.data.dim >= 1, "field 'data.dim' must be >= 1");
  require(c.data.limit >= 1, "field 'data.limit' must be >= 1");
  require(c.model.kind == "logreg" || c.model.kind == "mlp", "field 'model' must be logreg or mlp");
  require(!(c.eta_inverse_l && c.model.kind != "logreg"), "field 'eta_rule' = inverse_l needs model = logreg");
  require(c.model.mlp_hidden >= 1 && c.model.mlp_hidden <= 64, "field 'mlp.hidden' must lie in [1,64]");
  require(c.descent.kind == "batch" || c.descent.kind == "minibatch", "field 'descent' must be batch or minibatch");
  require(c.descent.batch_size >= 1 && c.descent.batches >= 1, "fields 'batch.size','batch.count' must be >= 1");
}

SystemConfig config_from_pairs(const std::map<std::string, std::string>& pairs) {
  std::map<std::string, std::string> resolved;
  for (const auto& f : fields()) resolved[f.key] = f.default_value;
  for (const auto& [k, v] : pairs) {
    if (!resolved.count(k)) throw Error("config: unknown key '" + k + "'");
    resolved[k] = v;
  }
  SystemConfig cfg;
  for (const auto& f : fields()) f.apply(cfg, f.key, resolved.at(f.key));
  validate(cfg);
  cfg.resolved = std::move(resolved);
  return cfg;
}

SystemConfig default_config() { return config_from_pairs({}); }

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::map<std::string, std::string> pairs;
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: " + path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config: " + path + ":" + std::to_string(lineno) + ": empty key");
    pairs[key] = val;
  }
  return pairs;
}

SystemConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> pairs;
  if (!path.empty()) pairs = read_key_values(path);
  for (const auto& [k, v] : overrides) pairs[k] = v;
  return config_from_pairs(pairs);
}

std::string to_config_text(const SystemConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) {
    const auto it = cfg.resolved.find(f.key);
    os << f.key << " = " << (it != cfg.resolved.end() ? it->second : f.default_value) << "\n";
  }
  return os.str();
}

Geometry place_users(const SystemConfig& cfg, Rng& rng) {
  Geometry g;
  const int phi = cfg.users();
  g.user_pos.reserve(phi);
  g.region.reserve(phi);
  for (int n = 0; n < cfg.N; ++n) {
    const double x = uniform(rng, 0.0, 20.0);
    const double y = uniform(rng, -10.0, 10.0);
    g.user_pos.emplace_back(50.0 + x, 50.0 + y, 0.0);
    g.region.push_back(Region::kReflection);
  }
  for (int m = 0; m < cfg.M; ++m) {
    const double x = uniform(rng, -20.0, 0.0);
    const double y = uniform(rng, -10.0, 10.0);
    g.user_pos.emplace_back(50.0 + x, 50.0 + y, 0.0);
    g.region.push_back(Region::kTransmission);
  }
  return g;
}

long DataAssignment::total() const { return std::accumulate(K.begin(), K.end(), 0L); }

DataAssignment assign_data(const SystemConfig& cfg, DataMode mode, Rng& rng) {
  const int phi = cfg.users();
  DataAssignment a;
  a.mode = mode;
  a.K.assign(phi, 750);
  if (mode == DataMode::kSet2) {
    std::vector<int> order(phi);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int small = (phi + 1) / 2;
    std::uniform_int_distribution<int> lo(100, 200);
    std::uniform_int_distribution<int> hi(1000, 2000);
    for (int i = 0; i < phi; ++i) a.K[order[i]] = i < small ? lo(rng) : hi(rng);
  }
  return a;
}

DataMode parse_data_mode(const std::string& s) {
  if (s == "set1") return DataMode::kSet1;
  if (s == "set2") return DataMode::kSet2;
  throw Error("unknown data mode '" + s + "' (expected set1 or set2)");
}

std::string to_string(DataMode m) { return m == DataMode::kSet1 ? "set1" : "set2"; }

}  // namespace otafl
