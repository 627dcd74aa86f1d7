#include "otafl/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "otafl/ota.hpp"

#ifndef OTAFL_VERSION
#define OTAFL_VERSION "unknown"
#endif
#ifndef OTAFL_GIT_DESCRIBE
#define OTAFL_GIT_DESCRIBE "unknown"
#endif

namespace otafl {

Baseline parse_baseline(const std::string& s) {
  if (s == "noisefree" || s == "NoiseFree") return Baseline::kNoiseFree;
  if (s == "astars" || s == "ASTARS") return Baseline::kAstars;
  if (s == "pstars" || s == "PSTARS") return Baseline::kPstars;
  if (s == "dualris" || s == "DualRIS") return Baseline::kDualRis;
  if (s == "noris" || s == "NoRIS") return Baseline::kNoRis;
  throw Error("harness: unknown baseline '" + s + "' (expected noisefree|astars|pstars|dualris|noris)");
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kNoiseFree: return "noisefree";
    case Baseline::kAstars: return "astars";
    case Baseline::kPstars: return "pstars";
    case Baseline::kDualRis: return "dualris";
    case Baseline::kNoRis: return "noris";
  }
  return "?";
}

namespace {
std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}
}  // namespace

std::vector<Baseline> parse_baseline_list(const std::string& csv) {
  std::vector<Baseline> out;
  for (const auto& s : split_csv(csv)) out.push_back(parse_baseline(s));
  if (out.empty()) throw Error("harness: empty baseline list");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  for (const auto& s : split_csv(csv)) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) throw Error("harness: bad number '" + s + "' in list '" + csv + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error("harness: empty sweep list");
  return out;
}

BaselineSetup apply_baseline(Baseline b, const SystemConfig& cfg) {
  BaselineSetup s;
  s.cfg = cfg;
  switch (b) {
    case Baseline::kNoiseFree:
      s.cfg.sigma_s2 = 0.0;
      s.cfg.sigma_02 = 0.0;
      s.ideal = true;
      break;
    case Baseline::kAstars:
      break;
    case Baseline::kPstars:
      s.cfg.lambda_amp = 1.0;
      s.cfg.sigma_s2 = 0.0;
      break;
    case Baseline::kDualRis:
      // Two co-located passive reflect-only surfaces, one per half-space.
      s.cfg.lambda_amp = 1.0;
      s.cfg.beta_r = 1.0;
      s.cfg.beta_t = 1.0;
      s.cfg.sigma_s2 = 0.0;
      break;
    case Baseline::kNoRis:
      s.cfg.sigma_s2 = 0.0;
      s.link.cascaded = false;
      s.link.direct_tx_gain = cfg.noris_penetration;
      s.optimize_theta = false;
      break;
  }
  return s;
}

SystemConfig with_sweep_value(const SystemConfig& cfg, SweepKind kind, double value) {
  if (kind == SweepKind::kNone) return cfg;
  auto pairs = cfg.resolved;
  if (kind == SweepKind::kQ) {
    if (value < 1.0 || value != std::floor(value)) throw Error("harness: Q sweep values must be positive integers");
    pairs["Q"] = std::to_string(int(value));
  } else {
    if (!(value > 0.0)) throw Error("harness: lambda sweep values must be positive");
    pairs["lambda"] = fmt(value);
  }
  return config_from_pairs(pairs);
}

PreparedData prepare_data(const SystemConfig& cfg) {
  PreparedData p;
  Dataset pool;
  if (cfg.data.source == "mnist") {
    pool = load_mnist_idx(cfg.data.mnist_images, cfg.data.mnist_labels, cfg.data.limit);
  } else {
    Rng r = derive_stream(cfg.seed, {kTagData});
    pool = gen_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.per_class, cfg.data.margin, r);
  }
  Rng rs = derive_stream(cfg.seed, {kTagData, 1});
  auto [train, test] = split_holdout(pool, cfg.data.holdout, rs);
  p.train = std::move(train);
  p.test = std::move(test);
  if (parse_model_kind(cfg.model.kind) == ModelKind::kLogReg) {
    Rng rm = derive_stream(cfg.seed, {kTagModelInit});
    const Model m0 = make_model(ModelKind::kLogReg, p.train.dim(), p.train.classes, 0, rm);
    p.params = logreg_smoothness(p.train, cfg.rho_reg);
    const OptimumResult opt = solve_optimum(m0, p.train, cfg.rho_reg, p.params.L);
    fit_gradient_bound(m0, p.train, cfg.rho_reg, opt.iterates, p.params);
    p.F_star = opt.F_star;
    p.has_bounds = true;
  }
  return p;
}

TrialSetup prepare_trial(const SystemConfig& cfg, Baseline b, const PreparedData& data, int trial,
                         int sweep_index) {
  TrialSetup ts;
  const BaselineSetup bs = apply_baseline(b, cfg);
  ts.cfg = bs.cfg;
  const SystemConfig& c = ts.cfg;
  const std::uint64_t tr = std::uint64_t(trial), sw = std::uint64_t(sweep_index);

  Rng rg = derive_stream(c.seed, {kTagGeometry, tr, sw});
  ts.geometry = place_users(c, rg);
  Rng rp = derive_stream(c.seed, {kTagPartition, tr, sw});
  const DataAssignment da = assign_data(c, c.data_mode, rp);
  ts.users = partition(data.train, da.K, rp);
  for (const auto& d : ts.users) ts.K.push_back(d.size());

  Rng rc = derive_stream(c.seed, {kTagChannel, tr, sw});
  ts.real = std::make_shared<ChannelRealization>(sample_channels(c, ts.geometry, rc));

  Rng rs = derive_stream(c.seed, {kTagSca, tr, sw});
  const AstarsState stars0 = AstarsState::random(c, rs);
  const ScaProblem problem = make_problem(*ts.real, bs.link, ts.K, c.gain_convention);
  const CVec f0 = initial_beamformer(effective_channels(*ts.real, stars0, bs.link), ts.K);
  ScaSettings settings = ScaSettings::from(c.sca);
  settings.optimize_theta = bs.optimize_theta;
  const ScaResult sr = optimize(problem, stars0, f0, settings, rs);
  ts.sca_obj = sr.obj;
  ts.sca_obj_initial = sr.obj_initial;
  ts.stars = std::make_shared<AstarsState>(sr.stars);

  OtaContext& ctx = ts.setup.ota;
  ctx.real = ts.real.get();
  ctx.stars = ts.stars.get();
  ctx.link = bs.link;
  ctx.f = sr.f;
  ctx.eff = effective_channels(*ts.real, *ts.stars, bs.link);
  ctx.noise = {c.sigma_s2, c.sigma_02};
  ctx.p_max = c.p_max;
  ctx.conv = c.gain_convention;
  ctx.ideal = bs.ideal;

  ts.d = d_value(c, ts.geometry, *ts.stars, ctx.f, ctx.eff, ts.K);

  TrainSetup& setup = ts.setup;
  setup.T = c.T;
  if (c.eta_inverse_l && !data.has_bounds) throw Error("harness: eta_rule = inverse_l needs a LogReg model");
  setup.eta = c.eta_inverse_l ? 1.0 / data.params.L : c.eta_lr;
  setup.rho = c.rho_reg;
  setup.descent = parse_descent(c.descent.kind);
  setup.batch_size = c.descent.batch_size;
  setup.batches_per_round = c.descent.batches;
  // The hooks own copies of what they touch, so a TrialSetup can be moved.
  setup.closed_form = [c, geo = ts.geometry, stars = ts.stars](const OtaContext& x, const std::vector<int>& k,
                                                               const std::vector<double>& nu) {
    return closed_form_e2(c, geo, *stars, x.f, x.eff, k, nu);
  };
  if (c.redraw_per_round) {
    // (f, Theta) stay at the SCA solution; only the fading changes.
    auto redrawn = std::make_shared<std::vector<std::shared_ptr<ChannelRealization>>>();
    setup.before_round = [c, geo = ts.geometry, stars = ts.stars, link = bs.link, redrawn, tr, sw](int t,
                                                                                                OtaContext& x) {
      if (t == 0) return;
      Rng r = derive_stream(c.seed, {kTagChannel, tr, sw, std::uint64_t(t)});
      redrawn->push_back(std::make_shared<ChannelRealization>(sample_channels(c, geo, r)));
      x.real = redrawn->back().get();
      x.eff = effective_channels(*x.real, *stars, link);
    };
  }
  Rng rm = derive_stream(c.seed, {kTagModelInit, tr, sw});
  ts.model = make_model(parse_model_kind(c.model.kind), data.train.dim(), data.train.classes, c.model.mlp_hidden,
                        rm);
  ts.noise_rng = derive_stream(c.seed, {kTagNoise, tr, sw});
  return ts;
}

TrialResult run_trial(const SystemConfig& cfg, Baseline b, const PreparedData& data, int trial, int sweep_index) {
  TrialResult out;
  try {
    TrialSetup ts = prepare_trial(cfg, b, data, trial, sweep_index);
    out.sca_obj = ts.sca_obj;
    out.sca_obj_initial = ts.sca_obj_initial;
    out.d = ts.d;
    out.history = train(ts.model, ts.users, data.test, ts.setup, ts.noise_rng);

    if (data.has_bounds) {
      out.gap0 = out.history.rounds.front().loss - data.F_star;
      out.upsilon = upsilon(data.params, out.d);
      for (auto& r : out.history.rounds) {
        r.bound_rhs = theorem2_bound(r.round, data.params, out.d, out.gap0);
        out.bound_rhs.push_back(r.bound_rhs);
      }
    } else {
      for (auto& r : out.history.rounds) r.bound_rhs = std::nan("");
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nan("");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(xs.size() - 1));
}

namespace {

std::string sweep_name(SweepKind k) {
  switch (k) {
    case SweepKind::kNone: return "none";
    case SweepKind::kQ: return "q";
    case SweepKind::kLambda: return "lambda";
  }
  return "?";
}

SweepKind parse_sweep(const std::string& s) {
  if (s == "none") return SweepKind::kNone;
  if (s == "q") return SweepKind::kQ;
  if (s == "lambda") return SweepKind::kLambda;
  throw Error("harness: unknown sweep '" + s + "'");
}

std::string join(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
  return s;
}

struct Job {
  int sweep_index;
  double sweep_value;
  Baseline baseline;
  int trial;
};

}  // namespace

std::string manifest_text(const ExperimentSpec& spec, const SystemConfig& cfg, const std::string& wall_clock) {
  std::ostringstream os;
  os << "# otafl run manifest\n";
  os << "# version " << OTAFL_VERSION << "\n";
  os << "# git " << OTAFL_GIT_DESCRIBE << "\n";
  for (const char* m : {"scenario", "channel", "ota", "fl", "sca", "bounds", "harness"})
    os << "# module " << m << " " << OTAFL_VERSION << "\n";
  os << "# seed " << cfg.seed << "\n";
  os << "# wall_clock " << wall_clock << "\n";
  std::vector<std::string> bl;
  for (auto b : spec.baselines) bl.push_back(to_string(b));
  std::vector<std::string> sv;
  for (double v : spec.sweep_values) sv.push_back(fmt(v));
  os << "experiment.name = " << spec.name << "\n";
  os << "experiment.baselines = " << join(bl) << "\n";
  os << "experiment.sweep = " << sweep_name(spec.sweep) << "\n";
  os << "experiment.sweep_values = " << join(sv) << "\n";
  os << "experiment.trials = " << spec.trials << "\n";
  os << "experiment.trace_ota = " << (spec.trace_ota ? "true" : "false") << "\n";
  os << to_config_text(cfg);
  return os.str();
}

std::pair<ExperimentSpec, SystemConfig> load_manifest(const std::string& path,
                                                      const std::map<std::string, std::string>& overrides) {
  auto pairs = read_key_values(path);
  for (const auto& [k, v] : overrides) pairs[k] = v;
  ExperimentSpec spec;
  std::map<std::string, std::string> cfg_pairs;
  for (const auto& [k, v] : pairs) {
    if (k.rfind("experiment.", 0) != 0) {
      cfg_pairs[k] = v;
      continue;
    }
    if (k == "experiment.name") spec.name = v;
    else if (k == "experiment.baselines") spec.baselines = parse_baseline_list(v);
    else if (k == "experiment.sweep") spec.sweep = parse_sweep(v);
    else if (k == "experiment.sweep_values") spec.sweep_values = v.empty() ? std::vector<double>{} : parse_double_list(v);
    else if (k == "experiment.trials") spec.trials = std::stoi(v);
    else if (k == "experiment.trace_ota") spec.trace_ota = (v == "true" || v == "1");
    else throw Error("manifest: unknown key '" + k + "' in " + path);
  }
  return {spec, config_from_pairs(cfg_pairs)};
}

RunOutput run(const ExperimentSpec& spec, const SystemConfig& cfg) {
  if (spec.trials < 1) throw Error("harness: trials must be >= 1");
  if (spec.baselines.empty()) throw Error("harness: no baselines selected");
  if (spec.sweep != SweepKind::kNone && spec.sweep_values.empty()) throw Error("harness: sweep list is empty");

  const PreparedData data = prepare_data(cfg);
  std::vector<double> points = spec.sweep == SweepKind::kNone ? std::vector<double>{0.0} : spec.sweep_values;
  std::vector<SystemConfig> cfgs;
  for (double v : points) cfgs.push_back(with_sweep_value(cfg, spec.sweep, v));

  std::vector<Job> jobs;
  for (int s = 0; s < int(points.size()); ++s)
    for (auto b : spec.baselines)
      for (int t = 0; t < spec.trials; ++t) jobs.push_back({s, points[s], b, t});

  std::vector<TrialResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      results[i] = run_trial(cfgs[j.sweep_index], j.baseline, data, j.trial, j.sweep_index);
      if (!results[i].ok) {
        std::lock_guard<std::mutex> lk(log_mu);
        std::cerr << "otafl: trial " << j.trial << " of " << to_string(j.baseline) << " (sweep point "
                  << j.sweep_index << ") failed: " << results[i].error << "\n";
      }
    }
  };
  unsigned n_threads = spec.threads > 0 ? unsigned(spec.threads) : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, unsigned(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);
  std::ofstream hist(fs::path(spec.out_dir) / "history.csv");
  std::ofstream bounds(fs::path(spec.out_dir) / "bounds.csv");
  std::ofstream summ(fs::path(spec.out_dir) / "summary.csv");
  std::unique_ptr<std::ofstream> trace;
  if (spec.trace_ota) {
    trace = std::make_unique<std::ofstream>(fs::path(spec.out_dir) / "ota_trace.csv");
    *trace << "baseline,sweep_value,trial,round,e1_norm2,e2_norm2,closed_form,mu\n";
  }
  if (!hist || !bounds || !summ) throw Error("harness: cannot write into '" + spec.out_dir + "'");
  hist << "baseline,sweep_value,trial,round,loss,test_acc,grad_norm2,e2_norm2,bound_rhs\n";
  bounds << "baseline,sweep_value,t,lhs_mc,lhs_se,rhs_bound,d,upsilon\n";
  summ << "baseline,sweep,sweep_value,trials_ok,trials_failed,final_acc_mean,final_acc_std,final_loss_mean,"
          "final_loss_std,d_mean,sca_obj_mean\n";

  RunOutput out;
  const std::string sweep_label = sweep_name(spec.sweep);
  for (std::size_t first = 0; first < jobs.size(); first += std::size_t(spec.trials)) {
    const Job& j0 = jobs[first];
    std::vector<const TrialResult*> ok;
    for (int t = 0; t < spec.trials; ++t) {
      const TrialResult& r = results[first + std::size_t(t)];
      if (!r.ok) continue;
      ok.push_back(&r);
      for (const auto& rec : r.history.rounds) {
        hist << to_string(j0.baseline) << "," << fmt(j0.sweep_value) << "," << t << "," << rec.round << ","
             << fmt(rec.loss) << "," << fmt(rec.test_acc) << "," << fmt(rec.grad_norm2) << "," << fmt(rec.e2_norm2)
             << "," << fmt(rec.bound_rhs) << "\n";
        if (trace)
          *trace << to_string(j0.baseline) << "," << fmt(j0.sweep_value) << "," << t << "," << rec.round << ","
                 << fmt(rec.e1_norm2) << "," << fmt(rec.e2_norm2) << "," << fmt(rec.closed_form) << ","
                 << fmt(rec.mu) << "\n";
      }
    }
    SummaryRow row;
    row.baseline = j0.baseline;
    row.sweep = sweep_label;
    row.sweep_value = j0.sweep_value;
    row.trials_ok = int(ok.size());
    std::vector<double> acc, lossv, dv, objv;
    for (const auto* r : ok) {
      acc.push_back(r->history.final_test_acc);
      lossv.push_back(r->history.final_loss);
      dv.push_back(r->d);
      objv.push_back(r->sca_obj);
    }
    row.acc_mean = mean_of(acc);
    row.acc_std = std_of(acc);
    row.loss_mean = mean_of(lossv);
    row.loss_std = std_of(lossv);
    row.d_mean = mean_of(dv);
    row.sca_obj_mean = mean_of(objv);
    summ << to_string(row.baseline) << "," << row.sweep << "," << fmt(row.sweep_value) << "," << row.trials_ok << ","
         << spec.trials - row.trials_ok << "," << fmt(row.acc_mean) << "," << fmt(row.acc_std) << ","
         << fmt(row.loss_mean) << "," << fmt(row.loss_std) << "," << fmt(row.d_mean) << "," << fmt(row.sca_obj_mean)
         << "\n";
    out.summary.push_back(row);

    if (data.has_bounds && !ok.empty()) {
      const int T = int(ok.front()->history.rounds.size());
      for (int t = 0; t < T; ++t) {
        std::vector<double> gaps, rhs;
        for (const auto* r : ok) {
          gaps.push_back(r->history.rounds[t].loss - data.F_star);
          rhs.push_back(r->bound_rhs[t]);
        }
        const McStat g = mc_stat(gaps);
        bounds << to_string(j0.baseline) << "," << fmt(j0.sweep_value) << "," << t << "," << fmt(g.mean) << ","
               << fmt(g.se) << "," << fmt(mean_of(rhs)) << "," << fmt(row.d_mean) << ","
               << fmt(upsilon(data.params, row.d_mean)) << "\n";
      }
    }
  }

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  std::ofstream man(fs::path(spec.out_dir) / "manifest.txt");
  man << manifest_text(spec, cfg, ts.str());
  return out;
}

}  // namespace otafl
