#pragma once

#include <functional>
#include <string>
#include <vector>

#include "otafl/ota.hpp"
#include "otafl/rng.hpp"
#include "otafl/scenario.hpp"
#include "otafl/types.hpp"

namespace otafl {

// Samples are rows of X.
struct Dataset {
  Mat X;
  std::vector<int> y;
  int classes = 0;

  int size() const { return int(y.size()); }
  int dim() const { return int(X.cols()); }
  bool empty() const { return y.empty(); }
};

Dataset subset(const Dataset& pool, const std::vector<int>& rows);
Dataset concat(const std::vector<Dataset>& parts);

enum class ModelKind { kLogReg, kMlp };

ModelKind parse_model_kind(const std::string& s);

struct Model {
  ModelKind kind = ModelKind::kLogReg;
  int dim = 0;
  int classes = 0;
  int hidden = 0;  // Mlp only
  Vec w;

  int D() const;
};

// LogReg starts at zero; the MLP gets He-scaled weights from rng.
Model make_model(ModelKind kind, int dim, int classes, int hidden, Rng& rng);

// Mean cross-entropy plus (rho/2)||w||^2.
double loss(const Model& m, const Dataset& data, double rho);
// (1/K) sum grad f(w; x_k, y_k) + rho w.
Vec local_gradient(const Model& m, const Dataset& data, double rho);
double accuracy(const Model& m, const Dataset& data);
// Per-sample gradient of the unregularized loss plus rho w; used by the
// bound-constant fit.
Vec sample_gradient(const Model& m, const Dataset& data, int k, double rho);

// w - (eta / sumK) r_hat.
Vec global_update(const Vec& w, const Vec& r_hat, double eta, double sum_k);

// IDX pair, pixels scaled to [0,1]. limit <= 0 keeps everything.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, int limit = 0);

// Gaussian blobs: class means on scaled axis directions, unit-variance noise.
// Larger margin separates the blobs further.
Dataset gen_synthetic(int classes, int dim, int per_class, double margin, Rng& rng);

// Shuffled split; `test_fraction` of the pool goes to test.
std::pair<Dataset, Dataset> split_holdout(const Dataset& pool, double test_fraction, Rng& rng);

// Disjoint shuffled shards with sizes proportional to `weights`, rescaled to
// the pool by largest remainder; every shard gets at least one sample.
std::vector<Dataset> partition(const Dataset& pool, const std::vector<int>& weights, Rng& rng);

// Mini-batches of `batch_size` per user, fixed once before training.
std::vector<std::vector<Dataset>> make_batches(const std::vector<Dataset>& users, int batch_size);

struct RoundRecord {
  int round = 0;
  double loss = 0.0;
  double test_acc = 0.0;
  double grad_norm2 = 0.0;
  double e1_norm2 = 0.0;
  double e2_norm2 = 0.0;
  double closed_form = 0.0;
  double mu = 0.0;
  double bound_rhs = 0.0;
};

struct TrainHistory {
  std::vector<RoundRecord> rounds;
  Vec w_final;
  double final_test_acc = 0.0;
  double final_loss = 0.0;
};

enum class DescentKind { kBatch, kMiniBatch };
DescentKind parse_descent(const std::string& s);

struct TrainSetup {
  int T = 150;
  double eta = 0.01;
  double rho = 1.0;
  DescentKind descent = DescentKind::kBatch;
  int batch_size = 8;
  int batches_per_round = 2;
  OtaContext ota;
  // Optional hooks: refresh the OTA context before a round (channel redraw),
  // and evaluate the closed-form error for the trace.
  std::function<void(int, OtaContext&)> before_round;
  std::function<double(const OtaContext&, const std::vector<int>&, const std::vector<double>&)> closed_form;
};

// Weighted global objective sum K_phi F_phi / sum K.
double global_loss(const Model& m, const std::vector<Dataset>& users, double rho);
Vec global_gradient(const Model& m, const std::vector<Dataset>& users, double rho);

// T rounds of broadcast, local gradients, OTA aggregation and update. Record t
// holds the state w_t before the t-th update.
TrainHistory train(Model model, const std::vector<Dataset>& users, const Dataset& test, const TrainSetup& setup,
                   Rng& noise_rng);

}  // namespace otafl
