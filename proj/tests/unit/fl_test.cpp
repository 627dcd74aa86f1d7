#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "otafl/bounds.hpp"
#include "otafl/fl.hpp"

using namespace otafl;

namespace {

const char* kImages = "data/mnist/subset-images-idx3-ubyte";
const char* kLabels = "data/mnist/subset-labels-idx1-ubyte";

Dataset blobs(std::uint64_t seed, int classes = 3, int dim = 4, int per_class = 40, double margin = 2.0) {
  Rng r(seed);
  return gen_synthetic(classes, dim, per_class, margin, r);
}

Model random_model(ModelKind kind, int dim, int classes, std::uint64_t seed, int hidden = 6) {
  Rng r(seed);
  Model m = make_model(kind, dim, classes, hidden, r);
  std::normal_distribution<double> n(0.0, 0.3);
  for (Eigen::Index i = 0; i < m.w.size(); ++i) m.w(i) += n(r);
  return m;
}

Vec numeric_gradient(Model m, const Dataset& d, double rho, double eps) {
  Vec g(m.D());
  for (int i = 0; i < m.D(); ++i) {
    const double w0 = m.w(i);
    m.w(i) = w0 + eps;
    const double fp = loss(m, d, rho);
    m.w(i) = w0 - eps;
    const double fm = loss(m, d, rho);
    m.w(i) = w0;
    g(i) = (fp - fm) / (2.0 * eps);
  }
  return g;
}

std::vector<Dataset> shards(const Dataset& pool, std::vector<int> weights, std::uint64_t seed) {
  Rng r(seed);
  return partition(pool, weights, r);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Model, ParameterCounts) {
  Rng r(1);
  EXPECT_EQ(make_model(ModelKind::kLogReg, 784, 10, 0, r).D(), 7850);
  EXPECT_EQ(make_model(ModelKind::kMlp, 10, 3, 8, r).D(), 8 * 11 + 3 * 9);
  EXPECT_THROW(make_model(ModelKind::kMlp, 10, 3, 65, r), Error);
  EXPECT_THROW(make_model(ModelKind::kLogReg, 10, 1, 0, r), Error);
  EXPECT_THROW(parse_model_kind("cnn"), Error);
  EXPECT_EQ(make_model(ModelKind::kLogReg, 5, 3, 0, r).w.norm(), 0.0);
}

TEST(Gradient, CentralDifferencesLogReg) {
  const Dataset d = blobs(2);
  const Model m = random_model(ModelKind::kLogReg, 4, 3, 3);
  const Vec g = local_gradient(m, d, 0.7);
  const Vec num = numeric_gradient(m, d, 0.7, 1e-5);
  EXPECT_LE((g - num).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Gradient, CentralDifferencesMlp) {
  const Dataset d = blobs(4, 3, 4, 15);
  const Model m = random_model(ModelKind::kMlp, 4, 3, 5);
  const Vec g = local_gradient(m, d, 0.1);
  const Vec num = numeric_gradient(m, d, 0.1, 1e-5);
  EXPECT_LE((g - num).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Gradient, StationaryAtUnregularizedOptimum) {
  // Identical inputs with both labels: the optimum is the uniform predictor, w = 0.
  Dataset d;
  d.classes = 2;
  d.X = Mat::Ones(2, 3);
  d.y = {0, 1};
  Rng r(1);
  const Model m = make_model(ModelKind::kLogReg, 3, 2, 0, r);
  EXPECT_LE(local_gradient(m, d, 0.0).norm(), 1e-6);
}

TEST(Gradient, DuplicatedDataGivesSameGradient) {
  const Dataset half = blobs(6);
  const Dataset both = concat({half, half});
  const Model m = random_model(ModelKind::kLogReg, 4, 3, 7);
  EXPECT_LE((local_gradient(m, both, 1.0) - local_gradient(m, half, 1.0)).norm(), 1e-12);
}

TEST(Gradient, SampleGradientsAverageToLocal) {
  const Dataset d = blobs(8);
  const Model m = random_model(ModelKind::kLogReg, 4, 3, 9);
  Vec s = Vec::Zero(m.D());
  for (int k = 0; k < d.size(); ++k) s += sample_gradient(m, d, k, 0.5);
  EXPECT_LE((s / d.size() - local_gradient(m, d, 0.5)).norm(), 1e-12);
}

TEST(Gradient, WeightedAggregationIdentity) {
  const Dataset pool = blobs(10, 3, 4, 100);
  const auto users = shards(pool, {3, 1, 7, 2, 5}, 11);
  const Model m = random_model(ModelKind::kLogReg, 4, 3, 12);
  Vec agg = Vec::Zero(m.D());
  int total = 0;
  for (const auto& u : users) agg += u.size() * local_gradient(m, u, 1.0), total += u.size();
  EXPECT_LE((agg / total - local_gradient(m, concat(users), 1.0)).norm(), 1e-12);
  EXPECT_LE((global_gradient(m, users, 1.0) - local_gradient(m, concat(users), 1.0)).norm(), 1e-12);
  EXPECT_NEAR(global_loss(m, users, 1.0), loss(m, concat(users), 1.0), 1e-12);
}

TEST(Gradient, StrongConvexityModulus) {
  const Dataset d = blobs(13, 3, 3, 30);
  const double rho = 0.8;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Model m = random_model(ModelKind::kLogReg, 3, 3, 100 + s);
    const int D = m.D();
    Mat H(D, D);
    const double eps = 1e-5;
    for (int i = 0; i < D; ++i) {
      Model a = m, b = m;
      a.w(i) += eps;
      b.w(i) -= eps;
      H.col(i) = (local_gradient(a, d, rho) - local_gradient(b, d, rho)) / (2.0 * eps);
    }
    const Mat Hs = 0.5 * (H + H.transpose());
    const double lo = Eigen::SelfAdjointEigenSolver<Mat>(Hs).eigenvalues().minCoeff();
    EXPECT_GE(lo, rho - 1e-6);
  }
}

TEST(Update, Examples) {
  const Vec w = Vec::LinSpaced(5, -1.0, 1.0);
  EXPECT_EQ(global_update(w, Vec::Zero(5), 0.01, 60000.0), w);
  const Vec w2 = global_update(w, Vec::Constant(5, 60000.0), 0.01, 60000.0);
  EXPECT_LE((w2 - (w.array() - 0.01).matrix()).norm(), 1e-15);
  EXPECT_THROW(global_update(w, w, 0.0, 1.0), Error);
}

TEST(Mnist, LoadsSubsetAndLimits) {
  const Dataset all = load_mnist_idx(kImages, kLabels, 0);
  EXPECT_EQ(all.size(), 2000);
  EXPECT_EQ(all.dim(), 28 * 28);
  EXPECT_EQ(all.classes, 10);
  EXPECT_GE(all.X.minCoeff(), 0.0);
  EXPECT_LE(all.X.maxCoeff(), 1.0);
  const Dataset some = load_mnist_idx(kImages, kLabels, 1000);
  EXPECT_EQ(some.size(), 1000);
  EXPECT_EQ(some.X.row(999), all.X.row(999));
}

TEST(Mnist, CorruptMagicNamesFile) {
  const std::string bad = temp_path("otafl_bad_images");
  std::ofstream(bad, std::ios::binary) << std::string("\x00\x00\x08\x04\x00\x00\x00\x01", 8);
  try {
    load_mnist_idx(bad, kLabels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(bad), std::string::npos);
  }
  EXPECT_THROW(load_mnist_idx("/nonexistent/images", kLabels), Error);
  std::filesystem::remove(bad);
}

TEST(Synthetic, SeparableBlobsAreLearned) {
  const Dataset d = blobs(14, 2, 5, 200, 8.0);
  Rng r(1);
  Model m = make_model(ModelKind::kLogReg, 5, 2, 0, r);
  const SmoothnessParams p = logreg_smoothness(d, 0.01);
  for (int t = 0; t < 500; ++t) m.w -= local_gradient(m, d, 0.01) / p.L;
  EXPECT_GE(accuracy(m, d), 0.99);
}

TEST(Synthetic, ErrorsAndDeterminism) {
  Rng r(1);
  EXPECT_THROW(gen_synthetic(3, 4, 0, 1.0, r), Error);
  const Dataset a = blobs(15), b = blobs(15);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
}

TEST(Partition, CompleteDisjointAndProportional) {
  Dataset pool;
  pool.classes = 2;
  pool.X = Vec::LinSpaced(1000, 0, 999);
  pool.y.assign(1000, 0);
  const std::vector<int> w{100, 200, 1500, 1000, 150};
  const auto parts = shards(pool, w, 16);
  std::set<int> seen;
  int total = 0;
  for (std::size_t u = 0; u < parts.size(); ++u) {
    EXPECT_GE(parts[u].size(), 1);
    total += parts[u].size();
    for (int i = 0; i < parts[u].size(); ++i) EXPECT_TRUE(seen.insert(int(parts[u].X(i, 0))).second);
    EXPECT_NEAR(parts[u].size(), 1000.0 * w[u] / 2950.0, 2.0);
  }
  EXPECT_EQ(total, 1000);
  EXPECT_THROW(shards(pool, std::vector<int>(1001, 1), 1), Error);
}

TEST(Holdout, SplitSizes) {
  const Dataset d = blobs(17, 3, 4, 100);
  Rng r(2);
  const auto [train, test] = split_holdout(d, 0.1, r);
  EXPECT_EQ(test.size(), 30);
  EXPECT_EQ(train.size(), 270);
  EXPECT_THROW(split_holdout(d, 1.0, r), Error);
}

TEST(Train, NoiseFreeEqualsCentralizedDescent) {
  const Dataset pool = blobs(18, 3, 4, 100);
  const auto users = shards(pool, {1, 2, 3, 4}, 19);
  Rng r(1);
  const Model m0 = make_model(ModelKind::kLogReg, 4, 3, 0, r);
  TrainSetup s;
  s.T = 40;
  s.eta = 0.2;
  s.rho = 0.5;
  s.ota.ideal = true;
  s.ota.eff.h.resize(4);
  Rng noise(2);
  const TrainHistory h = train(m0, users, pool, s, noise);
  const Dataset all = concat(users);
  Model c = m0;
  for (int t = 0; t < s.T; ++t) {
    EXPECT_NEAR(h.rounds[t].loss, loss(c, all, s.rho), 1e-8);
    c.w -= s.eta * local_gradient(c, all, s.rho);
  }
  EXPECT_LE((h.w_final - c.w).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Train, SingleFullBatchEqualsBatch) {
  const Dataset pool = blobs(20, 3, 4, 50);
  const auto users = shards(pool, {1, 1, 1}, 21);
  Rng r(1);
  const Model m0 = make_model(ModelKind::kLogReg, 4, 3, 0, r);
  TrainSetup s;
  s.T = 10;
  s.eta = 0.1;
  s.ota.ideal = true;
  s.ota.eff.h.resize(3);
  Rng n1(3), n2(3);
  const TrainHistory batch = train(m0, users, pool, s, n1);
  s.descent = DescentKind::kMiniBatch;
  s.batch_size = 1000;
  s.batches_per_round = 1;
  const TrainHistory mini = train(m0, users, pool, s, n2);
  EXPECT_EQ(batch.w_final, mini.w_final);
}

TEST(Train, NoiseFreeLossMonotoneAtInverseL) {
  const Dataset pool = blobs(22, 3, 5, 80);
  const auto users = shards(pool, {1, 1, 1, 1, 1}, 23);
  const SmoothnessParams p = logreg_smoothness(concat(users), 1.0);
  Rng r(1);
  TrainSetup s;
  s.T = 200;
  s.eta = 1.0 / p.L;
  s.ota.ideal = true;
  s.ota.eff.h.resize(5);
  Rng noise(4);
  const TrainHistory h = train(make_model(ModelKind::kLogReg, 5, 3, 0, r), users, pool, s, noise);
  for (std::size_t t = 1; t < h.rounds.size(); ++t) EXPECT_LE(h.rounds[t].loss, h.rounds[t - 1].loss + 1e-15);
  EXPECT_LE(h.final_loss, h.rounds.back().loss + 1e-15);
}

TEST(Batches, SizesAndParse) {
  const Dataset pool = blobs(24, 3, 4, 10);
  const auto b = make_batches({pool}, 8);
  ASSERT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[0].back().size(), 6);
  EXPECT_THROW(make_batches({pool}, 0), Error);
  EXPECT_EQ(parse_descent("minibatch"), DescentKind::kMiniBatch);
  EXPECT_THROW(parse_descent("sgd"), Error);
}
