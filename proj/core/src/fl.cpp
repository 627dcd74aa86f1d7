#include "otafl/fl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace otafl {

Dataset subset(const Dataset& pool, const std::vector<int>& rows) {
  Dataset d;
  d.classes = pool.classes;
  d.X.resize(Eigen::Index(rows.size()), pool.X.cols());
  d.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.X.row(Eigen::Index(i)) = pool.X.row(rows[i]);
    d.y.push_back(pool.y[rows[i]]);
  }
  return d;
}

Dataset concat(const std::vector<Dataset>& parts) {
  Dataset d;
  if (parts.empty()) return d;
  int n = 0;
  for (const auto& p : parts) n += p.size();
  d.classes = parts.front().classes;
  d.X.resize(n, parts.front().X.cols());
  int at = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    d.X.middleRows(at, p.size()) = p.X;
    d.y.insert(d.y.end(), p.y.begin(), p.y.end());
    at += p.size();
  }
  return d;
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "logreg") return ModelKind::kLogReg;
  if (s == "mlp") return ModelKind::kMlp;
  throw Error("fl: unknown model '" + s + "' (expected logreg|mlp)");
}

int Model::D() const {
  if (kind == ModelKind::kLogReg) return classes * (dim + 1);
  return hidden * (dim + 1) + classes * (hidden + 1);
}

Model make_model(ModelKind kind, int dim, int classes, int hidden, Rng& rng) {
  if (classes < 2) throw Error("fl: model needs at least 2 classes");
  Model m;
  m.kind = kind;
  m.dim = dim;
  m.classes = classes;
  m.hidden = kind == ModelKind::kMlp ? hidden : 0;
  m.w = Vec::Zero(m.D());
  if (kind == ModelKind::kMlp) {
    if (hidden < 1 || hidden > 64) throw Error("fl: mlp hidden width must lie in [1,64]");
    std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / dim));
    std::normal_distribution<double> n2(0.0, std::sqrt(2.0 / hidden));
    const int split = hidden * (dim + 1);
    for (int i = 0; i < split; ++i) m.w(i) = (i / hidden) < dim ? n1(rng) : 0.0;
    for (int i = split; i < m.D(); ++i) m.w(i) = ((i - split) / classes) < hidden ? n2(rng) : 0.0;
  }
  return m;
}

namespace {

// Column-major views: W is rows x (cols), last column is the bias.
using MapMat = Eigen::Map<const Mat>;
using MapMatMut = Eigen::Map<Mat>;

Mat softmax_rows(Mat z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

Mat with_bias(const Mat& X) {
  Mat Xb(X.rows(), X.cols() + 1);
  Xb.leftCols(X.cols()) = X;
  Xb.col(X.cols()).setOnes();
  return Xb;
}

struct Forward {
  Mat Xb;      // n x (dim+1)
  Mat H;       // MLP hidden activations with bias column
  Mat Hpre;    // pre-activations
  Mat logits;  // n x C
};

Forward forward(const Model& m, const Mat& X) {
  Forward f;
  f.Xb = with_bias(X);
  if (m.kind == ModelKind::kLogReg) {
    MapMat W(m.w.data(), m.classes, m.dim + 1);
    f.logits = f.Xb * W.transpose();
    return f;
  }
  MapMat W1(m.w.data(), m.hidden, m.dim + 1);
  MapMat W2(m.w.data() + m.hidden * (m.dim + 1), m.classes, m.hidden + 1);
  f.Hpre = f.Xb * W1.transpose();
  f.H = with_bias(f.Hpre.cwiseMax(0.0));
  f.logits = f.H * W2.transpose();
  return f;
}

double cross_entropy(const Mat& logits, const std::vector<int>& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    s += lse - logits(i, y[i]);
  }
  return s;
}

// Gradient of the summed (not averaged) cross-entropy.
Vec ce_gradient_sum(const Model& m, const Mat& X, const std::vector<int>& y) {
  const Forward f = forward(m, X);
  Mat G = softmax_rows(f.logits);
  for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, y[i]) -= 1.0;
  Vec g(m.D());
  if (m.kind == ModelKind::kLogReg) {
    MapMatMut(g.data(), m.classes, m.dim + 1) = G.transpose() * f.Xb;
    return g;
  }
  MapMat W2(m.w.data() + m.hidden * (m.dim + 1), m.classes, m.hidden + 1);
  MapMatMut(g.data() + m.hidden * (m.dim + 1), m.classes, m.hidden + 1) = G.transpose() * f.H;
  Mat back = G * W2.leftCols(m.hidden);
  back.array() *= (f.Hpre.array() > 0.0).cast<double>();
  MapMatMut(g.data(), m.hidden, m.dim + 1) = back.transpose() * f.Xb;
  return g;
}

void check_data(const Model& m, const Dataset& data) {
  if (data.empty()) throw Error("fl: empty dataset");
  if (data.dim() != m.dim) throw Error("fl: dataset dimension does not match the model");
}

}  // namespace

double loss(const Model& m, const Dataset& data, double rho) {
  check_data(m, data);
  return cross_entropy(forward(m, data.X).logits, data.y) / data.size() + 0.5 * rho * m.w.squaredNorm();
}

Vec local_gradient(const Model& m, const Dataset& data, double rho) {
  check_data(m, data);
  return ce_gradient_sum(m, data.X, data.y) / double(data.size()) + rho * m.w;
}

Vec sample_gradient(const Model& m, const Dataset& data, int k, double rho) {
  check_data(m, data);
  return ce_gradient_sum(m, data.X.row(k), {data.y[k]}) + rho * m.w;
}

double accuracy(const Model& m, const Dataset& data) {
  if (data.empty()) return 0.0;
  const Mat logits = forward(m, data.X).logits;
  int hit = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    hit += int(arg) == data.y[i];
  }
  return double(hit) / data.size();
}

Vec global_update(const Vec& w, const Vec& r_hat, double eta, double sum_k) {
  if (!(eta > 0.0)) throw Error("fl: learning rate must be positive");
  return w - (eta / sum_k) * r_hat;
}

namespace {
std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("mnist: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}
}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, int limit) {
  std::ifstream im(images_path, std::ios::binary);
  if (!im) throw Error("mnist: cannot open " + images_path);
  std::ifstream lb(labels_path, std::ios::binary);
  if (!lb) throw Error("mnist: cannot open " + labels_path);
  if (read_be32(im, images_path) != 0x803) throw Error("mnist: bad magic in " + images_path);
  if (read_be32(lb, labels_path) != 0x801) throw Error("mnist: bad magic in " + labels_path);
  const std::uint32_t n = read_be32(im, images_path);
  const std::uint32_t rows = read_be32(im, images_path);
  const std::uint32_t cols = read_be32(im, images_path);
  const std::uint32_t nl = read_be32(lb, labels_path);
  if (n != nl) throw Error("mnist: image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  const int count = limit > 0 ? std::min<int>(limit, int(n)) : int(n);
  const int px = int(rows * cols);
  Dataset d;
  d.classes = 10;
  d.X.resize(count, px);
  d.y.resize(count);
  std::vector<unsigned char> buf(px);
  for (int i = 0; i < count; ++i) {
    if (!im.read(reinterpret_cast<char*>(buf.data()), px)) throw Error("mnist: truncated pixel data in " + images_path);
    for (int p = 0; p < px; ++p) d.X(i, p) = buf[p] / 255.0;
    char c;
    if (!lb.get(c)) throw Error("mnist: truncated label data in " + labels_path);
    const int label = static_cast<unsigned char>(c);
    if (label > 9) throw Error("mnist: label out of range in " + labels_path);
    d.y[i] = label;
  }
  return d;
}

Dataset gen_synthetic(int classes, int dim, int per_class, double margin, Rng& rng) {
  if (classes < 2) throw Error("fl: synthetic data needs at least 2 classes");
  if (per_class < 1) throw Error("fl: empty synthetic pool (per_class < 1)");
  if (dim < 1) throw Error("fl: synthetic dimension must be positive");
  Mat means = Mat::Zero(classes, dim);
  for (int c = 0; c < classes; ++c) {
    // Axis-aligned means, sign-flipped once the axes run out.
    const int axis = c % dim;
    means(c, axis) = (c / dim) % 2 == 0 ? margin : -margin;
  }
  Dataset d;
  d.classes = classes;
  d.X.resize(classes * per_class, dim);
  d.y.resize(classes * per_class);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      const int r = c * per_class + i;
      for (int j = 0; j < dim; ++j) d.X(r, j) = means(c, j) + n01(rng);
      d.y[r] = c;
    }
  return d;
}

namespace {
std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with explicit draws; std::shuffle is implementation-defined.
  for (int i = n - 1; i > 0; --i) {
    const int j = int(std::uniform_int_distribution<long>(0, i)(rng));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}
}  // namespace

std::pair<Dataset, Dataset> split_holdout(const Dataset& pool, double test_fraction, Rng& rng) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw Error("fl: holdout fraction must lie in [0,1)");
  const auto idx = shuffled_indices(pool.size(), rng);
  const int n_test = int(std::lround(test_fraction * pool.size()));
  std::vector<int> test(idx.begin(), idx.begin() + n_test);
  std::vector<int> train(idx.begin() + n_test, idx.end());
  return {subset(pool, train), subset(pool, test)};
}

std::vector<Dataset> partition(const Dataset& pool, const std::vector<int>& weights, Rng& rng) {
  const int users = int(weights.size());
  if (users == 0) throw Error("fl: no users to partition for");
  if (pool.size() < users) throw Error("fl: pool of " + std::to_string(pool.size()) + " samples cannot cover " +
                                       std::to_string(users) + " users");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const int spare = pool.size() - users;  // one sample reserved per user
  std::vector<int> size(users, 1);
  std::vector<std::pair<double, int>> rem;
  int used = 0;
  for (int u = 0; u < users; ++u) {
    const double share = spare * weights[u] / total;
    const int whole = int(std::floor(share));
    size[u] += whole;
    used += whole;
    rem.push_back({share - whole, u});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int i = 0; i < spare - used; ++i) ++size[rem[i].second];

  const auto idx = shuffled_indices(pool.size(), rng);
  std::vector<Dataset> out;
  int at = 0;
  for (int u = 0; u < users; ++u) {
    out.push_back(subset(pool, std::vector<int>(idx.begin() + at, idx.begin() + at + size[u])));
    at += size[u];
  }
  return out;
}

std::vector<std::vector<Dataset>> make_batches(const std::vector<Dataset>& users, int batch_size) {
  if (batch_size < 1) throw Error("fl: batch size must be positive");
  std::vector<std::vector<Dataset>> out(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    const int n = users[u].size();
    for (int s = 0; s < n; s += batch_size) {
      std::vector<int> rows;
      for (int k = s; k < std::min(n, s + batch_size); ++k) rows.push_back(k);
      out[u].push_back(subset(users[u], rows));
    }
  }
  return out;
}

DescentKind parse_descent(const std::string& s) {
  if (s == "batch") return DescentKind::kBatch;
  if (s == "minibatch") return DescentKind::kMiniBatch;
  throw Error("fl: unknown descent '" + s + "' (expected batch|minibatch)");
}

double global_loss(const Model& m, const std::vector<Dataset>& users, double rho) {
  double s = 0.0;
  int n = 0;
  for (const auto& d : users) {
    s += d.size() * loss(m, d, rho);
    n += d.size();
  }
  return s / n;
}

Vec global_gradient(const Model& m, const std::vector<Dataset>& users, double rho) {
  Vec g = Vec::Zero(m.D());
  int n = 0;
  for (const auto& d : users) {
    g += d.size() * local_gradient(m, d, rho);
    n += d.size();
  }
  return g / n;
}

TrainHistory train(Model model, const std::vector<Dataset>& users, const Dataset& test, const TrainSetup& setup,
                   Rng& noise_rng) {
  OtaContext ctx = setup.ota;
  std::vector<int> K;
  for (const auto& d : users) K.push_back(d.size());
  std::vector<std::vector<Dataset>> batches;
  if (setup.descent == DescentKind::kMiniBatch) batches = make_batches(users, setup.batch_size);
  const int I = setup.descent == DescentKind::kMiniBatch ? setup.batches_per_round : 1;
  if (I < 1) throw Error("fl: batches per round must be positive");

  TrainHistory h;
  for (int t = 0; t < setup.T; ++t) {
    if (setup.before_round) setup.before_round(t, ctx);
    RoundRecord rec;
    rec.round = t;
    rec.loss = global_loss(model, users, setup.rho);
    if (!std::isfinite(rec.loss)) throw Error("fl: non-finite loss at round " + std::to_string(t));
    rec.test_acc = accuracy(model, test);
    const Vec grad_true = global_gradient(model, users, setup.rho);
    rec.grad_norm2 = grad_true.squaredNorm();

    Vec step = Vec::Zero(model.D());
    Vec e1 = Vec::Zero(model.D());
    Vec e2 = Vec::Zero(model.D());
    for (int i = 0; i < I; ++i) {
      std::vector<Vec> grads;
      std::vector<int> k_round;
      for (std::size_t u = 0; u < users.size(); ++u) {
        const Dataset& d = setup.descent == DescentKind::kBatch
                               ? users[u]
                               : batches[u][std::size_t(t * I + i) % batches[u].size()];
        grads.push_back(local_gradient(model, d, setup.rho));
        k_round.push_back(d.size());
      }
      OtaRoundResult r = ota_round(grads, k_round, ctx, noise_rng);
      const double sk = std::accumulate(k_round.begin(), k_round.end(), 0.0);
      decompose_error(r, grad_true, k_round);
      step += r.r_hat / sk;
      e1 += r.e1;
      e2 += r.e2;
      if (i == 0) {
        rec.mu = r.mu;
        if (setup.closed_form && !ctx.ideal) rec.closed_form = setup.closed_form(ctx, k_round, r.nu);
      }
    }
    rec.e1_norm2 = (e1 / I).squaredNorm();
    rec.e2_norm2 = (e2 / I).squaredNorm();
    model.w = model.w - setup.eta * (step / I);
    h.rounds.push_back(rec);
  }
  h.w_final = model.w;
  h.final_loss = global_loss(model, users, setup.rho);
  if (!std::isfinite(h.final_loss)) throw Error("fl: non-finite loss at round " + std::to_string(setup.T));
  h.final_test_acc = accuracy(model, test);
  return h;
}

}  // namespace otafl
