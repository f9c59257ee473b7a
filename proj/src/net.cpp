#include "mahe/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"
#include "mahe/rng.hpp"

namespace mahe {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// z > 0 mask; the subgradient at exactly 0 is taken as 0
Matrix relu_mask(const Matrix& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

struct ForwardTrace {
  std::vector<Matrix> z;  // pre-activations per layer
  std::vector<Matrix> a;  // activations, a[0] = input
};

ForwardTrace run_forward(const Network& net, const Matrix& X) {
  ForwardTrace t;
  const Index L = net.n_layers();
  t.a.reserve(static_cast<std::size_t>(L) + 1);
  t.z.reserve(static_cast<std::size_t>(L));
  t.a.push_back(X);
  for (Index l = 0; l < L; ++l) {
    Matrix z = t.a.back() * net.weight(l).transpose();
    z.rowwise() += net.bias(l).transpose();
    if (l + 1 < L) {
      t.a.push_back(relu(z));
    } else if (net.config().output == OutputHead::logistic) {
      t.a.push_back(z.unaryExpr([](double v) { return sigmoid(v); }));
    } else {
      t.a.push_back(z);
    }
    t.z.push_back(std::move(z));
  }
  return t;
}

struct Gradients {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
};

// Weighted data-loss gradient over a batch: identity head uses squared error,
// logistic head uses log-loss; each sample's term is scaled by w_i / sum(w).
// Targets for match_logits are fit by the pre-sigmoid output.
Gradients backprop(const Network& net, const ForwardTrace& t, const Vector& y, const Vector& w,
                   bool match_logits) {
  const Index L = net.n_layers();
  const double wsum = w.sum();
  Gradients g;
  g.dW.resize(static_cast<std::size_t>(L));
  g.db.resize(static_cast<std::size_t>(L));

  const Vector yhat = t.a.back().col(0);
  Vector dz_out;
  if (net.config().output == OutputHead::logistic && !match_logits) {
    dz_out = yhat - y;  // d(log-loss)/dz through the sigmoid
  } else if (match_logits) {
    dz_out = 2.0 * (t.z.back().col(0) - y);
  } else {
    dz_out = 2.0 * (yhat - y);
  }
  dz_out = dz_out.cwiseProduct(w) / wsum;

  Matrix dz = dz_out;
  for (Index l = L - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    g.dW[li] = dz.transpose() * t.a[li];
    g.db[li] = dz.colwise().sum().transpose();
    if (l > 0) {
      Matrix da = dz * net.weight(l);
      dz = da.cwiseProduct(relu_mask(t.z[li - 1]));
    }
  }
  return g;
}

double data_loss(const Network& net, const Matrix& X, const Vector& y, const Vector& w,
                 bool match_logits) {
  const double wsum = w.sum();
  if (wsum <= 0.0) throw NumericalError("training data has nonpositive total weight");
  if (net.config().output == OutputHead::logistic && !match_logits) {
    const Vector p = net.forward(X);
    double acc = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      const double q = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
      acc += w[i] * -(y[i] * std::log(q) + (1.0 - y[i]) * std::log1p(-q));
    }
    return acc / wsum;
  }
  const Vector out = match_logits ? net.forward_linear(X) : net.forward(X);
  const Vector d = out - y;
  return d.cwiseProduct(d).dot(w) / wsum;
}

double penalty(const Network& net) {
  double acc = 0.0;
  if (net.config().l1_coeff > 0.0)
    acc += net.config().l1_coeff * net.weight(0).cwiseAbs().sum();
  if (net.config().l2_coeff > 0.0) {
    double sq = 0.0;
    for (Index l = 0; l < net.n_layers(); ++l) sq += net.weight(l).squaredNorm();
    acc += net.config().l2_coeff * sq;
  }
  return acc;
}

void apply_step(Network& net, const Gradients& g, double lr) {
  const double l2 = net.config().l2_coeff;
  for (Index l = 0; l < net.n_layers(); ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    Matrix grad = g.dW[li];
    if (l2 > 0.0) grad += 2.0 * l2 * net.weight(l);
    net.weight(l) -= lr * grad;
    net.bias(l) -= lr * g.db[li];
  }
  const double l1 = net.config().l1_coeff;
  if (l1 > 0.0) {
    const double t = lr * l1;
    net.weight(0) = net.weight(0).unaryExpr([t](double v) {
      const double m = std::abs(v) - t;
      return m > 0.0 ? (v > 0.0 ? m : -m) : 0.0;
    });
  }
}

// Optimizer state carried across steps of one training run.  Plain gradient
// descent delegates to apply_step; adam keeps first/second moment estimates
// and applies the L1 proximal operator with a per-parameter threshold scaled
// by the same adaptive step size as the gradient (prox-gradient Adam).
struct Stepper {
  Optimizer kind;
  double lr;
  std::vector<Matrix> mW, vW;
  std::vector<Vector> mb, vb;
  long t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Stepper(const Network& net)
      : kind(net.config().optimizer), lr(net.config().learning_rate) {
    if (kind != Optimizer::adam) return;
    const Index L = net.n_layers();
    for (Index l = 0; l < L; ++l) {
      mW.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      vW.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      mb.push_back(Vector::Zero(net.bias(l).size()));
      vb.push_back(Vector::Zero(net.bias(l).size()));
    }
  }

  void step(Network& net, const Gradients& g) {
    if (kind != Optimizer::adam) {
      apply_step(net, g, lr);
      return;
    }
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    const double l2 = net.config().l2_coeff;
    const double l1 = net.config().l1_coeff;
    for (Index l = 0; l < net.n_layers(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      Matrix grad = g.dW[li];
      if (l2 > 0.0) grad += 2.0 * l2 * net.weight(l);
      mW[li] = kBeta1 * mW[li] + (1.0 - kBeta1) * grad;
      vW[li] = kBeta2 * vW[li] + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const Matrix denom = ((vW[li] / c2).cwiseSqrt().array() + kEps).matrix();
      net.weight(l) -= (lr / c1) * mW[li].cwiseQuotient(denom);
      mb[li] = kBeta1 * mb[li] + (1.0 - kBeta1) * g.db[li];
      vb[li] = kBeta2 * vb[li] + (1.0 - kBeta2) * g.db[li].cwiseProduct(g.db[li]);
      const Vector denb = ((vb[li] / c2).cwiseSqrt().array() + kEps).matrix();
      net.bias(l) -= (lr / c1) * mb[li].cwiseQuotient(denb);
      if (l == 0 && l1 > 0.0) {
        const Matrix thresh = (lr * l1) * denom.cwiseInverse();
        net.weight(0) = net.weight(0).binaryExpr(thresh, [](double v, double th) {
          const double m = std::abs(v) - th;
          return m > 0.0 ? (v > 0.0 ? m : -m) : 0.0;
        });
      }
    }
  }
};

Matrix select_rows(const Matrix& X, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
  return out;
}

Vector select(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace

void NetworkConfig::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("network needs at least input and output sizes");
  for (Index s : layer_sizes)
    if (s < 1) throw ConfigError("network layer sizes must be positive");
  if (layer_sizes.back() != 1) throw ConfigError("network output size must be 1");
  if (l1_coeff < 0.0 || l2_coeff < 0.0) throw ConfigError("regularization must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (batch_size < 0) throw ConfigError("batch_size must be non-negative");
}

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::size_t L = cfg_.layer_sizes.size() - 1;
  weights_.resize(L);
  biases_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const Index fan_in = cfg_.layer_sizes[l];
    const Index fan_out = cfg_.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix W(fan_out, fan_in);
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c) W(r, c) = rng.uniform(-limit, limit);
    weights_[l] = std::move(W);
    biases_[l] = Vector::Zero(fan_out);
  }
  if (cfg_.zero_init_output) {
    weights_.back().setZero();
    biases_.back().setZero();
  }
}

Vector Network::forward(const Matrix& X) const {
  if (X.cols() != input_size()) throw NumericalError("forward: input width mismatch");
  return run_forward(*this, X).a.back().col(0);
}

Vector Network::forward_linear(const Matrix& X) const {
  if (X.cols() != input_size()) throw NumericalError("forward: input width mismatch");
  return run_forward(*this, X).z.back().col(0);
}

bool Network::same_parameters(const Network& other) const {
  if (weights_.size() != other.weights_.size()) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].rows() != other.weights_[l].rows() ||
        weights_[l].cols() != other.weights_[l].cols())
      return false;
    if (!weights_[l].cwiseEqual(other.weights_[l]).all()) return false;
    if (!biases_[l].cwiseEqual(other.biases_[l]).all()) return false;
  }
  return true;
}

std::pair<Network, TrainReport> train(const NetworkConfig& cfg, const WeightedData& train_set,
                                      const WeightedData& val_set) {
  cfg.validate();
  if (train_set.X.rows() == 0) throw ConfigError("train: empty training set");
  if (val_set.X.rows() == 0) throw ConfigError("train: empty validation set");
  if (train_set.X.rows() != train_set.y.size() || train_set.X.rows() != train_set.w.size())
    throw ConfigError("train: training rows/targets/weights disagree");
  if ((train_set.w.array() < 0.0).any()) throw ConfigError("train: negative sample weight");

  Network net(cfg);
  const Index n = train_set.X.rows();

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng shuffle_rng(derive_seed(cfg.seed, 0x6d696e6962617463ULL));
  Stepper stepper(net);

  Network best = net;
  double best_val = data_loss(net, val_set.X, val_set.y, val_set.w, false);
  int strikes = 0;
  int epochs = 0;
  bool early = false;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    epochs = epoch;
    if (cfg.batch_size > 0 && cfg.batch_size < n) {
      shuffle_rng.shuffle(order.begin(), order.end());
      for (Index start = 0; start < n; start += cfg.batch_size) {
        const Index len = std::min(cfg.batch_size, n - start);
        std::vector<Index> idx(order.begin() + start, order.begin() + start + len);
        const Matrix Xb = select_rows(train_set.X, idx);
        const Vector yb = select(train_set.y, idx);
        const Vector wb = select(train_set.w, idx);
        if (wb.sum() <= 0.0) continue;
        const ForwardTrace t = run_forward(net, Xb);
        stepper.step(net, backprop(net, t, yb, wb, false));
      }
    } else {
      const ForwardTrace t = run_forward(net, train_set.X);
      stepper.step(net, backprop(net, t, train_set.y, train_set.w, false));
    }

    const double tr = data_loss(net, train_set.X, train_set.y, train_set.w, false);
    const double va = data_loss(net, val_set.X, val_set.y, val_set.w, false);
    if (!std::isfinite(tr) || !std::isfinite(va))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch));

    if (va < best_val) {
      best_val = va;
      best = net;
      strikes = 0;
    } else if (++strikes >= cfg.patience) {
      early = true;
      break;
    }
  }

  if (!cfg.restore_best) best = std::move(net);

  TrainReport report;
  report.epochs_run = epochs;
  report.stopped_early = early;
  report.final_train_loss =
      data_loss(best, train_set.X, train_set.y, train_set.w, false) + penalty(best);
  report.final_val_loss = data_loss(best, val_set.X, val_set.y, val_set.w, false);
  return {std::move(best), report};
}

std::pair<Network, TrainReport> train_standardized(const NetworkConfig& cfg,
                                                   const WeightedData& train_set,
                                                   const WeightedData& val_set) {
  if (cfg.output != OutputHead::identity)
    throw ConfigError("train_standardized: identity output heads only");
  if (train_set.X.rows() == 0) throw ConfigError("train: empty training set");
  const double wsum = train_set.w.sum();
  if (wsum <= 0.0) throw ConfigError("train_standardized: nonpositive total weight");
  const Index p = train_set.X.cols();

  Vector mu(p), scale(p);
  for (Index j = 0; j < p; ++j) {
    mu[j] = train_set.X.col(j).dot(train_set.w) / wsum;
    const Vector c = (train_set.X.col(j).array() - mu[j]).matrix();
    const double var = c.cwiseProduct(c).dot(train_set.w) / wsum;
    scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  const double ymu = train_set.y.dot(train_set.w) / wsum;
  const Vector yc = (train_set.y.array() - ymu).matrix();
  const double yvar = yc.cwiseProduct(yc).dot(train_set.w) / wsum;
  const double ysd = yvar > 0.0 ? std::sqrt(yvar) : 1.0;

  auto standardize = [&](const WeightedData& d) {
    WeightedData out;
    out.X = (d.X.rowwise() - mu.transpose()) * scale.cwiseInverse().asDiagonal();
    out.y = ((d.y.array() - ymu) / ysd).matrix();
    out.w = d.w;
    return out;
  };

  auto [net, report] = train(cfg, standardize(train_set), standardize(val_set));

  // fold the input transform into the first layer and the target transform
  // into the output layer, exactly
  net.bias(0) -= net.weight(0) * mu.cwiseQuotient(scale);
  net.weight(0) = net.weight(0) * scale.cwiseInverse().asDiagonal();
  const Index last = net.n_layers() - 1;
  net.weight(last) *= ysd;
  net.bias(last) = (net.bias(last).array() * ysd + ymu).matrix();
  return {std::move(net), report};
}

Network fine_tune(const Network& net, const WeightedData& data, int steps, double learning_rate,
                  bool match_logits) {
  if (steps < 0) throw ConfigError("fine_tune: negative step count");
  if (data.X.cols() != net.input_size()) throw ConfigError("fine_tune: feature width mismatch");
  Network out = net;
  for (int step = 1; step <= steps; ++step) {
    const ForwardTrace t = run_forward(out, data.X);
    apply_step(out, backprop(out, t, data.y, data.w, match_logits), learning_rate);
    const double loss = data_loss(out, data.X, data.y, data.w, match_logits);
    if (!std::isfinite(loss))
      throw DivergenceError("fine_tune diverged at step " + std::to_string(step));
  }
  return out;
}

GradCheckResult gradient_check(const Network& net, const Vector& x, double y) {
  const Matrix X = x.transpose();
  const Vector yv = Vector::Constant(1, y);
  const Vector w = Vector::Ones(1);

  GradCheckResult res;
  {
    const ForwardTrace t = run_forward(net, X);
    for (Index l = 0; l + 1 < net.n_layers(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      const double scale = 1.0 + t.a[li].cwiseAbs().maxCoeff();
      if ((t.z[li].cwiseAbs().array() < 1e-4 * scale).any()) res.near_kink = true;
    }
  }

  const ForwardTrace t = run_forward(net, X);
  const Gradients g = backprop(net, t, yv, w, false);

  Network probe = net;
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double lp = data_loss(probe, X, yv, w, false);
    param = keep - h;
    const double lm = data_loss(probe, X, yv, w, false);
    param = keep;
    const double numeric = (lp - lm) / (2.0 * h);
    const double rel =
        std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, rel);
  };
  for (Index l = 0; l < net.n_layers(); ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    for (Index r = 0; r < probe.weight(l).rows(); ++r)
      for (Index c = 0; c < probe.weight(l).cols(); ++c)
        check(probe.weight(l)(r, c), g.dW[li](r, c));
    for (Index r = 0; r < probe.bias(l).size(); ++r) check(probe.bias(l)[r], g.db[li][r]);
  }
  res.max_rel_error = worst;
  return res;
}

std::string Network::to_json() const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["layer_sizes"] = cfg_.layer_sizes;
  doc["activation"] = cfg_.output == OutputHead::logistic ? "logistic" : "identity";
  doc["seed"] = cfg_.seed;
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < weights_[l].rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < weights_[l].cols(); ++c) row.push_back(weights_[l](r, c));
      rows.push_back(std::move(row));
    }
    ws.push_back(std::move(rows));
    nlohmann::json b = nlohmann::json::array();
    for (Index r = 0; r < biases_[l].size(); ++r) b.push_back(biases_[l][r]);
    bs.push_back(std::move(b));
  }
  doc["weights"] = std::move(ws);
  doc["biases"] = std::move(bs);
  return doc.dump();
}

Network Network::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network json: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version"))
    throw FormatError("network json: missing version");
  if (doc["version"].get<int>() != 1)
    throw FormatError("network json: unsupported version " + doc["version"].dump());
  Network net;
  try {
    net.cfg_.layer_sizes = doc.at("layer_sizes").get<std::vector<Index>>();
    const std::string act = doc.at("activation").get<std::string>();
    if (act == "logistic")
      net.cfg_.output = OutputHead::logistic;
    else if (act == "identity")
      net.cfg_.output = OutputHead::identity;
    else
      throw FormatError("network json: unknown activation " + act);
    net.cfg_.seed = doc.value("seed", std::uint64_t{0});
    const auto& ws = doc.at("weights");
    const auto& bs = doc.at("biases");
    const std::size_t L = net.cfg_.layer_sizes.size() - 1;
    if (ws.size() != L || bs.size() != L)
      throw FormatError("network json: layer count mismatch");
    net.weights_.resize(L);
    net.biases_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      const Index fan_in = net.cfg_.layer_sizes[l];
      const Index fan_out = net.cfg_.layer_sizes[l + 1];
      if (static_cast<Index>(ws[l].size()) != fan_out)
        throw FormatError("network json: weight shape mismatch");
      Matrix W(fan_out, fan_in);
      for (Index r = 0; r < fan_out; ++r) {
        const auto& row = ws[l][static_cast<std::size_t>(r)];
        if (static_cast<Index>(row.size()) != fan_in)
          throw FormatError("network json: weight shape mismatch");
        for (Index c = 0; c < fan_in; ++c) W(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
      net.weights_[l] = std::move(W);
      if (static_cast<Index>(bs[l].size()) != fan_out)
        throw FormatError("network json: bias shape mismatch");
      Vector b(fan_out);
      for (Index r = 0; r < fan_out; ++r) b[r] = bs[l][static_cast<std::size_t>(r)].get<double>();
      net.biases_[l] = std::move(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network json: ") + e.what());
  }
  for (std::size_t l = 0; l < net.weights_.size(); ++l)
    if (!net.weights_[l].allFinite() || !net.biases_[l].allFinite())
      throw FormatError("network json: non-finite parameter");
  return net;
}

}  // namespace mahe
