#include <cmath>

#include "doctest.h"
#include "mahe/errors.hpp"
#include "mahe/net.hpp"
#include "mahe/rng.hpp"

using namespace mahe;

namespace {

NetworkConfig small_cfg(std::vector<Index> sizes, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.layer_sizes = std::move(sizes);
  cfg.seed = seed;
  return cfg;
}

// y = 3*x0 - 2*x1 + 1 with a little curvature from x0*x1
WeightedData toy_data(Index n, std::uint64_t seed, double curvature = 0.0) {
  Rng rng(seed);
  WeightedData d;
  d.X.resize(n, 2);
  d.y.resize(n);
  d.w = Vector::Ones(n);
  for (Index i = 0; i < n; ++i) {
    d.X(i, 0) = rng.uniform(-1.0, 1.0);
    d.X(i, 1) = rng.uniform(-1.0, 1.0);
    d.y[i] = 3.0 * d.X(i, 0) - 2.0 * d.X(i, 1) + 1.0 + curvature * d.X(i, 0) * d.X(i, 1);
  }
  return d;
}

double first_layer_l1(const Network& net) { return net.weight(0).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("forward matches a hand computation") {
  Network net(small_cfg({2, 2, 1}, 3));
  net.weight(0) << 1.0, -2.0, 0.5, 1.5;  // fan_out x fan_in
  net.bias(0) << 0.25, -0.5;
  net.weight(1) << 2.0, -1.0;
  net.bias(1) << 0.125;

  Matrix X(2, 2);
  X << 1.0, 0.5, -1.0, 2.0;
  const Vector out = net.forward(X);

  for (Index r = 0; r < 2; ++r) {
    const double h0 = std::max(0.0, 1.0 * X(r, 0) - 2.0 * X(r, 1) + 0.25);
    const double h1 = std::max(0.0, 0.5 * X(r, 0) + 1.5 * X(r, 1) - 0.5);
    const double expect = 2.0 * h0 - 1.0 * h1 + 0.125;
    CHECK(out[r] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("logistic head squashes the linear output") {
  NetworkConfig cfg = small_cfg({2, 3, 1}, 7);
  cfg.output = OutputHead::logistic;
  Network net(cfg);
  Matrix X(4, 2);
  X << 0.3, -0.4, 1.0, 1.0, -1.0, 0.2, 0.0, 0.0;
  const Vector lin = net.forward_linear(X);
  const Vector prob = net.forward(X);
  for (Index i = 0; i < 4; ++i) {
    CHECK(prob[i] == doctest::Approx(1.0 / (1.0 + std::exp(-lin[i]))).epsilon(1e-15));
    CHECK(prob[i] > 0.0);
    CHECK(prob[i] < 1.0);
  }
}

TEST_CASE("config validation rejects malformed settings") {
  NetworkConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // no layers
  cfg.layer_sizes = {2, 4, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // output must be 1
  cfg.layer_sizes = {2, 4, 1};
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.learning_rate = 1e-3;
  cfg.l1_coeff = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training recovers a linear function") {
  for (const Optimizer opt : {Optimizer::gd, Optimizer::adam}) {
    CAPTURE(static_cast<int>(opt));
    NetworkConfig cfg = small_cfg({2, 16, 1}, 11);
    cfg.optimizer = opt;
    cfg.learning_rate = opt == Optimizer::adam ? 5e-3 : 5e-2;
    cfg.max_epochs = 800;
    cfg.patience = 800;
    const WeightedData train_set = toy_data(256, 5);
    const WeightedData val_set = toy_data(64, 6);
    auto [net, report] = train(cfg, train_set, val_set);
    CHECK(report.epochs_run > 0);
    const WeightedData test_set = toy_data(128, 9);
    const Vector pred = net.forward(test_set.X);
    const double mse = (pred - test_set.y).squaredNorm() / 128.0;
    CHECK(mse < 1e-2);
  }
}

TEST_CASE("training is deterministic in the seed") {
  for (const Optimizer opt : {Optimizer::gd, Optimizer::adam}) {
    CAPTURE(static_cast<int>(opt));
    NetworkConfig cfg = small_cfg({2, 8, 1}, 21);
    cfg.optimizer = opt;
    cfg.max_epochs = 60;
    cfg.batch_size = 32;  // exercises the shuffling path too
    const WeightedData train_set = toy_data(100, 1);
    const WeightedData val_set = toy_data(30, 2);
    const Network a = train(cfg, train_set, val_set).first;
    const Network b = train(cfg, train_set, val_set).first;
    CHECK(a.same_parameters(b));

    cfg.seed = 22;
    const Network c = train(cfg, train_set, val_set).first;
    CHECK_FALSE(a.same_parameters(c));
  }
}

TEST_CASE("sample weights behave like duplication") {
  // fitting {x, duplicated twice} equals fitting {x with weight 2}
  WeightedData dup;
  dup.X.resize(6, 1);
  dup.X << 0.1, 0.1, 0.4, 0.4, -0.3, -0.3;
  dup.y.resize(6);
  dup.y << 1.0, 1.0, 2.0, 2.0, -1.0, -1.0;
  dup.w = Vector::Ones(6);

  WeightedData weighted;
  weighted.X.resize(3, 1);
  weighted.X << 0.1, 0.4, -0.3;
  weighted.y.resize(3);
  weighted.y << 1.0, 2.0, -1.0;
  weighted.w = Vector::Constant(3, 2.0);

  const WeightedData val_set = toy_data(16, 3);
  for (const Optimizer opt : {Optimizer::gd, Optimizer::adam}) {
    CAPTURE(static_cast<int>(opt));
    NetworkConfig cfg = small_cfg({1, 4, 1}, 13);
    cfg.optimizer = opt;
    cfg.max_epochs = 200;
    cfg.patience = 200;
    cfg.batch_size = 0;  // full batch keeps the two datasets aligned step by step
    const Network a = train(cfg, dup, {val_set.X.col(0), val_set.y, val_set.w}).first;
    const Network b = train(cfg, weighted, {val_set.X.col(0), val_set.y, val_set.w}).first;
    Matrix probe(5, 1);
    probe << -0.5, -0.1, 0.0, 0.2, 0.6;
    const Vector pa = a.forward(probe);
    const Vector pb = b.forward(probe);
    for (Index i = 0; i < probe.rows(); ++i)
      CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-9));
  }
}

TEST_CASE("first-layer L1 shrinks weights and zeroes noise features under adam") {
  // y depends only on x0; x1 is noise
  Rng rng(31);
  WeightedData d;
  d.X.resize(300, 2);
  d.y.resize(300);
  d.w = Vector::Ones(300);
  for (Index i = 0; i < 300; ++i) {
    d.X(i, 0) = rng.uniform(-1.0, 1.0);
    d.X(i, 1) = rng.uniform(-1.0, 1.0);
    d.y[i] = 2.0 * d.X(i, 0);
  }
  const WeightedData val_set{d.X.topRows(60), d.y.head(60), d.w.head(60)};

  NetworkConfig cfg = small_cfg({2, 8, 1}, 17);
  cfg.optimizer = Optimizer::adam;
  cfg.learning_rate = 5e-3;
  cfg.max_epochs = 1500;
  cfg.patience = 1500;
  cfg.restore_best = false;

  cfg.l1_coeff = 0.0;
  const Network loose = train(cfg, d, val_set).first;
  cfg.l1_coeff = 5e-3;
  const Network tight = train(cfg, d, val_set).first;

  CHECK(first_layer_l1(tight) < first_layer_l1(loose));
  // the proximal step produces exact zeros on the noise column
  CHECK(tight.weight(0).col(1).cwiseAbs().maxCoeff() == 0.0);
  // the signal column survives
  CHECK(tight.weight(0).col(0).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("restore_best keeps the best-validation snapshot") {
  // tiny train set + long budget: the net overfits, so the final weights
  // validate worse than the best snapshot
  const WeightedData train_set = toy_data(12, 41, 5.0);
  const WeightedData val_set = toy_data(200, 42, 5.0);
  NetworkConfig cfg = small_cfg({2, 32, 1}, 43);
  cfg.learning_rate = 5e-2;
  cfg.max_epochs = 4000;
  cfg.patience = 4000;

  cfg.restore_best = true;
  auto [best, best_report] = train(cfg, train_set, val_set);
  cfg.restore_best = false;
  auto [last, last_report] = train(cfg, train_set, val_set);

  CHECK(best_report.final_val_loss <= last_report.final_val_loss + 1e-12);
  // different snapshots of the same trajectory
  CHECK_FALSE(best.same_parameters(last));
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(99);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    NetworkConfig cfg = small_cfg({3, 4, 3, 1}, 1000 + static_cast<std::uint64_t>(t));
    if (t % 2 == 1) cfg.output = OutputHead::logistic;
    const Network net(cfg);
    Vector x(3);
    GradCheckResult res;
    // criterion: kink-free samples; redraw while a ReLU sits on its corner
    for (int attempt = 0; attempt < 50; ++attempt) {
      for (Index i = 0; i < 3; ++i) x[i] = rng.uniform(-1.0, 1.0);
      const double y = cfg.output == OutputHead::logistic ? (rng.uniform() < 0.5 ? 0.0 : 1.0)
                                                          : rng.uniform(-2.0, 2.0);
      res = gradient_check(net, x, y);
      if (!res.near_kink) break;
    }
    if (res.near_kink) continue;
    ++checked;
    CHECK(res.max_rel_error <= 1e-4);
  }
  CHECK(checked >= 95);  // kinks on fresh random nets are rare
}

TEST_CASE("fine_tune moves toward new targets and leaves the input net alone") {
  NetworkConfig cfg = small_cfg({2, 8, 1}, 51);
  cfg.max_epochs = 300;
  cfg.patience = 300;
  const WeightedData d = toy_data(128, 52);
  const WeightedData val_set = toy_data(32, 53);
  const Network net = train(cfg, d, val_set).first;

  WeightedData shifted = d;
  shifted.y.array() += 2.0;
  const double before = (net.forward(shifted.X) - shifted.y).squaredNorm();
  const Network tuned = fine_tune(net, shifted, 400, 1e-2);
  const double after = (tuned.forward(shifted.X) - shifted.y).squaredNorm();
  CHECK(after < 0.5 * before);

  // the original handle is untouched
  const Network reference = train(cfg, d, val_set).first;
  CHECK(net.same_parameters(reference));
}

TEST_CASE("fine_tune can match logits of a logistic net") {
  NetworkConfig cfg = small_cfg({2, 8, 1}, 61);
  cfg.output = OutputHead::logistic;
  Network net(cfg);

  const WeightedData d = toy_data(64, 62);
  Vector logits = net.forward_linear(d.X);
  logits.array() += 1.5;  // push all log-odds up
  const WeightedData target{d.X, logits, d.w};
  const Network tuned = fine_tune(net, target, 500, 1e-2, /*match_logits=*/true);
  const double err = (tuned.forward_linear(d.X) - logits).cwiseAbs().maxCoeff();
  CHECK(err < 0.5);
  // outputs remain probabilities
  const Vector p = tuned.forward(d.X);
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);
}

TEST_CASE("json round trip preserves parameters bit for bit") {
  NetworkConfig cfg = small_cfg({3, 5, 2, 1}, 71);
  cfg.output = OutputHead::logistic;
  cfg.l1_coeff = 1e-4;
  const WeightedData d{Matrix::Random(40, 3), Vector::Random(40).cwiseAbs(), Vector::Ones(40)};
  const WeightedData val_set{Matrix::Random(10, 3), Vector::Random(10).cwiseAbs(),
                             Vector::Ones(10)};
  NetworkConfig tc = cfg;
  tc.max_epochs = 30;
  const Network net = train(tc, d, val_set).first;

  const Network back = Network::from_json(net.to_json());
  CHECK(back.same_parameters(net));
  CHECK(back.config().output == OutputHead::logistic);
  CHECK(back.config().layer_sizes == net.config().layer_sizes);
  const Matrix probe = Matrix::Random(7, 3);
  const Vector a = net.forward(probe);
  const Vector b = back.forward(probe);
  for (Index i = 0; i < 7; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("from_json rejects malformed documents") {
  CHECK_THROWS_AS(Network::from_json("{}"), FormatError);
  CHECK_THROWS_AS(Network::from_json("not json"), FormatError);
}

TEST_CASE("zero_init_output starts predictions at zero") {
  NetworkConfig cfg = small_cfg({2, 6, 1}, 81);
  cfg.zero_init_output = true;
  const Network net(cfg);
  const Matrix X = Matrix::Random(5, 2);
  CHECK(net.forward(X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train_standardized handles badly scaled features") {
  // y = 3*a + 0.002*b where b ~ 1000x the scale of a
  Rng rng(91);
  WeightedData d;
  d.X.resize(400, 2);
  d.y.resize(400);
  d.w = Vector::Ones(400);
  for (Index i = 0; i < 400; ++i) {
    d.X(i, 0) = rng.uniform(-0.01, 0.01);
    d.X(i, 1) = rng.uniform(-10.0, 10.0);
    d.y[i] = 300.0 * d.X(i, 0) + 0.3 * d.X(i, 1);
  }
  const WeightedData val_set{d.X.topRows(80), d.y.head(80), d.w.head(80)};

  NetworkConfig cfg = small_cfg({2, 16, 1}, 92);
  cfg.optimizer = Optimizer::adam;
  cfg.learning_rate = 5e-3;
  cfg.max_epochs = 1200;
  cfg.patience = 1200;
  const Network net = train_standardized(cfg, d, val_set).first;

  // the returned net operates on raw coordinates
  const Vector pred = net.forward(d.X);
  const double r2 = 1.0 - (pred - d.y).squaredNorm() / (d.y.array() - d.y.mean()).square().sum();
  CHECK(r2 > 0.98);

  NetworkConfig logodds = cfg;
  logodds.output = OutputHead::logistic;
  CHECK_THROWS_AS(train_standardized(logodds, d, val_set), ConfigError);
}

TEST_CASE("training throws on nonpositive total weight") {
  WeightedData d = toy_data(10, 7);
  d.w.setZero();
  NetworkConfig cfg = small_cfg({2, 4, 1}, 1);
  cfg.max_epochs = 5;
  CHECK_THROWS_AS(train(cfg, d, toy_data(5, 8)), NumericalError);
}
