#include "mahe/synthfn.hpp"

#include <cmath>
#include <set>
#include <utility>

#include "mahe/errors.hpp"
#include "mahe/rng.hpp"

namespace mahe {

namespace {

double tail_sum(const Vector& x, Index from) {
  double s = 0.0;
  for (Index i = from; i < x.size(); ++i) s += x[i];
  return s;
}

}  // namespace

bool SyntheticFunction::known_id(const std::string& id) {
  return id == "F1" || id == "F2" || id == "F3" || id == "F4" || id == "quad_large_p";
}

SyntheticFunction SyntheticFunction::by_id(const std::string& id) {
  if (!known_id(id)) throw ConfigError("unknown synthetic function: " + id);
  SyntheticFunction fn;
  fn.id = id;
  fn.p = 10;
  if (id == "F4")
    fn.truth = {{0, 1, 2}};
  else
    fn.truth = {{0, 1}};
  if (id == "quad_large_p")
    throw ConfigError("quad_large_p requires generator parameters; use gen_large_p");
  return fn;
}

std::pair<double, double> SyntheticFunction::eval_truth(const Vector& x) const {
  if (x.size() != p) throw ConfigError("synthetic function input size mismatch");
  if (id == "F1") {
    const double inter = 10.0 * x[0] * x[1];
    return {inter + tail_sum(x, 2), inter};
  }
  if (id == "F2") {
    const double inter = x[0] * x[1];
    return {inter + tail_sum(x, 2), inter};
  }
  if (id == "F3") {
    const double inter = std::exp(std::abs(x[0] + x[1]));
    return {inter + tail_sum(x, 2), inter};
  }
  if (id == "F4") {
    const double inter = 10.0 * x[0] * x[1] * x[2];
    return {inter + tail_sum(x, 3), inter};
  }
  if (id == "quad_large_p") {
    const double quad = x.dot(W * x);
    const double diag = W.diagonal().dot(x.cwiseProduct(x));
    return {beta.dot(x) + quad, quad - diag};
  }
  throw ConfigError("unknown synthetic function: " + id);
}

double SyntheticFunction::eval(const Vector& x) const { return eval_truth(x).first; }

LargePDataset gen_large_p(Index p, Index n, int K, double density, std::uint64_t seed) {
  if (p < 10) throw ConfigError("gen_large_p needs p >= 10");
  if (!(density > 0.0) || density > 0.1)
    throw ConfigError("gen_large_p density must be in (0, 0.1]");
  if (n < 1 || K < 1) throw ConfigError("gen_large_p needs n >= 1 and K >= 1");

  for (std::uint64_t attempt_seed = seed;; ++attempt_seed) {
    Rng rng(derive_seed(attempt_seed, 0x6c61726765ULL));
    Vector beta = Vector::Zero(p);
    for (Index i = 0; i < p; ++i)
      if (rng.uniform() < density) beta[i] = rng.normal();
    Matrix W = Matrix::Zero(p, p);
    for (int k = 0; k < K; ++k) {
      Vector a = Vector::Zero(p);
      for (Index i = 0; i < p; ++i)
        if (rng.uniform() < density) a[i] = rng.normal();
      W += a * a.transpose();
    }

    std::vector<std::vector<Index>> truth;
    for (Index i = 0; i < p; ++i)
      for (Index j = i + 1; j < p; ++j)
        if (W(i, j) != 0.0) truth.push_back({i, j});
    if (truth.empty()) {
      log(LogLevel::info, "gen_large_p: degenerate draw (no interacting pairs), reseeding");
      continue;
    }

    LargePDataset out;
    out.fn.id = "quad_large_p";
    out.fn.p = p;
    out.fn.beta = std::move(beta);
    out.fn.W = std::move(W);
    out.fn.truth = std::move(truth);
    out.seed_used = attempt_seed;
    out.X = Matrix(n, p);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < p; ++c) out.X(r, c) = rng.normal();
    out.y = Vector(n);
    for (Index r = 0; r < n; ++r) out.y[r] = out.fn.eval(out.X.row(r).transpose());
    return out;
  }
}

}  // namespace mahe
