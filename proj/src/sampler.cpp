#include "mahe/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"
#include "mahe/rng.hpp"

namespace mahe {

namespace {

constexpr int kMaxDraws = 1'000'000;

[[noreturn]] void rejection_failure(const char* what) {
  throw NumericalError(std::string("sampling failed: ") + what +
                       " exceeded 1e6 rejection draws (vicinity too tight)");
}

}  // namespace

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::l2: return "l2";
    case Metric::cosine: return "cosine";
    case Metric::edit: return "edit";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  if (name == "l2") return Metric::l2;
  if (name == "cosine") return Metric::cosine;
  if (name == "edit") return Metric::edit;
  throw ConfigError("unknown metric: " + name);
}

Metric default_metric(Kind kind) {
  switch (kind) {
    case Kind::continuous:
    case Kind::mixed: return Metric::l2;
    case Kind::binary: return Metric::cosine;
    case Kind::token_sequence: return Metric::edit;
  }
  return Metric::l2;
}

void SamplerConfig::validate(Kind kind, Index p) const {
  if (n < 1) throw ConfigError("sampler: n must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sampler: sigma must be positive");
  if (kernel_sigma < 0.0) throw ConfigError("sampler: kernel_sigma must be non-negative");
  const bool ok = (metric == Metric::l2 && (kind == Kind::continuous || kind == Kind::mixed)) ||
                  (metric == Metric::cosine && kind == Kind::binary) ||
                  (metric == Metric::edit && kind == Kind::token_sequence);
  if (!ok)
    throw ConfigError("sampler: metric " + metric_name(metric) + " does not fit kind " +
                      kind_name(kind));
  if (max_flips) {
    if (*max_flips < 0) throw ConfigError("sampler: max_flips must be non-negative");
    if (kind == Kind::binary && *max_flips > p)
      throw ConfigError("sampler: max_flips exceeds feature count");
  }
}

Index SamplerConfig::derived_max_flips(Index p) const {
  if (max_flips) return std::min(*max_flips, p);
  // cosine reads sigma as a fractional threshold; edit counts tokens directly
  const double raw = metric == Metric::cosine ? std::ceil(sigma * static_cast<double>(p))
                                              : std::ceil(sigma);
  return std::min<Index>(static_cast<Index>(raw), p);
}

Index edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<Index> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), Index{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<Index>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const Index sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double distance(const Instance& a, const Instance& b, Metric metric) {
  if (a.kind != b.kind) throw ConfigError("distance: instance kinds differ");
  switch (metric) {
    case Metric::l2:
      if (a.values.size() != b.values.size()) throw ConfigError("distance: size mismatch");
      return (a.values - b.values).norm();
    case Metric::cosine: {
      if (a.values.size() != b.values.size()) throw ConfigError("distance: size mismatch");
      if (a.values == b.values) return 0.0;
      const double na = a.values.norm(), nb = b.values.norm();
      if (na == 0.0 || nb == 0.0) return 1.0;
      return 1.0 - a.values.dot(b.values) / (na * nb);
    }
    case Metric::edit:
      if (a.kind != Kind::token_sequence) throw ConfigError("distance: edit needs token kind");
      return static_cast<double>(edit_distance(a.tokens, b.tokens));
  }
  throw ConfigError("distance: unknown metric");
}

Vector kernel_weights(const Vector& distances, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("kernel_weights: sigma must be positive");
  for (Index i = 0; i < distances.size(); ++i)
    if (!(distances[i] >= 0.0) || !std::isfinite(distances[i]))
      throw ConfigError("kernel_weights: distances must be finite and non-negative");
  return (-distances.array().square() / (sigma * sigma)).exp();
}

std::vector<Instance> sample_continuous(const Instance& x, const SamplerConfig& cfg) {
  if (x.kind != Kind::continuous) throw ConfigError("sample_continuous: wrong kind");
  cfg.validate(x.kind, x.size());
  const Index p = x.values.size();
  const double sigma = cfg.sigma;
  Rng rng(cfg.seed);

  // N(x, sigma^2 I) truncated to the sigma-ball, factored as uniform
  // direction x truncated-chi radius: r^2/sigma^2 follows chi-square(p)
  // restricted to [0,1], proposed from density ~ s^(p/2-1) and thinned by
  // exp(-s/2). Identical in law to whole-vector rejection, but the acceptance
  // rate stays >= exp(-1/2) at any p instead of collapsing with dimension.
  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  for (Index s = 0; s < cfg.n; ++s) {
    Vector dir(p);
    double norm = 0.0;
    int draws = 0;
    do {
      if (++draws > kMaxDraws) rejection_failure("direction draw");
      for (Index i = 0; i < p; ++i) dir[i] = rng.normal();
      norm = dir.norm();
    } while (norm == 0.0);

    double s2 = 0.0;
    draws = 0;
    for (;;) {
      if (++draws > kMaxDraws) rejection_failure("radius draw");
      const double u = rng.uniform();
      s2 = std::pow(u, 2.0 / static_cast<double>(p));
      if (rng.uniform() <= std::exp(-0.5 * s2)) break;
    }
    const double radius = sigma * std::sqrt(s2);

    Instance inst;
    inst.kind = Kind::continuous;
    inst.values = x.values + (radius / norm) * dir;
    inst.feature_names = x.feature_names;
    out.push_back(std::move(inst));
  }
  return out;
}

namespace {

// k ~ U{0..cap} positions flipped/switched off, distinct, deterministic
std::vector<Index> draw_positions(Rng& rng, Index p, Index cap) {
  const Index k = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(cap) + 1));
  std::vector<Index> pool(static_cast<std::size_t>(p));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const Index j = i + static_cast<Index>(rng.integer(static_cast<std::uint64_t>(p - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

}  // namespace

std::vector<Instance> sample_binary(const Instance& x, const SamplerConfig& cfg) {
  if (x.kind != Kind::binary) throw ConfigError("sample_binary: wrong kind");
  cfg.validate(x.kind, x.size());
  const Index p = x.values.size();
  const Index cap = cfg.derived_max_flips(p);
  Rng rng(cfg.seed);

  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  for (Index s = 0; s < cfg.n; ++s) {
    Instance inst;
    inst.kind = Kind::binary;
    inst.feature_names = x.feature_names;
    int draws = 0;
    for (;;) {
      if (++draws > kMaxDraws) rejection_failure("binary flip draw");
      inst.values = x.values;
      for (Index i : draw_positions(rng, p, cap))
        inst.values[i] = 1.0 - inst.values[i];
      if (distance(x, inst, cfg.metric) <= cfg.sigma) break;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

TokenSamples sample_tokens(const Instance& x, const SamplerConfig& cfg) {
  if (x.kind != Kind::token_sequence) throw ConfigError("sample_tokens: wrong kind");
  cfg.validate(x.kind, x.size());
  const Index t = static_cast<Index>(x.tokens.size());
  const Index cap = cfg.derived_max_flips(t);
  Rng rng(cfg.seed);

  TokenSamples out;
  out.sequences.reserve(static_cast<std::size_t>(cfg.n));
  out.masks = Matrix::Ones(cfg.n, t);
  for (Index s = 0; s < cfg.n; ++s) {
    std::vector<Index> off;
    int draws = 0;
    for (;;) {
      if (++draws > kMaxDraws) rejection_failure("token mask draw");
      off = draw_positions(rng, t, cap);
      // removing k tokens is exactly k deletions
      if (static_cast<double>(off.size()) <= cfg.sigma) break;
    }
    Instance inst;
    inst.kind = Kind::token_sequence;
    for (Index i : off) out.masks(s, i) = 0.0;
    for (Index i = 0; i < t; ++i)
      if (out.masks(s, i) == 1.0) inst.tokens.push_back(x.tokens[static_cast<std::size_t>(i)]);
    out.sequences.push_back(std::move(inst));
  }
  return out;
}

Vector mixed_representation(const Instance& origin, const Vector& raw, double sigma) {
  Vector repr = raw;
  const double scale = sigma / std::sqrt(3.0);  // population std of U(-sigma, sigma)
  std::vector<bool> is_binary(static_cast<std::size_t>(raw.size()), false);
  for (Index i : origin.binary_indices) is_binary[static_cast<std::size_t>(i)] = true;
  for (Index i = 0; i < raw.size(); ++i)
    if (!is_binary[static_cast<std::size_t>(i)])
      repr[i] = (raw[i] - origin.values[i]) / scale;
  return repr;
}

std::vector<Instance> sample_mixed(const Instance& x, const SamplerConfig& cfg) {
  if (x.kind != Kind::mixed) throw ConfigError("sample_mixed: wrong kind");
  cfg.validate(x.kind, x.size());
  const Index p = x.values.size();
  std::vector<bool> is_binary(static_cast<std::size_t>(p), false);
  for (Index i : x.binary_indices) is_binary[static_cast<std::size_t>(i)] = true;
  std::vector<Index> bins = x.binary_indices;
  std::sort(bins.begin(), bins.end());
  const Index cap = std::min(cfg.derived_max_flips(p), static_cast<Index>(bins.size()));
  Rng rng(cfg.seed);

  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  for (Index s = 0; s < cfg.n; ++s) {
    Instance inst = x;
    // continuous coordinates: uniform draw truncated at sigma
    for (Index i = 0; i < p; ++i)
      if (!is_binary[static_cast<std::size_t>(i)])
        inst.values[i] = x.values[i] + rng.uniform(-cfg.sigma, cfg.sigma);
    if (!bins.empty())
      for (Index slot : draw_positions(rng, static_cast<Index>(bins.size()), cap)) {
        const Index i = bins[static_cast<std::size_t>(slot)];
        inst.values[i] = 1.0 - inst.values[i];
      }
    out.push_back(std::move(inst));
  }
  return out;
}

Matrix LocalDataset::rows(const std::vector<Index>& idx) const {
  Matrix out(static_cast<Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(idx[i]);
  return out;
}

Vector LocalDataset::take(const Vector& v, const std::vector<Index>& idx) const {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

LocalDataset build_local_dataset(const Instance& x, const Predictor& f,
                                 const SamplerConfig& cfg) {
  x.validate();
  cfg.validate(x.kind, x.size());

  LocalDataset ds;
  ds.origin = x;
  ds.config = cfg;

  Matrix raw;  // what the predictor sees
  Vector dist(cfg.n);
  switch (x.kind) {
    case Kind::continuous: {
      const auto samples = sample_continuous(x, cfg);
      raw.resize(cfg.n, x.size());
      for (Index i = 0; i < cfg.n; ++i) {
        raw.row(i) = samples[static_cast<std::size_t>(i)].values.transpose();
        dist[i] = distance(x, samples[static_cast<std::size_t>(i)], cfg.metric);
      }
      ds.X = raw;
      break;
    }
    case Kind::binary: {
      const auto samples = sample_binary(x, cfg);
      raw.resize(cfg.n, x.size());
      for (Index i = 0; i < cfg.n; ++i) {
        raw.row(i) = samples[static_cast<std::size_t>(i)].values.transpose();
        dist[i] = distance(x, samples[static_cast<std::size_t>(i)], cfg.metric);
      }
      ds.X = raw;
      break;
    }
    case Kind::token_sequence: {
      const auto samples = sample_tokens(x, cfg);
      raw = samples.masks;
      ds.X = samples.masks;
      for (Index i = 0; i < cfg.n; ++i)
        dist[i] = static_cast<double>(
            edit_distance(x.tokens, samples.sequences[static_cast<std::size_t>(i)].tokens));
      break;
    }
    case Kind::mixed: {
      const auto samples = sample_mixed(x, cfg);
      raw.resize(cfg.n, x.size());
      ds.X.resize(cfg.n, x.size());
      const Vector origin_repr = mixed_representation(x, x.values, cfg.sigma);
      for (Index i = 0; i < cfg.n; ++i) {
        raw.row(i) = samples[static_cast<std::size_t>(i)].values.transpose();
        ds.X.row(i) =
            mixed_representation(x, samples[static_cast<std::size_t>(i)].values, cfg.sigma)
                .transpose();
        dist[i] = (ds.X.row(i).transpose() - origin_repr).norm();
      }
      break;
    }
  }

  ds.y.resize(cfg.n);
  constexpr Index kBatch = 256;
  for (Index start = 0, batch = 0; start < cfg.n; start += kBatch, ++batch) {
    const Index len = std::min(kBatch, cfg.n - start);
    try {
      ds.y.segment(start, len) = f.surrogate_targets(raw.middleRows(start, len));
    } catch (const PredictorError& e) {
      throw PredictorError("batch " + std::to_string(batch) + ": " + e.what());
    }
  }

  ds.w = kernel_weights(dist, cfg.effective_kernel_sigma());

  // 80/10/10, train takes the rounding remainder
  const Index n_val = cfg.n / 10;
  const Index n_test = cfg.n / 10;
  std::vector<Index> order(static_cast<std::size_t>(cfg.n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng split_rng(derive_seed(cfg.seed, 0x73706c6974ULL));
  split_rng.shuffle(order.begin(), order.end());
  ds.train_idx.assign(order.begin(), order.end() - n_val - n_test);
  ds.val_idx.assign(order.end() - n_val - n_test, order.end() - n_test);
  ds.test_idx.assign(order.end() - n_test, order.end());
  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.val_idx.begin(), ds.val_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
  if (ds.train_idx.empty()) throw ConfigError("build_local_dataset: train split is empty");
  return ds;
}

void LocalDataset::export_csv(const std::string& path, const std::string& comment) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  const Index pcols = X.cols();
  for (Index c = 0; c < pcols; ++c) {
    if (!origin.feature_names.empty() &&
        static_cast<std::size_t>(c) < origin.feature_names.size())
      out << origin.feature_names[static_cast<std::size_t>(c)];
    else
      out << "f" << c;
    out << ",";
  }
  out << "output,weight,split\n";
  std::vector<char> split(static_cast<std::size_t>(n()), '?');
  for (Index i : train_idx) split[static_cast<std::size_t>(i)] = 't';
  for (Index i : val_idx) split[static_cast<std::size_t>(i)] = 'v';
  for (Index i : test_idx) split[static_cast<std::size_t>(i)] = 's';
  for (Index r = 0; r < n(); ++r) {
    for (Index c = 0; c < pcols; ++c) out << format_double(X(r, c)) << ",";
    out << format_double(y[r]) << "," << format_double(w[r]) << ",";
    const char s = split[static_cast<std::size_t>(r)];
    out << (s == 't' ? "train" : s == 'v' ? "val" : "test") << "\n";
  }
}

void LocalDataset::export_meta_json(const std::string& path) const {
  nlohmann::json doc;
  doc["n"] = config.n;
  doc["sigma"] = config.sigma;
  doc["metric"] = metric_name(config.metric);
  doc["seed"] = config.seed;
  doc["kernel_sigma"] = config.effective_kernel_sigma();
  if (origin.kind == Kind::binary || origin.kind == Kind::token_sequence ||
      origin.kind == Kind::mixed)
    doc["max_flips"] = config.derived_max_flips(origin.size());
  doc["origin"] = nlohmann::json::parse(origin.to_json());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace mahe
