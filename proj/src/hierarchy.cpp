#include "mahe/hierarchy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"
#include "mahe/linreg.hpp"
#include "mahe/metrics.hpp"
#include "mahe/rng.hpp"

namespace mahe {

namespace {

Vector origin_representation(const Instance& origin, double sigma) {
  switch (origin.kind) {
    case Kind::continuous:
    case Kind::binary: return origin.values;
    case Kind::token_sequence: return Vector::Ones(static_cast<Index>(origin.tokens.size()));
    case Kind::mixed: return mixed_representation(origin, origin.values, sigma);
  }
  throw ConfigError("unknown instance kind");
}

std::vector<int> class_labels(const Vector& y, double threshold) {
  std::vector<int> labels(static_cast<std::size_t>(y.size()));
  for (Index i = 0; i < y.size(); ++i) labels[static_cast<std::size_t>(i)] = y[i] >= threshold;
  return labels;
}

// regression: weighted MSE; classification: 1-AUC of the surrogate scores
// against the black box's own decisions (falls back to MSE if one-class)
double split_metric(const Vector& pred, const Vector& y, const Vector& w, bool classification) {
  if (classification) {
    const double auc = roc_auc(pred, class_labels(y, 0.0));
    if (std::isfinite(auc)) return 1.0 - auc;
  }
  return weighted_mse(pred, y, w);
}

Matrix submatrix(const Matrix& X, const std::vector<Index>& cols) {
  Matrix out(X.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = X.col(cols[j]);
  return out;
}

Vector subvector(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<Index>(j)] = v[idx[j]];
  return out;
}

NetworkConfig interaction_net_config(const HierarchyConfig& cfg, Index inputs,
                                     std::uint64_t seed) {
  NetworkConfig nc;
  nc.layer_sizes.push_back(inputs);
  for (Index h : cfg.interaction_hidden) nc.layer_sizes.push_back(h);
  nc.layer_sizes.push_back(1);
  nc.optimizer = Optimizer::adam;
  nc.l2_coeff = cfg.interaction_l2;
  nc.learning_rate = cfg.interaction_lr;
  nc.max_epochs = cfg.interaction_epochs;
  nc.patience = cfg.interaction_patience;
  nc.seed = seed;
  // fresh models start at the weighted residual mean (the standardized-space
  // zero map), so an un-improving level leaves the composite fit intact
  nc.zero_init_output = true;
  return nc;
}

Network train_on_residual(const LocalDataset& data, const Vector& residual,
                          const std::vector<Index>& indices, const NetworkConfig& nc) {
  WeightedData train_set, val_set;
  train_set.X = submatrix(data.rows(data.train_idx), indices);
  train_set.y = data.take(residual, data.train_idx);
  train_set.w = data.take(data.w, data.train_idx);
  val_set.X = submatrix(data.rows(data.val_idx), indices);
  val_set.y = data.take(residual, data.val_idx);
  val_set.w = data.take(data.w, data.val_idx);
  return train_standardized(nc, train_set, val_set).first;
}

double centered_origin_score(const Network& net, const LocalDataset& data,
                             const std::vector<Index>& indices, double sigma) {
  const Vector origin = origin_representation(data.origin, sigma);
  Matrix o(1, static_cast<Index>(indices.size()));
  o.row(0) = subvector(origin, indices).transpose();
  const double at_origin = net.forward(o)[0];
  const double vicinity_mean = net.forward(submatrix(data.X, indices)).mean();
  return at_origin - vicinity_mean;
}

}  // namespace

LinearSurrogate fit_linear(const LocalDataset& data, bool classification) {
  const Matrix Xtr = data.rows(data.train_idx);
  const Vector ytr = data.take(data.y, data.train_idx);
  const Vector wtr = data.take(data.w, data.train_idx);
  const LinearFit fit = weighted_least_squares(Xtr, ytr, wtr);

  LinearSurrogate s;
  s.w = fit.w;
  s.b = fit.b;
  s.ridge_fallback = fit.ridge_fallback;
  const Matrix Xte = data.rows(data.test_idx);
  const Vector yte = data.take(data.y, data.test_idx);
  const Vector wte = data.take(data.w, data.test_idx);
  const Vector pred = Xte * s.w + Vector::Constant(Xte.rows(), s.b);
  s.fit_loss = split_metric(pred, yte, wte, classification);
  s.fit_r2 = weighted_r2(pred, yte, wte);
  return s;
}

Vector composite_output(const HierarchicalExplanation& expl, const Matrix& X) {
  Vector out = X * expl.linear.w + Vector::Constant(X.rows(), expl.linear.b);
  for (const auto& m : expl.levels) out += m.net.forward(submatrix(X, m.indices));
  return out;
}

HierarchicalExplanation fit_level(HierarchicalExplanation expl, const LocalDataset& data,
                                  const InteractionCandidate& candidate,
                                  const HierarchyConfig& cfg) {
  std::vector<Index> indices = candidate.indices;
  std::sort(indices.begin(), indices.end());
  for (const auto& m : expl.levels)
    if (m.indices == indices)
      throw ConfigError("fit_level: candidate already present at an earlier level");
  for (Index i : indices)
    if (i < 0 || i >= data.p()) throw ConfigError("fit_level: candidate index out of range");

  const std::uint64_t seed =
      derive_seed(cfg.seed, seed_stream::interaction_level0 + expl.levels.size() + 1);
  const Vector residual = data.y - composite_output(expl, data.X);
  InteractionModel model;
  model.indices = indices;
  model.detection_strength = candidate.strength;
  try {
    model.net = train_on_residual(data, residual, indices,
                                  interaction_net_config(cfg, static_cast<Index>(indices.size()),
                                                         seed));
  } catch (const DivergenceError& e) {
    expl.failure = e.what();
    return expl;
  }
  model.attribution_at_origin = centered_origin_score(model.net, data, indices, expl.sigma);
  expl.levels.push_back(std::move(model));

  if (cfg.retrain_all_levels && expl.levels.size() > 1) {
    // one backfitting pass: refit each model on the residual of all others
    for (std::size_t k = 0; k < expl.levels.size(); ++k) {
      HierarchicalExplanation others = expl;
      others.levels.erase(others.levels.begin() + static_cast<std::ptrdiff_t>(k));
      const Vector rk = data.y - composite_output(others, data.X);
      const std::uint64_t rs = derive_seed(
          cfg.seed, seed_stream::interaction_level0 + 50 + expl.levels.size() * 10 + k);
      try {
        expl.levels[k].net = train_on_residual(
            data, rk, expl.levels[k].indices,
            interaction_net_config(cfg, static_cast<Index>(expl.levels[k].indices.size()), rs));
      } catch (const DivergenceError& e) {
        expl.failure = e.what();
        return expl;
      }
      expl.levels[k].attribution_at_origin =
          centered_origin_score(expl.levels[k].net, data, expl.levels[k].indices, expl.sigma);
    }
  }

  const Vector full = composite_output(expl, data.X);
  expl.per_level_fit.push_back(split_metric(data.take(full, data.test_idx),
                                            data.take(data.y, data.test_idx),
                                            data.take(data.w, data.test_idx),
                                            expl.classification));
  expl.per_level_train_mse.push_back(weighted_mse(data.take(full, data.train_idx),
                                                  data.take(data.y, data.train_idx),
                                                  data.take(data.w, data.train_idx)));
  expl.L = static_cast<Index>(expl.levels.size());
  return expl;
}

namespace {

double seconds_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ExplainResult explain(const Instance& x, const Predictor& f, const SamplerConfig& sampler_cfg,
                      const StoppingRule& stop, const HierarchyConfig& cfg) {
  ExplainResult res;
  double t0 = seconds_now();
  res.data = build_local_dataset(x, f, sampler_cfg);
  res.timings.sampling_s = seconds_now() - t0;
  const LocalDataset& ds = res.data;
  const bool classification = f.head() == Head::probability && !f.raw_probabilities();

  // detection network on the weighted vicinity data; adaptive steps let the
  // sparsity pressure reach irrelevant first-layer weights in a few hundred
  // epochs rather than the ~1/(lr*l1) steps plain descent would need
  NetworkConfig dc;
  dc.layer_sizes.push_back(ds.p());
  for (Index h : cfg.detector_hidden) dc.layer_sizes.push_back(h);
  dc.layer_sizes.push_back(1);
  dc.optimizer = Optimizer::adam;
  // The trained weights are read for their sparsity structure, not used for
  // prediction, and the L1 cleanup keeps migrating after the validation loss
  // plateaus -- so keep the final epoch's weights.
  dc.restore_best = false;
  dc.l1_coeff = cfg.detector_l1;
  dc.learning_rate = cfg.detector_lr;
  dc.max_epochs = cfg.detector_epochs;
  dc.patience = cfg.detector_patience;
  dc.seed = derive_seed(cfg.seed, seed_stream::detector_net);
  WeightedData dtr{ds.rows(ds.train_idx), ds.take(ds.y, ds.train_idx),
                   ds.take(ds.w, ds.train_idx)};
  WeightedData dval{ds.rows(ds.val_idx), ds.take(ds.y, ds.val_idx), ds.take(ds.w, ds.val_idx)};
  t0 = seconds_now();
  Network detector_net = train_standardized(dc, dtr, dval).first;

  const Index max_order =
      cfg.max_order > 0 ? std::min(cfg.max_order, ds.p()) : ds.p();
  res.ranking = detect(detector_net, std::max<Index>(max_order, 2));
  res.timings.detection_s = seconds_now() - t0;

  HierarchicalExplanation& expl = res.explanation;
  expl.origin = x;
  expl.sigma = sampler_cfg.sigma;
  expl.classification = classification;
  t0 = seconds_now();
  expl.linear = fit_linear(ds, classification);
  res.timings.linear_s = seconds_now() - t0;
  expl.per_level_fit.push_back(expl.linear.fit_loss);
  {
    const Vector lin = ds.rows(ds.train_idx) * expl.linear.w +
                       Vector::Constant(static_cast<Index>(ds.train_idx.size()), expl.linear.b);
    expl.per_level_train_mse.push_back(
        weighted_mse(lin, ds.take(ds.y, ds.train_idx), ds.take(ds.w, ds.train_idx)));
  }

  if (res.ranking.candidates.empty()) {
    expl.no_interactions = true;
    expl.L = 0;
    log(LogLevel::info, "no interactions detected");
    return res;
  }

  auto val_metric = [&](const HierarchicalExplanation& e) {
    const Vector pred = composite_output(e, ds.rows(ds.val_idx));
    return split_metric(pred, ds.take(ds.y, ds.val_idx), ds.take(ds.w, ds.val_idx),
                        classification);
  };

  // Candidates are tried in rank order.  A candidate whose fitted level fails
  // to improve the validation metric by at least min_improvement (relative) is
  // discarded entirely -- the composite model keeps only accepted levels -- but
  // it still counts one strike toward patience; `patience` consecutive
  // non-improving candidates stop the scan.
  double best_val = val_metric(expl);
  int strikes = 0;
  for (const auto& cand : res.ranking.candidates) {
    if (static_cast<Index>(expl.levels.size()) >= stop.max_levels) break;
    t0 = seconds_now();
    HierarchicalExplanation next = fit_level(expl, ds, cand, cfg);
    res.timings.interaction_s += seconds_now() - t0;
    if (!next.failure.empty()) {
      expl.failure = next.failure;
      break;
    }
    const double v = val_metric(next);
    const double improvement = best_val > 0.0 ? (best_val - v) / best_val : 0.0;
    if (improvement >= stop.min_improvement) {
      expl = std::move(next);
      best_val = v;
      strikes = 0;
    } else if (++strikes >= stop.patience) {
      break;
    }
  }

  expl.L = static_cast<Index>(expl.levels.size());
  expl.no_interactions = expl.levels.empty();
  return res;
}

std::vector<AttributionEntry> attribution(const HierarchicalExplanation& expl,
                                          const LocalDataset& data, Index level) {
  if (level < 0 || level > expl.L) throw ConfigError("attribution: level out of range");
  const Vector origin = origin_representation(data.origin, expl.sigma);
  std::vector<AttributionEntry> out;
  for (Index i = 0; i < data.p(); ++i) {
    AttributionEntry e;
    e.indices = {i};
    e.score = expl.linear.w[i] * (origin[i] - data.X.col(i).mean());
    out.push_back(std::move(e));
  }
  for (Index k = 0; k < level; ++k) {
    const auto& m = expl.levels[static_cast<std::size_t>(k)];
    AttributionEntry e;
    e.indices = m.indices;
    e.interaction = true;
    e.score = centered_origin_score(m.net, data, m.indices, expl.sigma);
    out.push_back(std::move(e));
  }
  return out;
}

std::string HierarchicalExplanation::to_json() const {
  nlohmann::json doc;
  doc["origin"] = nlohmann::json::parse(origin.to_json());
  doc["sigma"] = sigma;
  doc["classification"] = classification;
  doc["no_interactions"] = no_interactions;
  if (!failure.empty()) doc["failure"] = failure;
  nlohmann::json lin;
  std::vector<double> wv(linear.w.data(), linear.w.data() + linear.w.size());
  lin["w"] = wv;
  lin["b"] = linear.b;
  lin["fit_metric"] = linear.fit_loss;
  lin["r2"] = linear.fit_r2;
  if (linear.ridge_fallback) lin["ridge_fallback"] = true;
  doc["linear"] = std::move(lin);
  nlohmann::json levels_json = nlohmann::json::array();
  for (std::size_t k = 0; k < levels.size(); ++k) {
    nlohmann::json item;
    item["indices"] = levels[k].indices;
    item["strength"] = levels[k].detection_strength;
    item["attribution"] = levels[k].attribution_at_origin;
    item["fit_metric"] = per_level_fit[k + 1];
    levels_json.push_back(std::move(item));
  }
  doc["levels"] = std::move(levels_json);
  doc["per_level_fit"] = per_level_fit;
  return doc.dump(2);
}

std::string HierarchicalExplanation::to_tsv() const {
  std::ostringstream out;
  out << "level\tindices\tattribution\tfit_metric\n";
  out << "0\t-\t-\t" << format_double(per_level_fit[0]) << "\n";
  for (std::size_t k = 0; k < levels.size(); ++k) {
    out << (k + 1) << "\t";
    for (std::size_t i = 0; i < levels[k].indices.size(); ++i) {
      if (i) out << " ";
      out << levels[k].indices[i];
    }
    out << "\t" << format_double(levels[k].attribution_at_origin) << "\t"
        << format_double(per_level_fit[k + 1]) << "\n";
  }
  return out.str();
}

}  // namespace mahe
