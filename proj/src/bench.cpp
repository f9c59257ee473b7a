#include "mahe/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "mahe/detector.hpp"
#include "mahe/errors.hpp"
#include "mahe/metrics.hpp"
#include "mahe/parallel.hpp"
#include "mahe/predictor.hpp"
#include "mahe/rng.hpp"

namespace mahe {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;

// uniform draw in the closed l2 ball around center
Vector ball_point(const Vector& center, double radius, Rng& rng) {
  const Index p = center.size();
  Vector dir(p);
  double nrm = 0.0;
  do {
    for (Index j = 0; j < p; ++j) dir[j] = rng.normal();
    nrm = dir.norm();
  } while (nrm == 0.0);
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
  return center + dir * (r / nrm);
}

Matrix pick_rows(const Matrix& X, const std::vector<Index>& sel) {
  Matrix out(static_cast<Index>(sel.size()), X.cols());
  for (std::size_t i = 0; i < sel.size(); ++i) out.row(static_cast<Index>(i)) = X.row(sel[i]);
  return out;
}

Vector pick(const Vector& v, const std::vector<Index>& sel) {
  Vector out(static_cast<Index>(sel.size()));
  for (std::size_t i = 0; i < sel.size(); ++i) out[static_cast<Index>(i)] = v[sel[i]];
  return out;
}

// seeded shuffle split into (train, val) with a 90/10 ratio; indices sorted
std::pair<std::vector<Index>, std::vector<Index>> ninety_ten_split(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(derive_seed(seed, kSplitStream));
  rng.shuffle(idx.begin(), idx.end());
  const Index n_val = std::max<Index>(1, n / 10);
  std::vector<Index> val(idx.begin(), idx.begin() + n_val);
  std::vector<Index> tr(idx.begin() + n_val, idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {std::move(tr), std::move(val)};
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

std::pair<Network, double> train_base_model(const SyntheticFunction& fn,
                                            const BaseModelConfig& cfg, std::uint64_t seed) {
  if (cfg.n_train < 20) throw ConfigError("train_base_model: n_train must be at least 20");
  const std::uint64_t base_seed = derive_seed(seed, seed_stream::base_model);
  Rng rng(base_seed);
  Matrix X(cfg.n_train, fn.p);
  Vector y(cfg.n_train);
  for (Index i = 0; i < cfg.n_train; ++i) {
    for (Index j = 0; j < fn.p; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
    y[i] = fn.eval(X.row(i).transpose());
  }

  auto [tr_idx, val_idx] = ninety_ten_split(cfg.n_train, base_seed);

  NetworkConfig nc;
  nc.layer_sizes.push_back(fn.p);
  for (Index h : cfg.hidden) nc.layer_sizes.push_back(h);
  nc.layer_sizes.push_back(1);
  nc.optimizer = Optimizer::adam;
  nc.learning_rate = cfg.learning_rate;
  nc.max_epochs = cfg.max_epochs;
  nc.patience = cfg.patience;
  nc.batch_size = cfg.batch_size;
  nc.seed = base_seed;

  WeightedData tr{pick_rows(X, tr_idx), pick(y, tr_idx),
                  Vector::Ones(static_cast<Index>(tr_idx.size()))};
  WeightedData val{pick_rows(X, val_idx), pick(y, val_idx),
                   Vector::Ones(static_cast<Index>(val_idx.size()))};
  Network net = train_standardized(nc, tr, val).first;

  const Vector pred = net.forward(tr.X);
  const double r2 = weighted_r2(pred, tr.y, tr.w);
  return {std::move(net), r2};
}

StdMseResult std_mse(const HierarchicalExplanation& expl, const SyntheticFunction& fn,
                     const Vector& x, Index probes, double sigma, std::uint64_t seed) {
  if (probes < 2) throw ConfigError("std_mse: at least 2 probes required");
  if (x.size() != fn.p) throw ConfigError("std_mse: location size does not match the function");
  if (fn.truth.size() != 1)
    throw ConfigError("std_mse: function must have a single ground-truth interaction set");
  if (!(sigma > 0.0)) throw ConfigError("std_mse: sigma must be positive");

  std::vector<Index> truth = fn.truth.front();
  std::sort(truth.begin(), truth.end());
  const Network* g = nullptr;
  for (const auto& m : expl.levels)
    if (m.indices == truth) {
      g = &m.net;
      break;
    }

  Rng rng(seed);
  Matrix P(probes, fn.p);
  for (Index i = 0; i < probes; ++i) P.row(i) = ball_point(x, sigma, rng).transpose();

  Vector tv(probes);
  for (Index i = 0; i < probes; ++i) tv[i] = fn.eval_truth(P.row(i).transpose()).second;

  Vector pv = Vector::Zero(probes);
  if (g) {
    Matrix sub(probes, static_cast<Index>(truth.size()));
    for (std::size_t j = 0; j < truth.size(); ++j)
      sub.col(static_cast<Index>(j)) = P.col(truth[j]);
    pv = g->forward(sub);
  }

  const Vector pc = (pv.array() - pv.mean()).matrix();
  const Vector tc = (tv.array() - tv.mean()).matrix();
  const double mse = (pc - tc).squaredNorm() / static_cast<double>(probes);
  const double var = tc.squaredNorm() / static_cast<double>(probes);

  StdMseResult out;
  if (var > 0.0) {
    out.value = mse / var;
    out.flagged = false;
  } else {
    out.value = mse;
    out.flagged = true;
  }
  return out;
}

GlmBaseline glm_pairwise_baseline(const LocalDataset& data, double lambda_fraction) {
  const Index p = data.p();
  if (p < 2) throw ConfigError("glm_pairwise_baseline: at least 2 features required");
  if (!(lambda_fraction >= 0.0) || lambda_fraction > 1.0)
    throw ConfigError("glm_pairwise_baseline: lambda fraction must be in [0, 1]");
  const Index n_pairs = p * (p - 1) / 2;
  const Index q = p + n_pairs;
  const Index n_train = static_cast<Index>(data.train_idx.size());
  if (n_train < 1) throw ConfigError("glm_pairwise_baseline: empty training split");
  if (q > 10 * n_train) {
    std::ostringstream msg;
    msg << "glm_pairwise_baseline: expanded design has " << q << " columns for " << n_train
        << " training rows (limit 10x); reduce the feature count";
    throw CapabilityError(msg.str());
  }

  auto expand = [&](const Matrix& X) {
    Matrix Z(X.rows(), q);
    Z.leftCols(p) = X;
    Index c = p;
    for (Index i = 0; i < p; ++i)
      for (Index j = i + 1; j < p; ++j) Z.col(c++) = X.col(i).cwiseProduct(X.col(j));
    return Z;
  };

  const Matrix Ztr = expand(data.rows(data.train_idx));
  const Vector ytr = data.take(data.y, data.train_idx);
  const Vector wtr = data.take(data.w, data.train_idx);

  // smallest penalty that zeroes every standardized coefficient (gradient of
  // the weighted quadratic term at zero, per standardized column)
  const double wsum = wtr.sum();
  if (wsum <= 0.0) throw ConfigError("glm_pairwise_baseline: nonpositive total weight");
  const double ymean = ytr.dot(wtr) / wsum;
  const Vector yc = (ytr.array() - ymean).matrix();
  double lambda_max = 0.0;
  for (Index j = 0; j < q; ++j) {
    const double mean = Ztr.col(j).dot(wtr) / wsum;
    const Vector c = (Ztr.col(j).array() - mean).matrix();
    const double var = c.cwiseProduct(c).dot(wtr) / wsum;
    if (var <= 0.0) continue;
    lambda_max =
        std::max(lambda_max, std::abs(2.0 * c.cwiseProduct(wtr).dot(yc) / wsum) / std::sqrt(var));
  }

  GlmBaseline out;
  out.lambda = lambda_fraction * lambda_max;
  const Vector beta = weighted_lasso(Ztr, ytr, wtr, out.lambda, &out.intercept);
  out.linear_w = beta.head(p);
  {
    Index c = p;
    for (Index i = 0; i < p; ++i)
      for (Index j = i + 1; j < p; ++j, ++c)
        out.pair_coefficients.push_back({{i, j}, beta[c]});
  }
  std::vector<std::pair<std::vector<Index>, double>> by_mag = out.pair_coefficients;
  std::stable_sort(by_mag.begin(), by_mag.end(), [](const auto& a, const auto& b) {
    return std::abs(a.second) > std::abs(b.second);
  });
  for (const auto& pr : by_mag) out.ranking.push_back(pr.first);

  if (!data.test_idx.empty()) {
    const Matrix Zte = expand(data.rows(data.test_idx));
    const Vector pred =
        Zte * beta + Vector::Constant(Zte.rows(), out.intercept);
    out.test_mse = weighted_mse(pred, data.take(data.y, data.test_idx),
                                data.take(data.w, data.test_idx));
  }
  return out;
}

std::vector<BenchResult> run_synthetic(const BenchConfig& cfg) {
  if (cfg.trials < 0 || cfg.instances_per_trial < 0)
    throw ConfigError("run_synthetic: trial and instance counts must be nonnegative");
  if (cfg.trials == 0 || cfg.instances_per_trial == 0) return {};
  if (!(cfg.sigma > 0.0)) throw ConfigError("run_synthetic: sigma must be positive");
  if (cfg.probes < 2) throw ConfigError("run_synthetic: at least 2 probes required");
  const SyntheticFunction fn = SyntheticFunction::by_id(cfg.function_id);
  const double r2_gate = cfg.function_id == "F3" ? 0.8 : 0.9;
  const Index per_trial = cfg.instances_per_trial;

  std::vector<BenchResult> results(
      static_cast<std::size_t>(cfg.trials * cfg.instances_per_trial));

  parallel_for(cfg.trials, cfg.jobs, [&](Index t) {
    const std::uint64_t trial_seed =
        derive_seed(cfg.seed, seed_stream::trial0 + static_cast<std::uint64_t>(t));
    auto [net, r2] = train_base_model(fn, cfg.base, trial_seed);
    const bool valid = r2 >= r2_gate;
    if (!valid) {
      std::ostringstream msg;
      msg << cfg.function_id << " trial " << t << ": base model train R^2 " << format_double(r2, 4)
          << " below gate " << format_double(r2_gate, 4) << "; trial excluded";
      log(LogLevel::warn, msg.str());
    }
    const Predictor pred = Predictor::network(net);

    for (Index i = 0; i < per_trial; ++i) {
      BenchResult& row = results[static_cast<std::size_t>(t * per_trial + i)];
      row.function_id = cfg.function_id;
      row.trial = static_cast<int>(t);
      row.instance = static_cast<int>(i);
      row.trial_valid = valid;
      row.base_train_r2 = r2;

      const std::uint64_t inst_seed =
          derive_seed(trial_seed, seed_stream::instance0 + static_cast<std::uint64_t>(i));
      // locations stay deterministic whether or not the trial runs
      Rng loc_rng(derive_seed(inst_seed, 11));
      row.location = Vector(fn.p);
      for (Index j = 0; j < fn.p; ++j) row.location[j] = loc_rng.uniform(-0.8, 0.8);
      if (!valid) continue;

      Instance x;
      x.kind = Kind::continuous;
      x.values = row.location;

      SamplerConfig sc = cfg.sampler_template;
      sc.sigma = cfg.sigma;
      sc.metric = Metric::l2;
      sc.seed = inst_seed;
      HierarchyConfig hc = cfg.hierarchy;
      hc.seed = inst_seed;

      const ExplainResult er = explain(x, pred, sc, cfg.stop, hc);
      // Score the interactions the explanation actually kept: the hierarchy's
      // validation filter is part of the method, so candidates it rejected
      // (e.g. spurious additive blocks that add nothing over the linear term)
      // do not count against precision.
      InteractionRanking kept;
      for (const auto& lvl : er.explanation.levels) {
        InteractionCandidate c;
        c.indices = lvl.indices;
        c.strength = lvl.detection_strength;
        kept.candidates.push_back(std::move(c));
      }
      row.r_precision = r_precision(kept, fn.truth);
      const StdMseResult sm = std_mse(er.explanation, fn, row.location, cfg.probes, cfg.sigma,
                                      derive_seed(inst_seed, seed_stream::probes));
      row.std_mse = sm.value;
      row.std_mse_flagged = sm.flagged;
      row.per_level_metric = er.explanation.per_level_fit;
      row.L = er.explanation.L;
      row.mahe_test_mse = er.explanation.per_level_fit.back();
      row.runtimes = {er.timings.sampling_s, er.timings.detection_s, er.timings.linear_s,
                      er.timings.interaction_s};
      if (cfg.run_glm_baseline)
        row.glm_test_mse = glm_pairwise_baseline(er.data, cfg.glm_lambda_fraction).test_mse;
    }
  });
  return results;
}

double large_p_detection_auc(const LargePDataset& data, const LargePConfig& cfg) {
  const Index n = data.X.rows();
  const Index p = data.X.cols();
  if (n < 20) throw ConfigError("large_p_detection_auc: at least 20 rows required");
  if (data.fn.truth.empty()) throw ConfigError("large_p_detection_auc: empty ground truth");

  const std::uint64_t seed = derive_seed(cfg.seed, seed_stream::detector_net);
  auto [tr_idx, val_idx] = ninety_ten_split(n, seed);

  NetworkConfig nc;
  nc.layer_sizes.push_back(p);
  for (Index h : cfg.hidden) nc.layer_sizes.push_back(h);
  nc.layer_sizes.push_back(1);
  nc.optimizer = Optimizer::adam;
  nc.restore_best = false;
  nc.l1_coeff = cfg.l1;
  nc.learning_rate = cfg.learning_rate;
  nc.max_epochs = cfg.max_epochs;
  nc.patience = cfg.patience;
  nc.batch_size = cfg.batch_size;
  nc.seed = seed;

  WeightedData tr{pick_rows(data.X, tr_idx), pick(data.y, tr_idx),
                  Vector::Ones(static_cast<Index>(tr_idx.size()))};
  WeightedData val{pick_rows(data.X, val_idx), pick(data.y, val_idx),
                   Vector::Ones(static_cast<Index>(val_idx.size()))};
  const Network net = train_standardized(nc, tr, val).first;

  const Matrix S = pairwise_strengths(net);
  std::set<std::pair<Index, Index>> truth;
  for (const auto& set : data.fn.truth) {
    if (set.size() != 2) throw ConfigError("large_p_detection_auc: truth sets must be pairs");
    truth.insert({std::min(set[0], set[1]), std::max(set[0], set[1])});
  }

  const Index n_pairs = p * (p - 1) / 2;
  Vector scores(n_pairs);
  std::vector<int> labels(static_cast<std::size_t>(n_pairs));
  Index c = 0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j, ++c) {
      scores[c] = S(i, j);
      labels[static_cast<std::size_t>(c)] = truth.count({i, j}) ? 1 : 0;
    }
  const double auc = roc_auc(scores, labels);
  if (!std::isfinite(auc))
    throw NumericalError("large_p_detection_auc: pair labels are one-class");
  return auc;
}

void bench_results_csv(const std::vector<BenchResult>& results, const std::string& path,
                       const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("bench_results_csv: cannot open " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "function,trial,instance,location,base_train_r2,trial_valid,r_precision,std_mse,"
         "std_mse_flagged,levels,per_level_metric,mahe_test_mse,glm_test_mse\n";
  for (const auto& r : results) {
    out << r.function_id << ',' << r.trial << ',' << r.instance << ',';
    for (Index j = 0; j < r.location.size(); ++j) {
      if (j) out << ';';
      out << format_double(r.location[j]);
    }
    out << ',' << format_double(r.base_train_r2) << ',' << (r.trial_valid ? 1 : 0) << ','
        << format_double(r.r_precision) << ',' << format_double(r.std_mse) << ','
        << (r.std_mse_flagged ? 1 : 0) << ',' << r.L << ',';
    for (std::size_t j = 0; j < r.per_level_metric.size(); ++j) {
      if (j) out << ';';
      out << format_double(r.per_level_metric[j]);
    }
    out << ',' << format_double(r.mahe_test_mse) << ',' << format_double(r.glm_test_mse) << '\n';
  }
  if (!out) throw ConfigError("bench_results_csv: write failed for " + path);
}

std::string bench_summary_json(const BenchConfig& cfg, const std::vector<BenchResult>& results) {
  nlohmann::json config;
  config["function"] = cfg.function_id;
  config["trials"] = cfg.trials;
  config["instances_per_trial"] = cfg.instances_per_trial;
  config["sigma"] = cfg.sigma;
  config["seed"] = cfg.seed;
  config["jobs"] = cfg.jobs;
  config["probes"] = cfg.probes;
  config["glm_baseline"] = cfg.run_glm_baseline;
  config["glm_lambda_fraction"] = cfg.glm_lambda_fraction;
  config["base_model"] = {{"hidden", cfg.base.hidden},
                          {"learning_rate", cfg.base.learning_rate},
                          {"max_epochs", cfg.base.max_epochs},
                          {"patience", cfg.base.patience},
                          {"batch_size", cfg.base.batch_size},
                          {"n_train", cfg.base.n_train}};
  config["sampler"] = {{"n", cfg.sampler_template.n},
                       {"metric", metric_name(Metric::l2)},
                       {"kernel_sigma", cfg.sampler_template.effective_kernel_sigma()}};
  config["stopping"] = {{"min_improvement", cfg.stop.min_improvement},
                        {"patience", cfg.stop.patience},
                        {"max_levels", cfg.stop.max_levels}};
  config["hierarchy"] = {{"detector_hidden", cfg.hierarchy.detector_hidden},
                         {"detector_l1", cfg.hierarchy.detector_l1},
                         {"detector_lr", cfg.hierarchy.detector_lr},
                         {"detector_epochs", cfg.hierarchy.detector_epochs},
                         {"detector_patience", cfg.hierarchy.detector_patience},
                         {"interaction_hidden", cfg.hierarchy.interaction_hidden},
                         {"interaction_l2", cfg.hierarchy.interaction_l2},
                         {"interaction_lr", cfg.hierarchy.interaction_lr},
                         {"interaction_epochs", cfg.hierarchy.interaction_epochs},
                         {"interaction_patience", cfg.hierarchy.interaction_patience},
                         {"max_order", cfg.hierarchy.max_order}};

  std::vector<double> rp, sm;
  std::set<int> invalid_trials;
  int n_valid = 0, with_levels = 0, improved = 0, glm_rows = 0, mahe_better = 0,
      flagged_std_mse = 0;
  double mean_levels = 0.0;
  StageRuntimes totals;
  for (const auto& r : results) {
    totals.sampling_s += r.runtimes.sampling_s;
    totals.detection_s += r.runtimes.detection_s;
    totals.linear_s += r.runtimes.linear_s;
    totals.interaction_s += r.runtimes.interaction_s;
    if (!r.trial_valid) {
      invalid_trials.insert(r.trial);
      continue;
    }
    ++n_valid;
    rp.push_back(r.r_precision);
    if (r.std_mse_flagged)
      ++flagged_std_mse;
    else
      sm.push_back(r.std_mse);
    mean_levels += static_cast<double>(r.L);
    if (r.L >= 1) {
      ++with_levels;
      if (r.per_level_metric.back() < r.per_level_metric.front()) ++improved;
    }
    if (r.glm_test_mse >= 0.0) {
      ++glm_rows;
      if (r.mahe_test_mse < r.glm_test_mse) ++mahe_better;
    }
  }
  if (n_valid > 0) mean_levels /= n_valid;

  nlohmann::json agg;
  agg["rows"] = results.size();
  agg["valid_rows"] = n_valid;
  agg["invalid_trials"] = std::vector<int>(invalid_trials.begin(), invalid_trials.end());
  agg["r_precision"] = {{"mean", mean_of(rp)}, {"std", sample_std(rp)}, {"n", rp.size()}};
  agg["std_mse"] = {{"mean", mean_of(sm)},
                    {"std", sample_std(sm)},
                    {"n", sm.size()},
                    {"flagged", flagged_std_mse}};
  agg["mean_levels"] = mean_levels;
  agg["rows_with_levels"] = with_levels;
  agg["improved_over_linear"] = improved;
  agg["improved_fraction"] =
      with_levels > 0 ? static_cast<double>(improved) / with_levels : 0.0;
  if (glm_rows > 0) {
    agg["glm_rows"] = glm_rows;
    agg["mahe_better_than_glm_fraction"] = static_cast<double>(mahe_better) / glm_rows;
  }

  nlohmann::json doc;
  doc["config"] = config;
  doc["results"] = agg;
  doc["runtimes_s"] = {
      {"sampling_and_inference", totals.sampling_s},
      {"detection", totals.detection_s},
      {"linear_fit", totals.linear_s},
      {"interaction_fits", totals.interaction_s},
      {"total", totals.sampling_s + totals.detection_s + totals.linear_s + totals.interaction_s}};
  return doc.dump(2);
}

}  // namespace mahe
