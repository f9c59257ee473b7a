#include "mahe/contextfree.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"
#include "mahe/metrics.hpp"
#include "mahe/rng.hpp"

namespace mahe {

void InteractionPattern::validate() const {
  if (kind == PatternKind::valued_ordered) {
    if (tokens.size() < 2) throw ConfigError("valued pattern needs at least two tokens");
  } else {
    if (indices.size() < 2) throw ConfigError("positional pattern needs at least two indices");
    std::vector<Index> s = indices;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw ConfigError("positional pattern indices must be distinct");
  }
}

std::string InteractionPattern::describe() const {
  std::ostringstream out;
  out << "(";
  if (kind == PatternKind::valued_ordered) {
    for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? ", " : "") << tokens[i];
  } else {
    for (std::size_t i = 0; i < indices.size(); ++i) out << (i ? ", " : "") << indices[i];
  }
  out << ")";
  return out.str();
}

void EditConfig::validate() const {
  if (!(c > 0.0)) throw ConfigError("edit: c must be positive");
  if (fine_tune_steps < 0) throw ConfigError("edit: negative fine-tune steps");
  if (!(fine_tune_lr > 0.0)) throw ConfigError("edit: fine-tune learning rate must be positive");
}

std::optional<std::vector<Index>> match_pattern(const InteractionPattern& pattern,
                                                const Instance& instance) {
  pattern.validate();
  if (pattern.kind == InteractionPattern::PatternKind::valued_ordered) {
    if (instance.kind != Kind::token_sequence)
      throw ConfigError("valued pattern requires a token instance");
    std::vector<Index> pos;
    std::size_t next = 0;
    for (std::size_t t = 0; t < instance.tokens.size() && next < pattern.tokens.size(); ++t)
      if (instance.tokens[t] == pattern.tokens[next]) {
        pos.push_back(static_cast<Index>(t));
        ++next;
      }
    if (next < pattern.tokens.size()) return std::nullopt;
    return pos;
  }
  for (Index i : pattern.indices)
    if (i < 0 || i >= instance.size()) return std::nullopt;
  return pattern.indices;
}

namespace {

double mean_pairwise(const std::vector<Instance>& instances, Metric metric) {
  double acc = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < instances.size(); ++i)
    for (std::size_t j = i + 1; j < instances.size(); ++j) {
      acc += distance(instances[i], instances[j], metric);
      ++count;
    }
  return count ? acc / count : 0.0;
}

double separation(const std::vector<Index>& pos) {
  if (pos.size() < 2) return 0.0;
  const auto [mn, mx] = std::minmax_element(pos.begin(), pos.end());
  return static_cast<double>(*mx - *mn) - static_cast<double>(pos.size() - 1);
}

}  // namespace

ScanOutput polarity_scan(const InteractionPattern& pattern, const std::vector<Instance>& instances,
                         const Predictor& f, const ScanOptions& opts) {
  pattern.validate();
  if (instances.empty()) throw ConfigError("polarity_scan: no instances");

  ScanOutput out;
  PolarityReport& rep = out.report;
  rep.pattern = pattern;
  rep.mean_pairwise_distance = mean_pairwise(instances, opts.sampler.metric);
  rep.separation_ok = rep.mean_pairwise_distance > opts.sampler.sigma;
  if (!rep.separation_ok)
    log(LogLevel::warn, "polarity_scan: instances sit closer than sigma on average (" +
                            format_double(rep.mean_pairwise_distance) + " <= " +
                            format_double(opts.sampler.sigma) + ")");

  int positive = 0, negative = 0;
  double sep_acc = 0.0;
  for (std::size_t idx = 0; idx < instances.size(); ++idx) {
    const auto match = match_pattern(pattern, instances[idx]);
    if (!match) continue;
    rep.n_matched += 1;
    rep.matched_instances.push_back(static_cast<Index>(idx));
    sep_acc += separation(*match);

    std::vector<Index> want = *match;
    std::sort(want.begin(), want.end());

    SamplerConfig scfg = opts.sampler;
    scfg.seed = derive_seed(opts.sampler.seed, seed_stream::instance0 + idx);
    HierarchyConfig hcfg = opts.hierarchy;
    hcfg.seed = scfg.seed;
    bool detected = false;
    double score = 0.0;
    Index level = -1;
    try {
      ExplainResult res = explain(instances[idx], f, scfg, opts.stop, hcfg);
      for (std::size_t k = 0; k < res.explanation.levels.size(); ++k)
        if (res.explanation.levels[k].indices == want) {
          detected = true;
          level = static_cast<Index>(k);
          score = res.explanation.levels[k].attribution_at_origin;
          break;
        }
      if (opts.keep_explanations)
        out.pipelines.push_back(std::move(res));
      else
        out.pipelines.push_back(std::nullopt);
    } catch (const PredictorError& e) {
      rep.errors.push_back("instance " + std::to_string(idx) + ": " + e.what());
      out.pipelines.push_back(std::nullopt);
      out.detected_level.push_back(-1);
      rep.detected.push_back(false);
      rep.attributions.push_back(0.0);
      continue;
    }
    out.detected_level.push_back(level);
    rep.detected.push_back(detected);
    rep.attributions.push_back(score);
    if (detected) {
      rep.n_detected += 1;
      (score >= 0.0 ? positive : negative) += 1;
    }
  }
  if (rep.n_matched > 0) rep.mean_separation = sep_acc / rep.n_matched;
  if (rep.n_detected > 0) {
    rep.fraction_positive = static_cast<double>(positive) / rep.n_detected;
    rep.fraction_negative = static_cast<double>(negative) / rep.n_detected;
  }
  return out;
}

WeightedData negate_interaction(const HierarchicalExplanation& expl, Index k,
                                const EditConfig& cfg, const LocalDataset& data) {
  cfg.validate();
  if (k < 1 || k > expl.L) throw ConfigError("negate_interaction: level out of range");
  const auto& model = expl.levels[static_cast<std::size_t>(k - 1)];
  Matrix sub(data.n(), static_cast<Index>(model.indices.size()));
  for (std::size_t j = 0; j < model.indices.size(); ++j)
    sub.col(static_cast<Index>(j)) = data.X.col(model.indices[j]);
  const Vector gk = model.net.forward(sub);
  WeightedData dtilde;
  dtilde.X = data.X;
  dtilde.y = composite_output(expl, data.X) - (1.0 + cfg.c) * gk;
  dtilde.w = data.w;
  return dtilde;
}

Predictor edit_model(const Predictor& f, const WeightedData& dtilde, const EditConfig& cfg) {
  cfg.validate();
  if (!f.tunable())
    throw CapabilityError("edit_model: predictor is not fine-tunable: " + f.describe());
  const bool match_logits = f.head() == Head::probability;
  Network tuned =
      fine_tune(f.net(), dtilde, cfg.fine_tune_steps, cfg.fine_tune_lr, match_logits);
  return f.with_net(std::move(tuned));
}

EvidenceResult context_free_evidence(const InteractionPattern& pattern,
                                     const std::vector<Instance>& instances, const Predictor& f,
                                     const ScanOptions& opts, const EditConfig& edit_cfg,
                                     const Matrix& eval_X) {
  pattern.validate();
  edit_cfg.validate();

  ScanOptions before_opts = opts;
  before_opts.keep_explanations = true;
  ScanOutput before = polarity_scan(pattern, instances, f, before_opts);
  if (before.report.n_matched < 2)
    throw ConfigError("context_free_evidence: need at least 2 matched instances, have " +
                      std::to_string(before.report.n_matched));

  EvidenceResult out;
  out.before = before.report;
  if (before.report.n_detected == 0) {
    out.inconclusive = true;
    out.after = before.report;
    log(LogLevel::warn, "context_free_evidence: pattern never detected; evidence inconclusive");
    return out;
  }

  // edit at the matched instance with the strongest detected attribution
  std::size_t pick = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < before.report.matched_instances.size(); ++i)
    if (before.report.detected[i] && std::abs(before.report.attributions[i]) > best) {
      best = std::abs(before.report.attributions[i]);
      pick = i;
    }
  const ExplainResult& pipeline = *before.pipelines[pick];
  out.edited_instance = before.report.matched_instances[pick];
  out.edited_level = before.detected_level[pick] + 1;  // 1-based for negation

  const WeightedData dtilde =
      negate_interaction(pipeline.explanation, out.edited_level, edit_cfg, pipeline.data);
  const Predictor edited = edit_model(f, dtilde, edit_cfg);

  ScanOptions after_opts = opts;
  after_opts.keep_explanations = false;
  out.after = polarity_scan(pattern, instances, edited, after_opts).report;

  if (eval_X.rows() > 0) {
    const Vector orig = f.predict(eval_X);
    const Vector now = edited.predict(eval_X);
    if (f.head() == Head::probability) {
      // task metric: agreement with the original model's decisions
      std::vector<int> labels(static_cast<std::size_t>(orig.size()));
      for (Index i = 0; i < orig.size(); ++i)
        labels[static_cast<std::size_t>(i)] = orig[i] >= 0.5;
      out.metric_delta = accuracy(now, labels, 0.5) - 1.0;
    } else {
      const Vector ones = Vector::Ones(orig.size());
      out.metric_delta = weighted_mse(now, orig, ones);
    }
  }
  return out;
}

std::string EvidenceResult::to_json() const {
  nlohmann::json doc;
  auto report_json = [](const PolarityReport& r) {
    nlohmann::json j;
    j["pattern"] = r.pattern.describe();
    j["n_matched"] = r.n_matched;
    j["n_detected"] = r.n_detected;
    j["fraction_positive"] = r.fraction_positive;
    j["fraction_negative"] = r.fraction_negative;
    j["mean_separation"] = r.mean_separation;
    j["mean_pairwise_distance"] = r.mean_pairwise_distance;
    j["separation_ok"] = r.separation_ok;
    if (!r.errors.empty()) j["errors"] = r.errors;
    return j;
  };
  doc["pattern"] = before.pattern.describe();
  doc["before"] = report_json(before);
  doc["after"] = report_json(after);
  doc["metric_delta"] = metric_delta;
  doc["edited_instance_id"] = edited_instance;
  doc["edited_level"] = edited_level;
  doc["inconclusive"] = inconclusive;
  return doc.dump(2);
}

std::string EvidenceResult::to_csv() const {
  std::ostringstream out;
  out << "interaction,n_matched_before,frac_positive_before,n_matched_after,frac_negative_after\n";
  out << "\"" << before.pattern.describe() << "\"," << before.n_matched << ","
      << format_double(before.fraction_positive) << "," << after.n_matched << ","
      << format_double(after.fraction_negative) << "\n";
  return out.str();
}

}  // namespace mahe
