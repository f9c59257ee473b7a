#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mahe/common.hpp"
#include "mahe/detector.hpp"
#include "mahe/net.hpp"
#include "mahe/sampler.hpp"

namespace mahe {

struct LinearSurrogate {
  Vector w;
  double b = 0.0;
  double fit_r2 = 0.0;    // test-split R^2 (regression surrogates)
  double fit_loss = 0.0;  // test-split metric: weighted MSE or 1-AUC
  bool ridge_fallback = false;
};

struct InteractionModel {
  std::vector<Index> indices;
  Network net;  // trained on the composite's residual, inputs x_I
  double detection_strength = 0.0;     // candidate strength from the detector
  double attribution_at_origin = 0.0;  // vicinity-mean-centered g'(origin)
};

struct StoppingRule {
  double min_improvement = 0.10;  // relative validation-metric improvement
  int patience = 2;               // consecutive weak levels tolerated
  Index max_levels = 10;
};

struct HierarchyConfig {
  // detection network
  std::vector<Index> detector_hidden = {50, 30, 10};
  double detector_l1 = 5e-4;
  double detector_lr = 5e-3;
  // The detector net is read for its first-layer sparsity structure, not used
  // for prediction, and the L1 cleanup keeps improving the ranking long after
  // the validation loss plateaus -- so the default budget is fixed-length.
  int detector_epochs = 3000;
  int detector_patience = 3000;
  // interaction models
  std::vector<Index> interaction_hidden = {30, 10};
  double interaction_l2 = 1e-5;
  double interaction_lr = 1e-3;
  int interaction_epochs = 600;
  int interaction_patience = 60;
  bool retrain_all_levels = false;  // refit every g' on each level's residual
  Index max_order = 0;              // 0 = feature count
  std::uint64_t seed = 0;
};

struct HierarchicalExplanation {
  LinearSurrogate linear;
  std::vector<InteractionModel> levels;
  std::vector<double> per_level_fit;  // test metric, entry 0 = linear level
  std::vector<double> per_level_train_mse;
  Index L = 0;
  Instance origin;
  double sigma = 0.0;
  bool classification = false;
  bool no_interactions = false;
  std::string failure;  // nonempty if a level failed to train

  std::string to_json() const;
  std::string to_tsv() const;  // level, indices, attribution, fit metric
};

LinearSurrogate fit_linear(const LocalDataset& data, bool classification = false);

// phi_K outputs of the composite surrogate on representation rows
Vector composite_output(const HierarchicalExplanation& expl, const Matrix& X);

// Residual-fits one more interaction model with the linear part frozen.
// Divergence marks the explanation failed and returns it unchanged otherwise.
HierarchicalExplanation fit_level(HierarchicalExplanation expl, const LocalDataset& data,
                                  const InteractionCandidate& candidate,
                                  const HierarchyConfig& cfg);

struct PipelineTimings {
  double sampling_s = 0.0;  // sampling + black-box inference
  double detection_s = 0.0;
  double linear_s = 0.0;
  double interaction_s = 0.0;
};

struct ExplainResult {
  HierarchicalExplanation explanation;
  LocalDataset data;
  InteractionRanking ranking;
  PipelineTimings timings;
};

ExplainResult explain(const Instance& x, const Predictor& f, const SamplerConfig& sampler_cfg,
                      const StoppingRule& stop, const HierarchyConfig& cfg);

struct AttributionEntry {
  std::vector<Index> indices;  // single feature for linear terms
  double score = 0.0;
  bool interaction = false;
};

// Level 0: per-feature w_i * x_i. Level K adds the K interaction scores.
// All scores are centered by their vicinity-sample means.
std::vector<AttributionEntry> attribution(const HierarchicalExplanation& expl,
                                          const LocalDataset& data, Index level);

}  // namespace mahe
