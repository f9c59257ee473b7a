#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mahe/common.hpp"
#include "mahe/hierarchy.hpp"
#include "mahe/linreg.hpp"
#include "mahe/sampler.hpp"
#include "mahe/synthfn.hpp"

namespace mahe {

struct BaseModelConfig {
  std::vector<Index> hidden = {64, 64, 64};
  double learning_rate = 5e-3;
  int max_epochs = 2000;
  int patience = 200;
  Index batch_size = 128;
  Index n_train = 3000;
};

struct BenchConfig {
  std::string function_id = "F1";
  int trials = 10;
  int instances_per_trial = 20;
  double sigma = 0.6;
  std::uint64_t seed = 0;
  int jobs = 1;
  Index probes = 1000;  // interaction-fit probe points per instance
  bool run_glm_baseline = false;
  double glm_lambda_fraction = 0.01;  // of lambda_max
  BaseModelConfig base;
  SamplerConfig sampler_template;  // n/metric defaults; sigma+seed overridden
  StoppingRule stop;
  HierarchyConfig hierarchy;
};

struct StageRuntimes {
  double sampling_s = 0.0;  // sampling + black-box inference
  double detection_s = 0.0;
  double linear_s = 0.0;
  double interaction_s = 0.0;
};

struct BenchResult {
  std::string function_id;
  int trial = 0;
  int instance = 0;
  Vector location;
  double r_precision = 0.0;
  double std_mse = 1.0;
  bool std_mse_flagged = false;  // zero truth variance: raw MSE reported
  std::vector<double> per_level_metric;
  Index L = 0;
  bool trial_valid = true;  // base model met its fit gate
  double base_train_r2 = 0.0;
  double glm_test_mse = -1.0;   // -1 when the baseline is off
  double mahe_test_mse = -1.0;
  StageRuntimes runtimes;
};

struct StdMseResult {
  double value = 1.0;
  bool flagged = false;  // standardization failed, raw MSE reported
};

// Probe points uniform in the sigma-ball around x; both the explanation's
// truth-set interaction model (zero if that exact set was never fit) and the
// ground-truth term are probe-mean-centered; MSE / variance of the centered
// truth.
StdMseResult std_mse(const HierarchicalExplanation& expl, const SyntheticFunction& fn,
                     const Vector& x, Index probes, double sigma, std::uint64_t seed);

struct GlmBaseline {
  Vector linear_w;
  std::vector<std::pair<std::vector<Index>, double>> pair_coefficients;
  std::vector<std::vector<Index>> ranking;  // pairs by |coefficient| desc
  double intercept = 0.0;
  double test_mse = 0.0;
  double lambda = 0.0;
};

// Lasso GLM over features plus all pairwise products, weighted by the kernel.
GlmBaseline glm_pairwise_baseline(const LocalDataset& data, double lambda_fraction = 0.01);

std::vector<BenchResult> run_synthetic(const BenchConfig& cfg);

// Mean/std aggregation plus per-stage runtime totals as a JSON document.
std::string bench_summary_json(const BenchConfig& cfg, const std::vector<BenchResult>& results);
// Deterministic per-instance rows; a nonempty comment is written first as a
// "# ..." line (config audit trail). Stage runtimes live in the JSON summary.
void bench_results_csv(const std::vector<BenchResult>& results, const std::string& path,
                       const std::string& comment = "");

// Base-model helper shared with the CLI: trains a seeded network on uniform
// [-1,1]^p draws of fn, reporting train R^2.
std::pair<Network, double> train_base_model(const SyntheticFunction& fn,
                                            const BaseModelConfig& cfg, std::uint64_t seed);

struct LargePConfig {
  std::vector<Index> hidden = {50, 30, 10};
  double l1 = 5e-4;
  double learning_rate = 5e-3;
  // fixed-length budget: the net is read for weight structure (see
  // HierarchyConfig::detector_epochs)
  int max_epochs = 2000;
  int patience = 2000;
  Index batch_size = 0;  // full batch
  std::uint64_t seed = 0;
};

// Trains an L1-regularized network on the full dataset (standardized targets,
// seeded 90/10 split), scores every feature pair by summed first-layer
// strength, and returns the ranking AUC against the ground-truth pairs.
double large_p_detection_auc(const LargePDataset& data, const LargePConfig& cfg);

}  // namespace mahe
