#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mahe/common.hpp"
#include "mahe/hierarchy.hpp"

namespace mahe {

struct InteractionPattern {
  enum class PatternKind { positional, valued_ordered };
  PatternKind kind = PatternKind::positional;
  std::vector<Index> indices;       // positional
  std::vector<std::string> tokens;  // valued_ordered, in order

  void validate() const;
  std::string describe() const;
};

struct PolarityReport {
  InteractionPattern pattern;
  int n_matched = 0;
  int n_detected = 0;
  double fraction_positive = 0.0;  // over detected instances
  double fraction_negative = 0.0;
  double mean_separation = 0.0;  // avg positions between first and last match
  double mean_pairwise_distance = 0.0;
  bool separation_ok = true;  // instances farther apart than sigma on average
  std::vector<std::string> errors;  // per-instance predictor failures

  // per matched instance, aligned with matched_instances
  std::vector<Index> matched_instances;
  std::vector<bool> detected;
  std::vector<double> attributions;
};

struct EditConfig {
  double c = 3.0;  // negation magnitude, paper range [3,4]
  int fine_tune_steps = 200;
  double fine_tune_lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Leftmost in-order match of the pattern tokens (any gaps). Positional
// patterns pass through when in range.
std::optional<std::vector<Index>> match_pattern(const InteractionPattern& pattern,
                                                const Instance& instance);

struct ScanOptions {
  SamplerConfig sampler;
  StoppingRule stop;
  HierarchyConfig hierarchy;
  bool keep_explanations = false;  // retain per-instance pipelines for editing
};

struct ScanOutput {
  PolarityReport report;
  std::vector<std::optional<ExplainResult>> pipelines;  // per matched instance
  std::vector<Index> detected_level;                    // level of the matched set, -1 if absent
};

ScanOutput polarity_scan(const InteractionPattern& pattern, const std::vector<Instance>& instances,
                         const Predictor& f, const ScanOptions& opts);

// Eq.-style negated targets: phi_tilde = phi_K - (1+c) * g'_k on every
// vicinity sample; kernel weights preserved.
WeightedData negate_interaction(const HierarchicalExplanation& expl, Index k,
                                const EditConfig& cfg, const LocalDataset& data);

// Fine-tunes a network predictor on the modified targets; logistic heads are
// matched in log-odds space. The input handle is untouched.
Predictor edit_model(const Predictor& f, const WeightedData& dtilde, const EditConfig& cfg);

struct EvidenceResult {
  PolarityReport before;
  PolarityReport after;
  Index edited_instance = -1;
  Index edited_level = -1;
  double metric_delta = 0.0;  // held-out task metric change (edited - original)
  bool inconclusive = false;  // pattern never detected before the edit

  std::string to_json() const;
  std::string to_csv() const;  // pattern, N_s, %+ before, N_s, %- after
};

// Condition 1 then condition 2: scan, edit at the strongest detection,
// rescan with the edited model. eval_X supplies held-out rows for the task
// metric (accuracy for probability heads, MSE for regression).
EvidenceResult context_free_evidence(const InteractionPattern& pattern,
                                     const std::vector<Instance>& instances, const Predictor& f,
                                     const ScanOptions& opts, const EditConfig& edit_cfg,
                                     const Matrix& eval_X);

}  // namespace mahe
