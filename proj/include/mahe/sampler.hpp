#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mahe/common.hpp"
#include "mahe/instance.hpp"
#include "mahe/predictor.hpp"

namespace mahe {

enum class Metric { l2, cosine, edit };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);
Metric default_metric(Kind kind);

struct SamplerConfig {
  Index n = 1000;
  double sigma = 0.6;            // vicinity scale = truncation radius
  Metric metric = Metric::l2;
  std::uint64_t seed = 0;
  std::optional<Index> max_flips;  // binary/token flip cap; defaults derived from sigma
  double kernel_sigma = 0.0;       // 0 = use sigma

  void validate(Kind kind, Index p) const;
  Index derived_max_flips(Index p) const;
  double effective_kernel_sigma() const { return kernel_sigma > 0.0 ? kernel_sigma : sigma; }
};

// Vicinity samples in representation space, black-box outputs, kernel
// weights, and the deterministic 80/10/10 split.
struct LocalDataset {
  Matrix X;   // n x p representation rows (masks for binary/token kinds)
  Vector y;   // surrogate targets (log-odds for probability heads)
  Vector w;   // Gaussian kernel weights
  Instance origin;
  SamplerConfig config;
  std::vector<Index> train_idx, val_idx, test_idx;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Matrix rows(const std::vector<Index>& idx) const;
  Vector take(const Vector& v, const std::vector<Index>& idx) const;

  // nonempty comment is written first as a "# ..." line (config audit trail)
  void export_csv(const std::string& path, const std::string& comment = "") const;
  void export_meta_json(const std::string& path) const;
};

double distance(const Instance& a, const Instance& b, Metric metric);

// Token-level Levenshtein with unit insert/delete/substitute costs.
Index edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

Vector kernel_weights(const Vector& distances, double sigma);

std::vector<Instance> sample_continuous(const Instance& x, const SamplerConfig& cfg);
std::vector<Instance> sample_binary(const Instance& x, const SamplerConfig& cfg);

struct TokenSamples {
  std::vector<Instance> sequences;  // masked token lists
  Matrix masks;                     // n x (token count), 1 = kept
};
TokenSamples sample_tokens(const Instance& x, const SamplerConfig& cfg);

std::vector<Instance> sample_mixed(const Instance& x, const SamplerConfig& cfg);

// Mixed-kind continuous coordinates enter the representation as perturbation
// z-scores: (value - origin) / (sigma/sqrt(3)), the population std of the
// uniform draw, so they share the binaries' O(1) scale.
Vector mixed_representation(const Instance& origin, const Vector& raw, double sigma);

LocalDataset build_local_dataset(const Instance& x, const Predictor& f, const SamplerConfig& cfg);

}  // namespace mahe
