#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mahe/common.hpp"

namespace mahe {

enum class OutputHead { identity, logistic };

// Both optimizers are fully deterministic given the seed.  With `adam`, the
// first-layer L1 proximal threshold is scaled per parameter by the same
// adaptive step size applied to the gradient, so irrelevant weights reach
// exact zeros at the rate the data loss would otherwise move them.
enum class Optimizer { gd, adam };

// Dense feed-forward net: ReLU hidden layers, identity or logistic output.
struct NetworkConfig {
  std::vector<Index> layer_sizes;  // input p, hidden widths, output 1
  OutputHead output = OutputHead::identity;
  Optimizer optimizer = Optimizer::gd;
  double l1_coeff = 0.0;      // first-layer weights only, proximal shrinkage
  double l2_coeff = 0.0;      // all weights, in the gradient
  double learning_rate = 1e-3;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  Index batch_size = 0;           // 0 = full batch
  bool zero_init_output = false;  // start with output layer at zero
  bool restore_best = true;       // return best-validation weights; when false,
                                  // keep the final epoch's weights (useful when
                                  // the trained weights are read for structure
                                  // rather than used for prediction)

  void validate() const;  // throws ConfigError
};

struct TrainReport {
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  int epochs_run = 0;
  bool stopped_early = false;
};

struct WeightedData {
  Matrix X;  // rows = samples
  Vector y;
  Vector w;
};

class Network {
 public:
  Network() = default;
  explicit Network(const NetworkConfig& cfg);  // seeded uniform He-style init

  // outputs for a batch (rows = samples)
  Vector forward(const Matrix& X) const;
  // pre-sigmoid outputs; equals forward() for identity heads
  Vector forward_linear(const Matrix& X) const;

  const NetworkConfig& config() const { return cfg_; }
  Index input_size() const { return cfg_.layer_sizes.front(); }
  Index n_layers() const { return static_cast<Index>(weights_.size()); }
  const Matrix& weight(Index l) const { return weights_[static_cast<std::size_t>(l)]; }
  const Vector& bias(Index l) const { return biases_[static_cast<std::size_t>(l)]; }
  Matrix& weight(Index l) { return weights_[static_cast<std::size_t>(l)]; }
  Vector& bias(Index l) { return biases_[static_cast<std::size_t>(l)]; }

  std::string to_json() const;
  static Network from_json(const std::string& text);

  bool same_parameters(const Network& other) const;

 private:
  NetworkConfig cfg_;
  std::vector<Matrix> weights_;  // fan_out x fan_in
  std::vector<Vector> biases_;
};

// Trains from a fresh seeded init; early-stops on validation data loss and
// restores the best-validation weights.
std::pair<Network, TrainReport> train(const NetworkConfig& cfg, const WeightedData& train_set,
                                      const WeightedData& val_set);

// Same contract as train(), but fits on a standardized view (weighted column
// and target statistics of the training split) and folds the affine
// transforms back into the first and last layers, so the returned network
// operates on raw coordinates. Fixed-learning-rate descent is scale
// sensitive; vicinity features are O(sigma/sqrt(p)) and would otherwise
// starve the first layer of gradient. Identity output heads only. Report
// losses are in standardized target units.
std::pair<Network, TrainReport> train_standardized(const NetworkConfig& cfg,
                                                   const WeightedData& train_set,
                                                   const WeightedData& val_set);

// Continues full-batch plain gradient descent from the current parameters
// (always plain steps, independent of the optimizer used to train the net).
// match_logits fits the pre-sigmoid output to the targets (logit-space edit
// training for logistic heads).
Network fine_tune(const Network& net, const WeightedData& data, int steps, double learning_rate,
                  bool match_logits = false);

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool near_kink = false;  // a hidden pre-activation sits within the FD step of 0
};

// Central finite differences (step 1e-5) against the analytic gradient of the
// per-sample data loss.
GradCheckResult gradient_check(const Network& net, const Vector& x, double y);

}  // namespace mahe
