#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "mahe/common.hpp"
#include "mahe/net.hpp"
#include "mahe/synthfn.hpp"

namespace mahe {

enum class Head { regression, probability };

// Uniform black-box interface over built-in synthetic functions, toolkit
// networks, and external line-protocol processes. Rows of a batch are points
// in the instance's numeric representation (raw values for continuous/mixed,
// 0/1 masks for binary and token kinds).
class Predictor {
 public:
  static Predictor builtin(const SyntheticFunction& fn);
  static Predictor builtin(const std::string& fn_id);
  static Predictor network(Network net);
  static Predictor network_file(const std::string& path);
  static Predictor external(const std::string& command, Head head = Head::regression,
                            Index batch_limit = 256, double timeout_s = 60.0);

  // raw model outputs, chunked internally by batch_limit
  Vector predict(const Matrix& X) const;
  // what surrogates fit: log-odds for probability heads unless raw mode is on
  Vector surrogate_targets(const Matrix& X) const;

  Head head() const { return head_; }
  bool tunable() const;
  const Network& net() const;  // CapabilityError unless a network handle
  Predictor with_net(Network net) const;
  Predictor snapshot() const;  // deep copy; CapabilityError unless tunable

  void set_raw_probabilities(bool raw) { raw_prob_ = raw; }
  bool raw_probabilities() const { return raw_prob_; }

  long queries() const { return queries_->load(); }
  std::string describe() const;

 private:
  Predictor() = default;

  enum class Source { builtin, network, external };
  Source source_ = Source::builtin;
  Head head_ = Head::regression;
  bool raw_prob_ = false;
  Index batch_limit_ = 4096;
  double timeout_s_ = 60.0;

  SyntheticFunction fn_;
  std::shared_ptr<const Network> net_;
  std::shared_ptr<struct ExternalState> ext_;
  std::shared_ptr<std::atomic<long>> queries_ = std::make_shared<std::atomic<long>>(0);

  Vector predict_chunk(const Matrix& X) const;
};

// Parses predictor specs of the form builtin:F1, network:path.json,
// external:command line...
Predictor parse_predictor(const std::string& spec, Head external_head);

}  // namespace mahe
