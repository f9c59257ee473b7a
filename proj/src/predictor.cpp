#include "mahe/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"
#include "mahe/subprocess.hpp"

namespace mahe {

// One child process per external handle; calls serialize through the mutex.
struct ExternalState {
  std::string command;
  std::unique_ptr<Subprocess> proc;
  std::mutex mu;
  long next_id = 0;

  explicit ExternalState(std::string cmd) : command(std::move(cmd)) {}
};

Predictor Predictor::builtin(const SyntheticFunction& fn) {
  Predictor p;
  p.source_ = Source::builtin;
  p.fn_ = fn;
  p.head_ = Head::regression;
  return p;
}

Predictor Predictor::builtin(const std::string& fn_id) {
  return builtin(SyntheticFunction::by_id(fn_id));
}

Predictor Predictor::network(Network net) {
  Predictor p;
  p.source_ = Source::network;
  p.head_ = net.config().output == OutputHead::logistic ? Head::probability : Head::regression;
  p.net_ = std::make_shared<const Network>(std::move(net));
  return p;
}

Predictor Predictor::network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return network(Network::from_json(buf.str()));
}

Predictor Predictor::external(const std::string& command, Head head, Index batch_limit,
                              double timeout_s) {
  if (command.empty()) throw ConfigError("external predictor command is empty");
  if (batch_limit < 1) throw ConfigError("batch_limit must be positive");
  Predictor p;
  p.source_ = Source::external;
  p.head_ = head;
  p.batch_limit_ = batch_limit;
  p.timeout_s_ = timeout_s;
  p.ext_ = std::make_shared<ExternalState>(command);
  return p;
}

bool Predictor::tunable() const { return source_ == Source::network; }

const Network& Predictor::net() const {
  if (source_ != Source::network)
    throw CapabilityError("predictor is not a toolkit network: " + describe());
  return *net_;
}

Predictor Predictor::with_net(Network net) const {
  if (source_ != Source::network)
    throw CapabilityError("cannot swap weights of a non-network predictor: " + describe());
  Predictor p = *this;
  p.net_ = std::make_shared<const Network>(std::move(net));
  p.queries_ = std::make_shared<std::atomic<long>>(0);
  return p;
}

Predictor Predictor::snapshot() const {
  if (!tunable()) throw CapabilityError("snapshot requires a tunable predictor: " + describe());
  return with_net(*net_);
}

std::string Predictor::describe() const {
  switch (source_) {
    case Source::builtin: return "builtin:" + fn_.id;
    case Source::network: return "network";
    case Source::external: return "external:" + ext_->command;
  }
  return "?";
}

Vector Predictor::predict(const Matrix& X) const {
  Vector out(X.rows());
  for (Index start = 0; start < X.rows(); start += batch_limit_) {
    const Index len = std::min(batch_limit_, X.rows() - start);
    out.segment(start, len) = predict_chunk(X.middleRows(start, len));
  }
  queries_->fetch_add(X.rows());
  if (head_ == Head::probability)
    for (Index i = 0; i < out.size(); ++i)
      if (out[i] < 0.0 || out[i] > 1.0 || !std::isfinite(out[i]))
        throw PredictorError("probability head produced a value outside [0,1]: " +
                             format_double(out[i]));
  return out;
}

Vector Predictor::surrogate_targets(const Matrix& X) const {
  Vector out = predict(X);
  if (head_ == Head::probability && !raw_prob_)
    for (Index i = 0; i < out.size(); ++i) out[i] = logit(out[i]);
  return out;
}

Vector Predictor::predict_chunk(const Matrix& X) const {
  if (source_ == Source::builtin) {
    Vector out(X.rows());
    for (Index r = 0; r < X.rows(); ++r) out[r] = fn_.eval(X.row(r).transpose());
    return out;
  }
  if (source_ == Source::network) return net_->forward(X);

  std::lock_guard<std::mutex> lock(ext_->mu);
  if (!ext_->proc) ext_->proc = std::make_unique<Subprocess>(ext_->command);
  Subprocess& proc = *ext_->proc;

  const long base_id = ext_->next_id;
  ext_->next_id += X.rows();
  for (Index r = 0; r < X.rows(); ++r) {
    nlohmann::json req;
    req["id"] = base_id + r;
    std::vector<double> feats(X.cols());
    for (Index c = 0; c < X.cols(); ++c) feats[static_cast<std::size_t>(c)] = X(r, c);
    req["features"] = feats;
    proc.write_line(req.dump());
  }

  Vector out = Vector::Constant(X.rows(), std::numeric_limits<double>::quiet_NaN());
  Index remaining = X.rows();
  while (remaining > 0) {
    auto line = proc.read_line(timeout_s_);
    if (!line) {
      int code = 0;
      const bool dead = proc.exited(&code);
      throw PredictorError("predictor closed its output with " + std::to_string(remaining) +
                           " responses pending" +
                           (dead ? " (exit code " + std::to_string(code) + ")" : "") + ": " +
                           ext_->command);
    }
    if (line->find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(*line);
      const long id = resp.at("id").get<long>();
      const double y = resp.at("y").get<double>();
      const long slot = id - base_id;
      if (slot < 0 || slot >= X.rows())
        throw PredictorError("predictor returned unknown id " + std::to_string(id));
      if (!std::isnan(out[slot]))
        throw PredictorError("predictor returned duplicate id " + std::to_string(id));
      out[slot] = y;
      --remaining;
    } catch (const nlohmann::json::exception& e) {
      throw PredictorError(std::string("malformed predictor response (") + e.what() +
                           "): " + line->substr(0, 200));
    }
  }
  return out;
}

Predictor parse_predictor(const std::string& spec, Head external_head) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw ConfigError("predictor spec needs a builtin:/network:/external: prefix: " + spec);
  const std::string scheme = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (scheme == "builtin") return Predictor::builtin(rest);
  if (scheme == "network") return Predictor::network_file(rest);
  if (scheme == "external") return Predictor::external(rest, external_head);
  throw ConfigError("unknown predictor scheme: " + scheme);
}

}  // namespace mahe
