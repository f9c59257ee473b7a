#include "mahe/detector.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"

namespace mahe {

Vector unit_influence(const Network& net) {
  if (net.n_layers() < 2) throw ConfigError("unit_influence: network has no hidden layer");
  // walk back from the output weights through the hidden stack, all entries
  // absolute
  Eigen::RowVectorXd acc = net.weight(net.n_layers() - 1).cwiseAbs();
  for (Index l = net.n_layers() - 2; l >= 1; --l) acc = acc * net.weight(l).cwiseAbs();
  return acc.transpose();
}

namespace {

bool candidate_order(const InteractionCandidate& a, const InteractionCandidate& b) {
  if (a.strength != b.strength) return a.strength > b.strength;
  if (a.indices.size() != b.indices.size()) return a.indices.size() < b.indices.size();
  return a.indices < b.indices;
}

bool strict_subset(const std::vector<Index>& a, const std::vector<Index>& b) {
  if (a.size() >= b.size()) return false;
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

InteractionRanking detect(const Network& net, Index max_order) {
  const Index p = net.input_size();
  if (max_order < 2 || max_order > p)
    throw ConfigError("detect: max_order must be in [2, feature count]");

  const Vector z = unit_influence(net);
  const Matrix& W1 = net.weight(0);
  const Index h = W1.rows();

  std::map<std::vector<Index>, double> merged;
  std::vector<Index> order(static_cast<std::size_t>(p));
  for (Index j = 0; j < h; ++j) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return std::abs(W1(j, a)) > std::abs(W1(j, b));
    });
    for (Index r = 2; r <= max_order; ++r) {
      const double weakest = std::abs(W1(j, order[static_cast<std::size_t>(r) - 1]));
      const double strength = z[j] * weakest;
      if (strength <= 0.0) break;  // prefixes only weaken further
      std::vector<Index> key(order.begin(), order.begin() + r);
      std::sort(key.begin(), key.end());
      merged[std::move(key)] += strength;
    }
  }

  InteractionRanking ranking;
  ranking.detector_net = net;
  ranking.p = p;
  ranking.candidates.reserve(merged.size());
  for (auto& [indices, strength] : merged)
    ranking.candidates.push_back({indices, strength});
  std::sort(ranking.candidates.begin(), ranking.candidates.end(), candidate_order);

  // drop strict subsets of higher-ranked candidates
  std::vector<InteractionCandidate> kept;
  for (auto& cand : ranking.candidates) {
    bool pruned = false;
    for (const auto& k : kept)
      if (strict_subset(cand.indices, k.indices)) {
        pruned = true;
        break;
      }
    if (!pruned) kept.push_back(std::move(cand));
  }
  ranking.candidates = std::move(kept);
  return ranking;
}

Matrix pairwise_strengths(const Network& net) {
  const Vector z = unit_influence(net);
  const Matrix& W1 = net.weight(0);
  const Matrix A = W1.cwiseAbs();
  const Index p = W1.cols();
  Matrix S = Matrix::Zero(p, p);
  for (Index j = 0; j < W1.rows(); ++j)
    for (Index a = 0; a < p; ++a)
      for (Index b = a + 1; b < p; ++b) {
        const double s = z[j] * std::min(A(j, a), A(j, b));
        S(a, b) += s;
        S(b, a) += s;
      }
  return S;
}

double r_precision(const InteractionRanking& ranking,
                   const std::vector<std::vector<Index>>& truth) {
  if (truth.empty()) throw ConfigError("r_precision: empty truth");
  std::set<std::vector<Index>> want;
  for (auto t : truth) {
    std::sort(t.begin(), t.end());
    want.insert(std::move(t));
  }
  const std::size_t R = want.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < R && i < ranking.candidates.size(); ++i)
    if (want.count(ranking.candidates[i].indices)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(R);
}

std::string InteractionRanking::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : candidates) {
    nlohmann::json item;
    item["indices"] = c.indices;
    // round to 9 significant digits before emitting as a number
    item["strength"] = std::strtod(format_double(c.strength, 9).c_str(), nullptr);
    arr.push_back(std::move(item));
  }
  return arr.dump(2);
}

}  // namespace mahe
