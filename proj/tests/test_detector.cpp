#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "mahe/detector.hpp"
#include "mahe/errors.hpp"
#include "mahe/net.hpp"
#include "mahe/rng.hpp"

using namespace mahe;

namespace {

Network explicit_net(const std::vector<Index>& sizes, std::uint64_t seed = 1) {
  NetworkConfig cfg;
  cfg.layer_sizes = sizes;
  cfg.seed = seed;
  return Network(cfg);
}

// Independent influence computation: sum over every unit path from a
// first-layer unit to the output of the product of absolute weights.
Vector path_influence(const Network& net) {
  const Index L = net.n_layers();
  const Index h1 = net.weight(0).rows();
  std::function<double(Index, Index)> walk = [&](Index layer, Index unit) -> double {
    if (layer == L - 1) return std::abs(net.weight(layer)(0, unit));
    double s = 0.0;
    const Matrix& W = net.weight(layer);
    for (Index k = 0; k < W.rows(); ++k) s += std::abs(W(k, unit)) * walk(layer + 1, k);
    return s;
  };
  Vector z(h1);
  for (Index j = 0; j < h1; ++j) z[j] = walk(1, j);
  return z;
}

// Independent re-derivation of the ranking: per-unit magnitude-sorted
// prefixes, strengths merged across units, sorted, strict subsets of
// higher-ranked candidates dropped.
std::vector<InteractionCandidate> oracle_ranking(const Network& net, Index max_order) {
  const Vector z = path_influence(net);
  const Matrix& W1 = net.weight(0);
  std::map<std::vector<Index>, double> merged;
  for (Index j = 0; j < W1.rows(); ++j) {
    std::vector<std::pair<double, Index>> row;
    for (Index c = 0; c < W1.cols(); ++c) row.push_back({std::abs(W1(j, c)), c});
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (Index r = 2; r <= max_order; ++r) {
      const double s = z[j] * row[static_cast<std::size_t>(r) - 1].first;
      if (s <= 0.0) break;
      std::vector<Index> key;
      for (Index t = 0; t < r; ++t) key.push_back(row[static_cast<std::size_t>(t)].second);
      std::sort(key.begin(), key.end());
      merged[std::move(key)] += s;
    }
  }
  std::vector<InteractionCandidate> all;
  for (const auto& [k, s] : merged) all.push_back({k, s});
  std::sort(all.begin(), all.end(), [](const InteractionCandidate& a, const InteractionCandidate& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    if (a.indices.size() != b.indices.size()) return a.indices.size() < b.indices.size();
    return a.indices < b.indices;
  });
  std::vector<InteractionCandidate> kept;
  for (const auto& c : all) {
    bool subset = false;
    for (const auto& k : kept)
      if (c.indices.size() < k.indices.size() &&
          std::includes(k.indices.begin(), k.indices.end(), c.indices.begin(), c.indices.end()))
        subset = true;
    if (!subset) kept.push_back(c);
  }
  return kept;
}

Network random_net(Rng& rng) {
  const Index p = 2 + static_cast<Index>(rng.integer(4));       // 2..5 inputs
  const int hidden_layers = 1 + static_cast<int>(rng.integer(3));  // 1..3
  std::vector<Index> sizes{p};
  for (int l = 0; l < hidden_layers; ++l) sizes.push_back(1 + static_cast<Index>(rng.integer(5)));
  sizes.push_back(1);
  Network net = explicit_net(sizes, rng.engine()());
  for (Index l = 0; l < net.n_layers(); ++l) {
    Matrix& W = net.weight(l);
    for (Index r = 0; r < W.rows(); ++r)
      for (Index c = 0; c < W.cols(); ++c) {
        W(r, c) = rng.normal();
        if (rng.uniform() < 0.2) W(r, c) = 0.0;  // exact zeros exercise pruning paths
      }
  }
  return net;
}

}  // namespace

TEST_CASE("unit influence is the output weight for one hidden layer") {
  Network net = explicit_net({3, 4, 1});
  net.weight(1) << 2.0, -3.0, 0.0, 0.5;
  const Vector z = unit_influence(net);
  REQUIRE(z.size() == 4);
  CHECK(z[0] == 2.0);
  CHECK(z[1] == 3.0);
  CHECK(z[2] == 0.0);
  CHECK(z[3] == 0.5);
}

TEST_CASE("unit influence chains absolute weights through the stack") {
  Network net = explicit_net({2, 2, 2, 1});
  net.weight(1) << 1.0, -2.0, -3.0, 4.0;  // layer 2: 2x2
  net.weight(2) << 0.5, -1.0;             // output: 1x2
  const Vector z = unit_influence(net);
  // z_j = sum_k |wout_k| * |W2_kj|
  CHECK(z[0] == doctest::Approx(0.5 * 1.0 + 1.0 * 3.0).epsilon(1e-15));
  CHECK(z[1] == doctest::Approx(0.5 * 2.0 + 1.0 * 4.0).epsilon(1e-15));
}

TEST_CASE("detect reproduces a hand-worked ranking") {
  Network net = explicit_net({3, 2, 1});
  net.weight(0) << 3.0, 2.0, 0.5,  // unit 0 prefers {0,1}
      0.1, 4.0, 1.0;               // unit 1 prefers {1,2}
  net.weight(1) << 2.0, -1.0;      // z = (2, 1)

  // unit 0: prefixes {0,1} -> 2*2=4, {0,1,2} -> 2*0.5=1
  // unit 1: prefixes {1,2} -> 1*1=1, {0,1,2} -> 1*0.1=0.1
  // merged: {0,1}=4, {1,2}=1, {0,1,2}=1.1
  // sorted: {0,1}, {0,1,2}, {1,2}; {1,2} is a strict subset of the
  // higher-ranked {0,1,2} and is dropped.
  const InteractionRanking r = detect(net, 3);
  REQUIRE(r.candidates.size() == 2);
  CHECK(r.candidates[0].indices == std::vector<Index>{0, 1});
  CHECK(r.candidates[0].strength == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(r.candidates[1].indices == std::vector<Index>{0, 1, 2});
  CHECK(r.candidates[1].strength == doctest::Approx(1.1).epsilon(1e-12));

  // capped at pairs, both pairs survive
  const InteractionRanking r2 = detect(net, 2);
  REQUIRE(r2.candidates.size() == 2);
  CHECK(r2.candidates[0].indices == std::vector<Index>{0, 1});
  CHECK(r2.candidates[1].indices == std::vector<Index>{1, 2});
  CHECK(r2.candidates[1].strength == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("detect matches an independent path-enumeration oracle") {
  Rng rng(2024);
  int nonempty = 0;
  for (int t = 0; t < 100; ++t) {
    const Network net = random_net(rng);
    const Index p = net.input_size();
    const Index max_order = 2 + static_cast<Index>(rng.integer(static_cast<std::uint64_t>(p - 1)));

    const Vector z_fast = unit_influence(net);
    const Vector z_slow = path_influence(net);
    REQUIRE(z_fast.size() == z_slow.size());
    for (Index j = 0; j < z_fast.size(); ++j)
      CHECK(z_fast[j] == doctest::Approx(z_slow[j]).epsilon(1e-12));

    const InteractionRanking got = detect(net, max_order);
    const std::vector<InteractionCandidate> want = oracle_ranking(net, max_order);
    REQUIRE(got.candidates.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.candidates[i].indices == want[i].indices);
      CHECK(got.candidates[i].strength == doctest::Approx(want[i].strength).epsilon(1e-12));
    }
    if (!want.empty()) ++nonempty;
  }
  CHECK(nonempty > 50);  // the corpus is not degenerate
}

TEST_CASE("ranking is strength-sorted and free of dominated subsets") {
  Rng rng(77);
  for (int t = 0; t < 30; ++t) {
    const Network net = random_net(rng);
    const InteractionRanking r = detect(net, net.input_size());
    for (std::size_t i = 0; i + 1 < r.candidates.size(); ++i)
      CHECK(r.candidates[i].strength >= r.candidates[i + 1].strength);
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& sub = r.candidates[i].indices;
      CHECK(std::is_sorted(sub.begin(), sub.end()));
      CHECK(std::adjacent_find(sub.begin(), sub.end()) == sub.end());
      for (std::size_t j = 0; j < i; ++j) {
        const auto& sup = r.candidates[j].indices;
        const bool strict_subset =
            sub.size() < sup.size() &&
            std::includes(sup.begin(), sup.end(), sub.begin(), sub.end());
        CHECK_FALSE(strict_subset);
      }
    }
  }
}

TEST_CASE("features with all-zero first-layer columns never appear") {
  Rng rng(404);
  for (int t = 0; t < 20; ++t) {
    Network net = random_net(rng);
    const Index p = net.input_size();
    const Index dead = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(p)));
    net.weight(0).col(dead).setZero();
    const InteractionRanking r = detect(net, p);
    for (const auto& c : r.candidates)
      CHECK(std::find(c.indices.begin(), c.indices.end(), dead) == c.indices.end());
  }
}

TEST_CASE("zero-influence units contribute no candidates") {
  Network net = explicit_net({4, 2, 1});
  net.weight(0) << 1.0, 2.0, 0.0, 0.0,  // unit 0: pair {0,1}
      0.0, 0.0, 3.0, 4.0;               // unit 1: pair {2,3}
  net.weight(1) << 1.0, 0.0;            // unit 1 disconnected from the output
  const InteractionRanking r = detect(net, 2);
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.candidates[0].indices == std::vector<Index>{0, 1});
}

TEST_CASE("ties order by cardinality, then lexicographic indices") {
  // two units with identical influence and identical weight profiles over
  // disjoint feature pairs produce exactly tied strengths
  Network net = explicit_net({4, 2, 1});
  net.weight(0) << 0.0, 2.0, 1.0, 0.0,  // unit 0: top-2 {1,2}
      1.0, 0.0, 0.0, 2.0;               // unit 1: top-2 {0,3}
  net.weight(1) << 1.0, 1.0;
  const InteractionRanking r = detect(net, 2);
  REQUIRE(r.candidates.size() == 2);
  CHECK(r.candidates[0].strength == r.candidates[1].strength);
  CHECK(r.candidates[0].indices == std::vector<Index>{0, 3});  // lex smaller
  CHECK(r.candidates[1].indices == std::vector<Index>{1, 2});

  // tied pairs rank above a tied triple; the triple is a superset of the
  // first pair, and supersets are never pruned
  Network net2 = explicit_net({5, 2, 1});
  net2.weight(0) << 1.0, 1.0, 1.0, 0.0, 0.0,  // prefixes {0,1} and {0,1,2}, both 1
      0.0, 0.0, 0.0, 1.0, 1.0;                // pair {3,4} at strength 1
  net2.weight(1) << 1.0, 1.0;
  const InteractionRanking r2 = detect(net2, 3);
  REQUIRE(r2.candidates.size() == 3);
  CHECK(r2.candidates[0].indices == std::vector<Index>{0, 1});
  CHECK(r2.candidates[1].indices == std::vector<Index>{3, 4});
  CHECK(r2.candidates[2].indices == std::vector<Index>{0, 1, 2});
}

TEST_CASE("scaling the output layer scales strengths, not the order") {
  Rng rng(9);
  Network net = random_net(rng);
  const InteractionRanking base = detect(net, net.input_size());
  Network scaled = net;
  scaled.weight(scaled.n_layers() - 1) *= 3.0;
  const InteractionRanking r = detect(scaled, net.input_size());
  REQUIRE(r.candidates.size() == base.candidates.size());
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    CHECK(r.candidates[i].indices == base.candidates[i].indices);
    CHECK(r.candidates[i].strength ==
          doctest::Approx(3.0 * base.candidates[i].strength).epsilon(1e-12));
  }
}

TEST_CASE("permuting input columns permutes the detected sets") {
  Rng rng(13);
  Network net = random_net(rng);
  const Index p = net.input_size();
  std::vector<Index> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(perm.begin(), perm.end());

  Network permuted = net;
  for (Index c = 0; c < p; ++c)
    permuted.weight(0).col(perm[static_cast<std::size_t>(c)]) = net.weight(0).col(c);

  const InteractionRanking a = detect(net, p);
  const InteractionRanking b = detect(permuted, p);
  REQUIRE(a.candidates.size() == b.candidates.size());
  // compare as sets: exact ties may legitimately reorder under relabeling
  std::map<std::vector<Index>, double> got;
  for (const auto& c : b.candidates) got[c.indices] = c.strength;
  for (const auto& c : a.candidates) {
    std::vector<Index> mapped;
    for (Index i : c.indices) mapped.push_back(perm[static_cast<std::size_t>(i)]);
    std::sort(mapped.begin(), mapped.end());
    REQUIRE(got.count(mapped) == 1);
    CHECK(got[mapped] == doctest::Approx(c.strength).epsilon(1e-12));
  }
}

TEST_CASE("pairwise strengths match the direct double loop") {
  Rng rng(31);
  const Network net = random_net(rng);
  const Vector z = path_influence(net);
  const Matrix& W1 = net.weight(0);
  const Matrix S = pairwise_strengths(net);
  const Index p = W1.cols();
  REQUIRE(S.rows() == p);
  REQUIRE(S.cols() == p);
  for (Index a = 0; a < p; ++a) {
    CHECK(S(a, a) == 0.0);
    for (Index b = a + 1; b < p; ++b) {
      double want = 0.0;
      for (Index j = 0; j < W1.rows(); ++j)
        want += z[j] * std::min(std::abs(W1(j, a)), std::abs(W1(j, b)));
      CHECK(S(a, b) == doctest::Approx(want).epsilon(1e-12));
      CHECK(S(a, b) == S(b, a));
    }
  }
}

TEST_CASE("detect validates the order cap") {
  Network net = explicit_net({3, 2, 1});
  CHECK_THROWS_AS(detect(net, 1), ConfigError);
  CHECK_THROWS_AS(detect(net, 0), ConfigError);
  CHECK_THROWS_AS(detect(net, 4), ConfigError);
  CHECK_NOTHROW(detect(net, 2));
  CHECK_NOTHROW(detect(net, 3));
}

TEST_CASE("influence requires a hidden layer") {
  NetworkConfig cfg;
  cfg.layer_sizes = {3, 1};
  CHECK_THROWS_AS(unit_influence(Network(cfg)), ConfigError);
}

TEST_CASE("top-R precision counts truth sets in the leading candidates") {
  InteractionRanking r;
  r.candidates = {{{0, 1}, 5.0}, {{2, 3}, 3.0}, {{0, 1, 2}, 1.0}};

  CHECK(r_precision(r, {{0, 1}}) == 1.0);
  CHECK(r_precision(r, {{1, 0}}) == 1.0);          // order inside a set is free
  CHECK(r_precision(r, {{0, 1}, {1, 0}}) == 1.0);  // duplicates collapse
  CHECK(r_precision(r, {{0, 1}, {4, 5}}) == 0.5);
  CHECK(r_precision(r, {{4, 5}}) == 0.0);
  CHECK(r_precision(r, {{0, 1, 2}}) == 0.0);  // ranked third, R = 1
  CHECK(r_precision(r, {{0, 1}, {2, 3}, {0, 1, 2}}) == 1.0);
  // more truth sets than candidates: misses count against the score
  CHECK(r_precision(r, {{0, 1}, {2, 3}, {0, 1, 2}, {4, 5}}) == 0.75);
  CHECK_THROWS_AS(r_precision(r, {}), ConfigError);

  InteractionRanking empty;
  CHECK(r_precision(empty, {{0, 1}}) == 0.0);
}

TEST_CASE("ranking serializes candidates at nine significant digits") {
  InteractionRanking r;
  r.candidates = {{{0, 2}, 1.23456789012345}, {{1, 3, 4}, 0.000123456789555}};
  const std::string js = r.to_json();
  CHECK(js.find("[\n") == 0);
  CHECK(js.find("1.23456789") != std::string::npos);
  CHECK(js.find("89012345") == std::string::npos);  // truncated past 9 digits
  CHECK(js.find("0.00012345679") != std::string::npos);
  CHECK(js.find("\"indices\"") != std::string::npos);
}

TEST_CASE("detection is deterministic in the network") {
  Rng rng(55);
  const Network net = random_net(rng);
  const InteractionRanking a = detect(net, net.input_size());
  const InteractionRanking b = detect(net, net.input_size());
  CHECK(a.to_json() == b.to_json());
}
