#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "mahe/errors.hpp"
#include "mahe/predictor.hpp"
#include "mahe/rng.hpp"
#include "mahe/sampler.hpp"

using namespace mahe;

namespace {

Instance continuous_instance(std::initializer_list<double> vals) {
  Instance x;
  x.kind = Kind::continuous;
  x.values = Vector(static_cast<Index>(vals.size()));
  Index i = 0;
  for (double v : vals) x.values[i++] = v;
  return x;
}

Instance binary_instance(std::initializer_list<double> vals) {
  Instance x = continuous_instance(vals);
  x.kind = Kind::binary;
  return x;
}

Instance token_instance(std::initializer_list<const char*> toks) {
  Instance x;
  x.kind = Kind::token_sequence;
  for (const char* t : toks) x.tokens.emplace_back(t);
  return x;
}

// classic O(nm) two-row DP, written independently of the library routine
Index dp_edit_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<Index> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<Index>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<Index>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const Index sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> random_tokens(Rng& rng, int max_len, int alphabet) {
  const int len = static_cast<int>(rng.integer(static_cast<std::uint64_t>(max_len) + 1));
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i)
    out.push_back(std::string(1, static_cast<char>('a' + rng.integer(alphabet))));
  return out;
}

}  // namespace

TEST_CASE("continuous samples stay inside the sigma ball") {
  const Instance x = continuous_instance({0.3, -0.5, 0.8, 0.0, 0.1});
  SamplerConfig cfg;
  cfg.n = 500;
  cfg.sigma = 0.6;
  cfg.seed = 7;
  const auto samples = sample_continuous(x, cfg);
  REQUIRE(samples.size() == 500);
  double max_d = 0.0, mean_d = 0.0;
  for (const auto& s : samples) {
    const double d = distance(x, s, Metric::l2);
    max_d = std::max(max_d, d);
    mean_d += d;
  }
  mean_d /= 500;
  CHECK(max_d <= 0.6 + 1e-12);
  CHECK(mean_d > 0.1);  // not collapsed onto the origin
}

TEST_CASE("continuous sampling is deterministic in the seed") {
  const Instance x = continuous_instance({0.0, 0.0, 0.0});
  SamplerConfig cfg;
  cfg.n = 50;
  cfg.sigma = 1.0;
  cfg.seed = 21;
  const auto a = sample_continuous(x, cfg);
  const auto b = sample_continuous(x, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
  cfg.seed = 22;
  const auto c = sample_continuous(x, cfg);
  CHECK(a[0].values != c[0].values);
}

TEST_CASE("truncated radius distribution looks like N(0, sigma^2 I) conditioned to the ball") {
  // With p = 2 and the ball at 1 sigma, P(r <= sigma/2 | r <= sigma) =
  // (1 - exp(-1/8)) / (1 - exp(-1/2)) for the exact truncated law.
  const Instance x = continuous_instance({0.0, 0.0});
  SamplerConfig cfg;
  cfg.n = 20000;
  cfg.sigma = 1.0;
  cfg.seed = 5;
  const auto samples = sample_continuous(x, cfg);
  int inner = 0;
  for (const auto& s : samples) inner += s.values.norm() <= 0.5;
  const double expect = (1.0 - std::exp(-0.125)) / (1.0 - std::exp(-0.5));
  CHECK(static_cast<double>(inner) / cfg.n == doctest::Approx(expect).epsilon(0.03));
}

TEST_CASE("kernel weights follow the gaussian closed form") {
  Vector d(4);
  d << 0.0, 0.3, 0.6, 1.2;
  const Vector w = kernel_weights(d, 0.6);
  for (Index i = 0; i < 4; ++i)
    CHECK(w[i] == doctest::Approx(std::exp(-d[i] * d[i] / 0.36)).epsilon(1e-12));
  CHECK(w[0] == 1.0);
}

TEST_CASE("distance implements l2, cosine, and edit") {
  const Instance a = continuous_instance({1.0, 0.0});
  const Instance b = continuous_instance({0.0, 1.0});
  CHECK(distance(a, b, Metric::l2) == doctest::Approx(std::sqrt(2.0)));

  Instance ab = a, bb = b;
  ab.kind = bb.kind = Kind::binary;
  CHECK(distance(ab, bb, Metric::cosine) == doctest::Approx(1.0));  // orthogonal masks
  CHECK(distance(ab, ab, Metric::cosine) == 0.0);

  const Instance s = token_instance({"the", "cat", "sat"});
  const Instance t = token_instance({"the", "dog", "sat"});
  CHECK(distance(s, t, Metric::edit) == 1.0);
  CHECK_THROWS_AS(distance(a, b, Metric::edit), ConfigError);
}

TEST_CASE("edit distance matches hand cases") {
  using V = std::vector<std::string>;
  CHECK(edit_distance(V{}, V{}) == 0);
  CHECK(edit_distance(V{"a"}, V{}) == 1);
  CHECK(edit_distance(V{}, V{"a", "b"}) == 2);
  CHECK(edit_distance(V{"a", "b", "c"}, V{"a", "b", "c"}) == 0);
  CHECK(edit_distance(V{"a", "b", "c"}, V{"a", "x", "c"}) == 1);       // substitute
  CHECK(edit_distance(V{"a", "b", "c"}, V{"a", "c"}) == 1);            // delete
  CHECK(edit_distance(V{"a", "c"}, V{"a", "b", "c"}) == 1);            // insert
  CHECK(edit_distance(V{"x", "y"}, V{"y", "x"}) == 2);
  CHECK(edit_distance(V{"kitten", "x"}, V{"sitting", "x"}) == 1);      // token-level, not chars
}

TEST_CASE("edit distance agrees with an independent DP oracle") {
  Rng rng(100);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_tokens(rng, 12, 4);
    const auto b = random_tokens(rng, 12, 4);
    CHECK(edit_distance(a, b) == dp_edit_oracle(a, b));
  }
}

TEST_CASE("edit distance satisfies the metric axioms") {
  Rng rng(200);
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_tokens(rng, 8, 3);
    const auto b = random_tokens(rng, 8, 3);
    const auto c = random_tokens(rng, 8, 3);
    const Index dab = edit_distance(a, b);
    const Index dba = edit_distance(b, a);
    const Index dac = edit_distance(a, c);
    const Index dcb = edit_distance(c, b);
    CHECK(dab == dba);                      // symmetry
    CHECK(dab >= 0);                        // non-negativity
    CHECK(edit_distance(a, a) == 0);        // identity
    if (a == b) CHECK(dab == 0);
    if (dab == 0) CHECK(a == b);            // separation
    CHECK(dab <= dac + dcb);                // triangle inequality
  }
}

TEST_CASE("binary samples respect the flip cap and cosine ball") {
  const Instance x = binary_instance({1, 0, 1, 1, 0, 1, 0, 1, 1, 0});
  SamplerConfig cfg;
  cfg.n = 400;
  cfg.sigma = 0.3;  // cosine threshold; flip cap = ceil(0.3 * 10) = 3
  cfg.metric = Metric::cosine;
  cfg.seed = 17;
  const auto samples = sample_binary(x, cfg);
  Index max_flips_seen = 0;
  for (const auto& s : samples) {
    Index flips = 0;
    for (Index i = 0; i < 10; ++i) flips += s.values[i] != x.values[i];
    max_flips_seen = std::max(max_flips_seen, flips);
    CHECK(distance(x, s, Metric::cosine) <= 0.3 + 1e-12);
    for (Index i = 0; i < 10; ++i)  // stays boolean
      CHECK((s.values[i] == 0.0 || s.values[i] == 1.0));
  }
  CHECK(max_flips_seen <= 3);
  CHECK(max_flips_seen >= 1);  // something actually flips

  SamplerConfig explicit_cap = cfg;
  explicit_cap.max_flips = 1;
  for (const auto& s : sample_binary(x, explicit_cap)) {
    Index flips = 0;
    for (Index i = 0; i < 10; ++i) flips += s.values[i] != x.values[i];
    CHECK(flips <= 1);
  }
}

TEST_CASE("token samples delete at most sigma tokens and masks stay aligned") {
  const Instance x = token_instance({"a", "b", "c", "d", "e", "f"});
  SamplerConfig cfg;
  cfg.n = 200;
  cfg.sigma = 2.0;  // edit metric: up to 2 deletions
  cfg.metric = Metric::edit;
  cfg.seed = 31;
  const TokenSamples ts = sample_tokens(x, cfg);
  REQUIRE(ts.sequences.size() == 200);
  REQUIRE(ts.masks.rows() == 200);
  for (Index s = 0; s < 200; ++s) {
    const auto& seq = ts.sequences[static_cast<std::size_t>(s)].tokens;
    const Index kept = static_cast<Index>(ts.masks.row(s).sum());
    CHECK(static_cast<Index>(seq.size()) == kept);
    CHECK(6 - kept <= 2);
    // kept tokens appear in original order
    std::vector<std::string> rebuilt;
    for (Index i = 0; i < 6; ++i)
      if (ts.masks(s, i) == 1.0) rebuilt.push_back(x.tokens[static_cast<std::size_t>(i)]);
    CHECK(rebuilt == seq);
    CHECK(edit_distance(x.tokens, seq) == 6 - kept);
  }
}

TEST_CASE("mixed representation z-scores continuous coordinates") {
  Instance x;
  x.kind = Kind::mixed;
  x.values = Vector(3);
  x.values << 0.5, 1.0, -2.0;
  x.binary_indices = {1};

  Vector raw(3);
  raw << 0.8, 0.0, -2.0;
  const double sigma = 0.6;
  const Vector rep = mixed_representation(x, raw, sigma);
  CHECK(rep[0] == doctest::Approx((0.8 - 0.5) / (sigma / std::sqrt(3.0))).epsilon(1e-12));
  CHECK(rep[1] == 0.0);  // binaries pass through
  CHECK(rep[2] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("sampler config validation rejects bad combinations") {
  SamplerConfig cfg;
  CHECK_THROWS_AS(cfg.validate(Kind::binary, 5), ConfigError);  // l2 on binary
  cfg.metric = Metric::cosine;
  CHECK_NOTHROW(cfg.validate(Kind::binary, 5));
  CHECK_THROWS_AS(cfg.validate(Kind::continuous, 5), ConfigError);  // cosine on continuous
  cfg.metric = Metric::l2;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(Kind::continuous, 5), ConfigError);
  cfg.sigma = 0.6;
  cfg.n = 0;
  CHECK_THROWS_AS(cfg.validate(Kind::continuous, 5), ConfigError);
}

TEST_CASE("build_local_dataset wires samples, targets, weights, and splits") {
  const Instance x = continuous_instance({0.2, -0.1, 0.4, 0.0, 0.3, -0.2, 0.1, 0.0, 0.2, -0.3});
  const Predictor f = Predictor::builtin("F1");
  SamplerConfig cfg;
  cfg.n = 1000;
  cfg.sigma = 0.6;
  cfg.seed = 3;
  const LocalDataset ds = build_local_dataset(x, f, cfg);

  CHECK(ds.n() == 1000);
  CHECK(ds.p() == 10);
  CHECK(ds.train_idx.size() == 800);
  CHECK(ds.val_idx.size() == 100);
  CHECK(ds.test_idx.size() == 100);

  std::set<Index> all;
  for (Index i : ds.train_idx) all.insert(i);
  for (Index i : ds.val_idx) all.insert(i);
  for (Index i : ds.test_idx) all.insert(i);
  CHECK(all.size() == 1000);  // a partition, no overlap

  // targets are the black-box outputs, weights the kernel of the distances
  const Vector expect_y = f.predict(ds.X);
  Vector dist(ds.n());
  for (Index i = 0; i < ds.n(); ++i) {
    dist[i] = (ds.X.row(i).transpose() - x.values).norm();
    CHECK(dist[i] <= cfg.sigma + 1e-12);
  }
  const Vector expect_w = kernel_weights(dist, cfg.sigma);
  for (Index i = 0; i < ds.n(); ++i) {
    CHECK(ds.y[i] == expect_y[i]);
    CHECK(ds.w[i] == doctest::Approx(expect_w[i]).epsilon(1e-12));
  }

  // deterministic rebuild
  const LocalDataset again = build_local_dataset(x, f, cfg);
  CHECK(again.X == ds.X);
  CHECK(again.train_idx == ds.train_idx);
}

TEST_CASE("local dataset export writes audit header and rows") {
  const Instance x =
      continuous_instance({0.1, 0.2, 0.3, 0.0, -0.1, 0.2, 0.4, -0.3, 0.0, 0.1});
  SamplerConfig cfg;
  cfg.n = 30;
  cfg.sigma = 0.5;
  cfg.seed = 9;
  const LocalDataset ds = build_local_dataset(x, Predictor::builtin("F1"), cfg);

  const std::string path = "/tmp/mahe_test_vicinity.csv";
  ds.export_csv(path, "audit-note");
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# audit-note", 0) == 0);
  std::getline(in, line);  // header
  CHECK(line.find("output,weight,split") != std::string::npos);
  CHECK(line.find("f0,") != std::string::npos);
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 30);
  std::remove(path.c_str());
}
