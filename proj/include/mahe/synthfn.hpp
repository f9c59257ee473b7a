#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mahe/common.hpp"

namespace mahe {

// Ground-truth benchmark functions with a known interacting feature set.
struct SyntheticFunction {
  std::string id;  // F1 | F2 | F3 | F4 | quad_large_p
  Index p = 10;
  std::vector<std::vector<Index>> truth;  // interacting index sets

  // quad_large_p parameters: y = beta'x + x'Wx with W a sum of sparse
  // rank-one terms
  Vector beta;
  Matrix W;

  double eval(const Vector& x) const;
  // (f(x), isolated interaction term)
  std::pair<double, double> eval_truth(const Vector& x) const;

  static SyntheticFunction by_id(const std::string& id);
  static bool known_id(const std::string& id);
};

struct LargePDataset {
  SyntheticFunction fn;
  Matrix X;  // n x p, standard normal
  Vector y;
  std::uint64_t seed_used = 0;  // incremented past degenerate draws
};

// Appendix-style quadratic generator: sparse beta and a_k (density fraction of
// N(0,1) entries), W = sum_k a_k a_k', truth = off-diagonal nonzero pairs.
LargePDataset gen_large_p(Index p, Index n, int K, double density, std::uint64_t seed);

}  // namespace mahe
