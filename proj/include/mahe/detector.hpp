#pragma once

#include <vector>

#include "mahe/common.hpp"
#include "mahe/net.hpp"

namespace mahe {

struct InteractionCandidate {
  std::vector<Index> indices;  // sorted, distinct
  double strength = 0.0;
};

struct InteractionRanking {
  std::vector<InteractionCandidate> candidates;  // strength descending
  Network detector_net;
  Index p = 0;

  std::string to_json() const;  // strengths at 9 significant digits
};

// Aggregate influence of each first-hidden-layer unit on the output:
// z = |w_out|' |W(m)| ... |W(2)|.
Vector unit_influence(const Network& net);

// Per-unit sorted-prefix candidate generation, merged across units by summed
// strength, subset-pruned. Ties order by cardinality then lexicographic
// indices.
InteractionRanking detect(const Network& net, Index max_order);

// Pairwise strength surface over all feature pairs: sum over units of
// z_j * min(|W1_ji|, |W1_jk|). Upper triangle is meaningful.
Matrix pairwise_strengths(const Network& net);

double r_precision(const InteractionRanking& ranking,
                   const std::vector<std::vector<Index>>& truth);

}  // namespace mahe
