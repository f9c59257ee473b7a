#pragma once

#include <string>
#include <vector>

#include "mahe/common.hpp"

namespace mahe {

enum class Kind { continuous, binary, mixed, token_sequence };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& name);

// The subject of an explanation. Binary and token kinds live in {0,1} mask
// space for surrogate fitting; mixed kinds list which coordinates are binary.
struct Instance {
  Kind kind = Kind::continuous;
  Vector values;                    // continuous / binary / mixed
  std::vector<std::string> tokens;  // token_sequence only
  std::vector<std::string> feature_names;
  std::vector<Index> binary_indices;  // mixed only: coordinates that are 0/1

  Index size() const {
    return kind == Kind::token_sequence ? static_cast<Index>(tokens.size()) : values.size();
  }

  void validate() const;  // throws ConfigError

  std::string to_json() const;
  static Instance from_json(const std::string& text);
};

// One instance per line (JSON) or a top-level JSON array.
std::vector<Instance> load_instances(const std::string& path);

}  // namespace mahe
