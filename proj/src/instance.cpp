#include "mahe/instance.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mahe/errors.hpp"

namespace mahe {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::continuous: return "continuous";
    case Kind::binary: return "binary";
    case Kind::mixed: return "mixed";
    case Kind::token_sequence: return "token_sequence";
  }
  return "?";
}

Kind kind_from_name(const std::string& name) {
  if (name == "continuous") return Kind::continuous;
  if (name == "binary") return Kind::binary;
  if (name == "mixed") return Kind::mixed;
  if (name == "token_sequence") return Kind::token_sequence;
  throw ConfigError("unknown instance kind: " + name);
}

void Instance::validate() const {
  if (kind == Kind::token_sequence) {
    if (tokens.empty()) throw ConfigError("token instance needs at least one token");
    return;
  }
  if (values.size() == 0) throw ConfigError("instance has no values");
  if (!values.allFinite()) throw ConfigError("instance has non-finite values");
  if (kind == Kind::binary) {
    for (Index i = 0; i < values.size(); ++i)
      if (values[i] != 0.0 && values[i] != 1.0)
        throw ConfigError("binary feature " + std::to_string(i) + " is not 0/1");
  }
  if (kind == Kind::mixed) {
    for (Index i : binary_indices) {
      if (i < 0 || i >= values.size())
        throw ConfigError("mixed binary index out of range: " + std::to_string(i));
      if (values[i] != 0.0 && values[i] != 1.0)
        throw ConfigError("mixed binary feature " + std::to_string(i) + " is not 0/1");
    }
  }
}

std::string Instance::to_json() const {
  nlohmann::json doc;
  doc["kind"] = kind_name(kind);
  if (kind == Kind::token_sequence) {
    doc["tokens"] = tokens;
  } else {
    std::vector<double> v(values.data(), values.data() + values.size());
    doc["values"] = v;
  }
  if (!feature_names.empty()) doc["feature_names"] = feature_names;
  if (!binary_indices.empty()) doc["binary_indices"] = binary_indices;
  return doc.dump();
}

Instance Instance::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("instance json: ") + e.what());
  }
  Instance inst;
  try {
    inst.kind = kind_from_name(doc.value("kind", std::string("continuous")));
    if (inst.kind == Kind::token_sequence) {
      inst.tokens = doc.at("tokens").get<std::vector<std::string>>();
    } else {
      const auto v = doc.at("values").get<std::vector<double>>();
      inst.values = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    }
    if (doc.contains("feature_names"))
      inst.feature_names = doc["feature_names"].get<std::vector<std::string>>();
    if (doc.contains("binary_indices"))
      inst.binary_indices = doc["binary_indices"].get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("instance json: ") + e.what());
  }
  inst.validate();
  return inst;
}

std::vector<Instance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instance file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<Instance> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("instance file: ") + e.what());
    }
    for (const auto& item : arr) out.push_back(Instance::from_json(item.dump()));
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(Instance::from_json(line));
    }
  }
  if (out.empty()) throw ConfigError("instance file is empty: " + path);
  return out;
}

}  // namespace mahe
