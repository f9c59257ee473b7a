#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace mahe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Fixed number of significant digits (%.Ng style).
std::string format_double(double v, int significant);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Log-odds with clamping so probabilities at 0/1 stay finite.
double logit(double p, double eps = 1e-6);

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

/// Level parsed once from MAHE_LOG (debug|info|warn|error); default warn.
LogLevel log_level();

void log(LogLevel level, const std::string& msg);

}  // namespace mahe
