#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace modar {

/// Optimal rectangular assignment (Hungarian / Kuhn-Munkres).
///
/// `benefit(r, c)` is the gain of pairing row r with column c. Only pairs whose
/// benefit is at least `min_benefit` may be matched; the result maximizes the
/// summed benefit over admissible pairs. Returns, for each row, the matched
/// column or nullopt.
std::vector<std::optional<int>> max_weight_assignment(const Eigen::MatrixXd& benefit,
                                                      double min_benefit);

}  // namespace modar
