#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace siss {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Agents are addressed by their zero-based index in the system.
using AgentId = int;

/// Stable 64-bit FNV-1a digest, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);
std::uint64_t fnv1a(std::string_view data);

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace siss
