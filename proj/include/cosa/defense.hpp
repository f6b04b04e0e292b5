#pragma once

#include "cosa/geometry.hpp"

#include <cstdint>
#include <limits>
#include <string>

namespace cosa {

struct DefenseConfig {
  double srs_keep_ratio = 0.875;
  int sor_k = 8;
  double sor_alpha = 1.1;  // +infinity disables removal
  std::uint64_t seed = 0;

  void validate() const;
};

enum class DefenseKind { None, Srs, Sor };

std::string defense_name(DefenseKind d);
DefenseKind defense_from_name(const std::string& s);

// Keeps ceil(keep_ratio * n) points drawn uniformly without replacement, in their
// original order.
PointCloud srs(const PointCloud& p, double keep_ratio, std::uint64_t seed);

// Drops points whose mean distance to their k nearest neighbours exceeds mu + alpha sigma.
// Keeps at least the point with the smallest mean. Surviving points keep their order.
PointCloud sor(const PointCloud& p, int k, double alpha);

PointCloud apply_defense(DefenseKind kind, const PointCloud& p, const DefenseConfig& cfg);

}  // namespace cosa
