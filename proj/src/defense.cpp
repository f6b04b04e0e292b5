#include "cosa/defense.hpp"

#include "cosa/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace cosa {

void DefenseConfig::validate() const {
  require(srs_keep_ratio > 0.0 && srs_keep_ratio <= 1.0, "defense config: srs_keep_ratio must lie in (0, 1]");
  require(sor_k >= 1, "defense config: sor_k must be >= 1");
  require(sor_alpha >= 0.0, "defense config: sor_alpha must be non-negative");
}

std::string defense_name(DefenseKind d) {
  switch (d) {
    case DefenseKind::None: return "none";
    case DefenseKind::Srs: return "srs";
    case DefenseKind::Sor: return "sor";
  }
  return "none";
}

DefenseKind defense_from_name(const std::string& s) {
  if (s == "none") return DefenseKind::None;
  if (s == "srs") return DefenseKind::Srs;
  if (s == "sor") return DefenseKind::Sor;
  throw PreconditionError("unknown defense '" + s + "' (expected none, srs or sor)");
}

namespace {

PointCloud subset(const PointCloud& p, const std::vector<Eigen::Index>& rows) {
  if (rows.empty()) throw PreconditionError("defense produced an empty cloud");
  Points out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = p.points().row(rows[i]);
  return PointCloud(std::move(out), p.label());
}

}  // namespace

PointCloud srs(const PointCloud& p, double keep_ratio, std::uint64_t seed) {
  require(keep_ratio > 0.0 && keep_ratio <= 1.0, "srs: keep_ratio must lie in (0, 1]");
  const auto n = p.size();
  require(keep_ratio * static_cast<double>(n) >= 1.0 - 1e-12, "srs: keep_ratio * n must be >= 1");
  const auto keep = static_cast<Eigen::Index>(std::ceil(keep_ratio * static_cast<double>(n) - 1e-12));
  // Partial Fisher-Yates with an explicit index draw so the result does not depend on
  // the standard library's shuffle implementation.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < keep; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const auto j = i + static_cast<Eigen::Index>(rng() % span);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(keep));
  std::sort(idx.begin(), idx.end());
  return subset(p, idx);
}

PointCloud sor(const PointCloud& p, int k, double alpha) {
  require(k >= 1, "sor: k must be >= 1");
  require(alpha >= 0.0, "sor: alpha must be non-negative");
  const auto n = p.size();
  require(n > k, "sor: cloud must have more than k points");
  const Points& x = p.points();
  std::vector<double> mean(static_cast<std::size_t>(n));
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d[c++] = (x.row(i) - x.row(j)).norm();
    }
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    mean[static_cast<std::size_t>(i)] = std::accumulate(d.begin(), d.begin() + k, 0.0) / k;
  }
  const double mu = std::accumulate(mean.begin(), mean.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double m : mean) var += (m - mu) * (m - mu);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  const double threshold = mu + alpha * sigma;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(mean[static_cast<std::size_t>(i)] > threshold)) keep.push_back(i);
  }
  if (keep.empty()) {
    keep.push_back(std::min_element(mean.begin(), mean.end()) - mean.begin());
  }
  return subset(p, keep);
}

PointCloud apply_defense(DefenseKind kind, const PointCloud& p, const DefenseConfig& cfg) {
  switch (kind) {
    case DefenseKind::None: return p;
    case DefenseKind::Srs: return srs(p, cfg.srs_keep_ratio, cfg.seed);
    case DefenseKind::Sor: return sor(p, cfg.sor_k, cfg.sor_alpha);
  }
  return p;
}

}  // namespace cosa
