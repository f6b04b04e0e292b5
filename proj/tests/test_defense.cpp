#include "cosa/defense.hpp"
#include "cosa/error.hpp"
#include "cosa/synthdata.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>

using namespace cosa;

namespace {

// Row index of each output point in the input, -1 when absent.
std::vector<Eigen::Index> locate(const PointCloud& out, const PointCloud& in) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    Eigen::Index found = -1;
    for (Eigen::Index j = 0; j < in.size(); ++j) {
      if (out.points().row(i) == in.points().row(j)) {
        found = j;
        break;
      }
    }
    idx.push_back(found);
  }
  return idx;
}

PointCloud with_outlier(const PointCloud& p, double dist) {
  Points q(p.size() + 1, 3);
  q.topRows(p.size()) = p.points();
  q.row(p.size()) << dist, 0.0, 0.0;
  return PointCloud(q, p.label());
}

}  // namespace

TEST_CASE("srs") {
  const PointCloud p = generate_shape(ShapeKind::sphere, 256, 3, 0.0);
  const PointCloud half = srs(p, 0.5, 7);
  CHECK(half.size() == 128);
  const auto idx = locate(half, p);
  CHECK(std::none_of(idx.begin(), idx.end(), [](Eigen::Index i) { return i < 0; }));
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::set<Eigen::Index>(idx.begin(), idx.end()).size() == 128);
  CHECK(srs(p, 0.5, 7) == half);
  CHECK_FALSE(srs(p, 0.5, 8) == half);
  CHECK(srs(p, 1.0, 7) == p);
  CHECK(srs(p, 0.875, 1).size() == 224);
  CHECK(srs(PointCloud(p.points(), 3), 0.5, 1).label() == 3);
  CHECK_THROWS_AS(srs(p, 0.0, 1), PreconditionError);
  CHECK_THROWS_AS(srs(p, 1.5, 1), PreconditionError);
  CHECK_THROWS_AS(srs(p, 1e-4, 1), PreconditionError);
}

TEST_CASE("sor removes exactly a planted outlier from a sphere") {
  const PointCloud p = generate_shape(ShapeKind::sphere, 256, 11, 0.0);
  CHECK(sor(p, 8, 10.0) == p);
  const PointCloud planted = with_outlier(p, 100.0);
  CHECK(sor(planted, 8, 1.5) == p);
}

TEST_CASE("sor removes a far outlier on every shape") {
  for (int c = 0; c < kNumShapeKinds; ++c) {
    const PointCloud p = generate_shape(shape_from_index(c), 256, 20 + c, 0.0);
    const PointCloud out = sor(with_outlier(p, 50.0), 8, 1.5);
    const auto idx = locate(out, with_outlier(p, 50.0));
    INFO(shape_name(shape_from_index(c)));
    CHECK(std::find(idx.begin(), idx.end(), p.size()) == idx.end());
    CHECK(std::none_of(idx.begin(), idx.end(), [](Eigen::Index i) { return i < 0; }));
    CHECK(std::is_sorted(idx.begin(), idx.end()));
  }
}

TEST_CASE("sor edge cases") {
  const PointCloud p = generate_shape(ShapeKind::cube, 64, 2, 0.0);
  CHECK(sor(p, 8, std::numeric_limits<double>::infinity()) == p);
  const PointCloud zero = sor(p, 8, 0.0);
  CHECK(zero.size() >= 1);
  CHECK(zero.size() < p.size());
  // Equal neighbour means: nothing exceeds the mean.
  Points grid(8, 3);
  for (int i = 0; i < 8; ++i) grid.row(i) << (i & 1), (i >> 1) & 1, (i >> 2) & 1;
  CHECK(sor(PointCloud(grid), 3, 0.0).size() == 8);
  const PointCloud eight{Points(p.points().topRows(8))};
  CHECK_THROWS_AS(sor(eight, 8, 1.0), PreconditionError);
  CHECK_THROWS_AS(sor(p, 0, 1.0), PreconditionError);
  CHECK_THROWS_AS(sor(p, 8, -1.0), PreconditionError);
}

TEST_CASE("defense config and dispatch") {
  DefenseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.sor_k = 0;
  CHECK_THROWS_AS(cfg.validate(), PreconditionError);
  CHECK(defense_from_name("sor") == DefenseKind::Sor);
  CHECK(defense_name(DefenseKind::Srs) == "srs");
  CHECK_THROWS_AS(defense_from_name("dup"), PreconditionError);
  const PointCloud p = generate_shape(ShapeKind::torus, 128, 5, 0.0);
  DefenseConfig d;
  CHECK(apply_defense(DefenseKind::None, p, d) == p);
  CHECK(apply_defense(DefenseKind::Srs, p, d) == srs(p, d.srs_keep_ratio, d.seed));
  CHECK(apply_defense(DefenseKind::Sor, p, d) == sor(p, d.sor_k, d.sor_alpha));
}
