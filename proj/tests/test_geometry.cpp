#include "cosa/error.hpp"
#include "cosa/geometry.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace cosa;

namespace {

Points pts(std::initializer_list<std::array<double, 3>> rows) {
  Points p(static_cast<Eigen::Index>(rows.size()), 3);
  int i = 0;
  for (const auto& r : rows) p.row(i++) << r[0], r[1], r[2];
  return p;
}

double brute_chamfer(const Points& p, const Points& q) {
  auto side = [](const Points& a, const Points& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
      s += best;
    }
    return s / static_cast<double>(a.rows());
  };
  return side(p, q) + side(q, p);
}

double brute_hausdorff(const Points& p, const Points& q) {
  auto side = [](const Points& a, const Points& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(side(p, q), side(q, p));
}

}  // namespace

TEST_CASE("chamfer examples") {
  CHECK(chamfer(pts({{0, 0, 0}}), pts({{0, 0, 1}})) == 2.0);
  const Points p = pts({{0, 0, 0}, {1, 0, 0}});
  CHECK(chamfer(p, p) == 0.0);
  CHECK(hausdorff(p, p) == 0.0);
  CHECK(hausdorff(pts({{0, 0, 0}}), pts({{0, 0, 0}, {0, 3, 4}})) == doctest::Approx(5.0));
  CHECK_THROWS_AS(chamfer(Points(0, 3), p), PreconditionError);
  CHECK_THROWS_AS(hausdorff(p, Points(0, 3)), PreconditionError);
}

TEST_CASE("chamfer and hausdorff match the brute-force oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 64);
  for (int t = 0; t < 200; ++t) {
    const Points p = testutil::random_points(size(rng), rng);
    const Points q = testutil::random_points(size(rng), rng);
    CHECK(std::abs(chamfer(p, q) - brute_chamfer(p, q)) <= 1e-12);
    CHECK(std::abs(hausdorff(p, q) - brute_hausdorff(p, q)) <= 1e-12);
    CHECK(chamfer(p, q) == chamfer(q, p));
    CHECK(hausdorff(p, q) == hausdorff(q, p));
    CHECK(chamfer(p, p) == 0.0);
    CHECK(hausdorff(q, q) == 0.0);
  }
}

TEST_CASE("nearest neighbour ties go to the lowest index") {
  const Points from = pts({{0, 0, 0}});
  const Points to = pts({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}});
  CHECK(nearest_indices(from, to)[0] == 0);
}

TEST_CASE("metric gradients match finite differences") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Points p = testutil::random_points(12, rng);
    const Points q = testutil::random_points(9, rng);
    const MetricGrad cg = chamfer_grad(p, q);
    const MetricGrad hg = hausdorff_grad(p, q);
    CHECK(cg.value == chamfer(p, q));
    CHECK(hg.value == hausdorff(p, q));
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (int c = 0; c < 3; ++c) {
        Points a = p, b = p;
        a(i, c) += h;
        b(i, c) -= h;
        CHECK(cg.grad_p(i, c) == doctest::Approx((chamfer(a, q) - chamfer(b, q)) / (2 * h)).epsilon(1e-5));
        CHECK(hg.grad_p(i, c) == doctest::Approx((hausdorff(a, q) - hausdorff(b, q)) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("distortion measures") {
  const Points p = pts({{0, 0, 0}, {1, 1, 1}});
  CHECK(l2_distortion(p, p) == 0.0);
  CHECK(l2_distortion(pts({{0, 0, 0.3}}), pts({{0, 0, 0}})) == doctest::Approx(0.3));
  CHECK(l2_distortion(pts({{0.3, 0, 0}, {0, 0.4, 0}}), pts({{0, 0, 0}, {0, 0, 0}})) == doctest::Approx(0.5));
  CHECK(linf_distortion(pts({{0.3, 0, 0}, {0, -0.4, 0}}), pts({{0, 0, 0}, {0, 0, 0}})) == doctest::Approx(0.4));
  CHECK_THROWS_AS(l2_distortion(p, pts({{0, 0, 0}})), PreconditionError);
  const DistortionReport r = distortion(p, p);
  CHECK(r.cd == 0.0);
  CHECK(r.hd == 0.0);
  CHECK(r.l2 == 0.0);
}

TEST_CASE("linf_clip") {
  const Points orig = pts({{0, 0, 0}});
  CHECK(linf_clip(pts({{0.5, 0, 0}}), orig, 0.18)(0, 0) == 0.18);
  CHECK(linf_clip(pts({{-0.5, 0.1, 0}}), orig, 0.18)(0, 0) == -0.18);
  CHECK(linf_clip(pts({{-0.5, 0.1, 0}}), orig, 0.18)(0, 1) == 0.1);
  CHECK_THROWS_AS(linf_clip(orig, orig, -1.0), PreconditionError);
  CHECK_THROWS_AS(linf_clip(pts({{0, 0, 0}, {1, 1, 1}}), orig, 0.1), PreconditionError);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Points o = testutil::random_points(32, rng);
    const Points a = testutil::random_points(32, rng);
    CHECK(linf_clip(o, o, 0.3) == o);
    CHECK(linf_clip(a, o, 0.0) == o);
    const Points c = linf_clip(a, o, 0.2);
    CHECK((c - o).cwiseAbs().maxCoeff() <= 0.2 + 1e-12);
    CHECK(linf_clip(c, o, 0.2) == c);
  }
}

TEST_CASE("match_points finds the minimum-cost pairing") {
  std::mt19937_64 rng(17);
  // A shuffled copy comes back in the original order.
  const Points orig = testutil::random_points(40, rng);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Points shuffled(40, 3);
  for (int i = 0; i < 40; ++i) shuffled.row(i) = orig.row(perm[i]);
  CHECK(match_points(shuffled, orig) == orig);

  // Exhaustive oracle on small sets.
  for (int t = 0; t < 20; ++t) {
    const Points a = testutil::random_points(6, rng);
    const Points b = testutil::random_points(6, rng);
    std::vector<int> idx(6);
    std::iota(idx.begin(), idx.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int i = 0; i < 6; ++i) cost += (a.row(idx[i]) - b.row(i)).squaredNorm();
      best = std::min(best, cost);
    } while (std::next_permutation(idx.begin(), idx.end()));
    const Points m = match_points(a, b);
    CHECK((m - b).squaredNorm() == doctest::Approx(best).epsilon(1e-12));
    CHECK(chamfer(m, a) == 0.0);
  }
}

TEST_CASE("normalize") {
  const Points n = normalize(pts({{1, 1, 1}, {3, 1, 1}}));
  CHECK(n == pts({{-1, 0, 0}, {1, 0, 0}}));
  std::mt19937_64 rng(2);
  const Points r = normalize(testutil::random_points(100, rng, 3.0));
  CHECK(r.colwise().mean().norm() <= 1e-12);
  CHECK(r.rowwise().norm().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((normalize(r) - r).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(normalize(pts({{1, 2, 3}, {1, 2, 3}})), PreconditionError);
}

TEST_CASE("PointCloud rejects empty and non-finite input") {
  CHECK_THROWS_AS(PointCloud{Points(0, 3)}, PreconditionError);
  Points bad = pts({{0, 0, 0}});
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(PointCloud{bad}, PreconditionError);
  const PointCloud c(pts({{1, 2, 3}}), 4);
  CHECK(c.label() == 4);
  CHECK(c.size() == 1);
}
