#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace cosa {

// n x 3, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

class PointCloud {
 public:
  PointCloud() = default;
  // Throws PreconditionError on an empty or non-finite cloud.
  explicit PointCloud(Points points, std::optional<int> label = std::nullopt);

  const Points& points() const { return points_; }
  std::optional<int> label() const { return label_; }
  void set_label(std::optional<int> label) { label_ = label; }
  Eigen::Index size() const { return points_.rows(); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.label_ == b.label_ && a.points_.rows() == b.points_.rows() &&
           a.points_ == b.points_;
  }

 private:
  Points points_;
  std::optional<int> label_;
};

struct DistortionReport {
  double cd = 0.0;
  double hd = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

// Value of a pairwise metric together with its (sub)gradients w.r.t. both arguments.
struct MetricGrad {
  double value = 0.0;
  Points grad_p;
  Points grad_q;
};

// Symmetric Chamfer distance: mean squared nearest-neighbour distance from p to q
// plus the same from q to p.
double chamfer(const Points& p, const Points& q);
// Symmetric Hausdorff distance (Euclidean, not squared).
double hausdorff(const Points& p, const Points& q);

// Gradients hold nearest-neighbour assignments fixed (lowest index wins ties).
MetricGrad chamfer_grad(const Points& p, const Points& q);
// Subgradient through the single max-min pair; ties go to the p->q direction, then
// to the lowest index.
MetricGrad hausdorff_grad(const Points& p, const Points& q);

// Frobenius norm of p - q for clouds in point correspondence.
double l2_distortion(const Points& p, const Points& q);
double linf_distortion(const Points& p, const Points& q);

// Clamp every coordinate of adv into [orig - eps, orig + eps].
Points linf_clip(const Points& adv, const Points& orig, double eps);

// Rows of adv reordered so that row i is paired with orig row i, minimizing the summed
// squared distance over all pairings (Hungarian method, O(n^3)).
Points match_points(const Points& adv, const Points& orig);

// Center on the centroid and scale to unit max radius.
Points normalize(const Points& p);

DistortionReport distortion(const Points& adv, const Points& orig);

inline double chamfer(const PointCloud& p, const PointCloud& q) {
  return chamfer(p.points(), q.points());
}
inline double hausdorff(const PointCloud& p, const PointCloud& q) {
  return hausdorff(p.points(), q.points());
}
inline double l2_distortion(const PointCloud& p, const PointCloud& q) {
  return l2_distortion(p.points(), q.points());
}
PointCloud linf_clip(const PointCloud& adv, const PointCloud& orig, double eps);
PointCloud normalize(const PointCloud& p);

// Index of the nearest row of `to` for every row of `from`; ties -> lowest index.
std::vector<Eigen::Index> nearest_indices(const Points& from, const Points& to);

}  // namespace cosa
