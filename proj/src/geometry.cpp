#include "cosa/geometry.hpp"

#include "cosa/error.hpp"
#include "cosa/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cosa {

PointCloud::PointCloud(Points points, std::optional<int> label)
    : points_(std::move(points)), label_(label) {
  require(points_.rows() >= 1, "point cloud must contain at least one point");
  require(points_.allFinite(), "point cloud coordinates must be finite");
}

namespace {

// Nearest-neighbour tables in both directions from one pass over all pairs.
struct NnTables {
  std::vector<double> p_to_q;  // squared distance from p_i to its nearest q
  std::vector<Eigen::Index> p_arg;
  std::vector<double> q_to_p;
  std::vector<Eigen::Index> q_arg;
};

NnTables nn_tables(const Points& p, const Points& q) {
  require(p.rows() >= 1 && q.rows() >= 1, "metric requires non-empty clouds");
  const auto n = p.rows();
  const auto m = q.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  NnTables t{std::vector<double>(n, inf), std::vector<Eigen::Index>(n, 0),
             std::vector<double>(m, inf), std::vector<Eigen::Index>(m, 0)};
  // Structure-of-arrays copy of q so the inner loops vectorize.
  std::vector<double> qx(m), qy(m), qz(m), row(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    qx[j] = q(j, 0);
    qy[j] = q(j, 1);
    qz[j] = q(j, 2);
  }
  double* qmin = t.q_to_p.data();
  Eigen::Index* qarg = t.q_arg.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double px = p(i, 0), py = p(i, 1), pz = p(i, 2);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dx = px - qx[j], dy = py - qy[j], dz = pz - qz[j];
      row[j] = dx * dx + dy * dy + dz * dz;
    }
    // Minimum over four interleaved lanes, then the first index attaining it.
    double lane[4] = {inf, inf, inf, inf};
    Eigen::Index j = 0;
    for (; j + 4 <= m; j += 4) {
      for (int l = 0; l < 4; ++l) lane[l] = row[j + l] < lane[l] ? row[j + l] : lane[l];
    }
    for (; j < m; ++j) lane[0] = row[j] < lane[0] ? row[j] : lane[0];
    const double best = std::min(std::min(lane[0], lane[1]), std::min(lane[2], lane[3]));
    Eigen::Index arg = 0;
    while (row[arg] != best) ++arg;
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool closer = row[j] < qmin[j];
      qmin[j] = closer ? row[j] : qmin[j];
      qarg[j] = closer ? i : qarg[j];
    }
    t.p_to_q[i] = best;
    t.p_arg[i] = arg;
  }
  if (auto* trace = DecisionTrace::current()) {
    for (auto a : t.p_arg) trace->record(static_cast<std::uint64_t>(a));
    for (auto a : t.q_arg) trace->record(static_cast<std::uint64_t>(a));
  }
  return t;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Directed max-min in squared distance, lowest index on ties.
std::pair<double, Eigen::Index> directed_max(const std::vector<double>& mins) {
  double best = -1.0;
  Eigen::Index arg = 0;
  for (std::size_t i = 0; i < mins.size(); ++i) {
    if (mins[i] > best) {
      best = mins[i];
      arg = static_cast<Eigen::Index>(i);
    }
  }
  return {best, arg};
}

}  // namespace

double chamfer(const Points& p, const Points& q) {
  const auto t = nn_tables(p, q);
  return mean_of(t.p_to_q) + mean_of(t.q_to_p);
}

MetricGrad chamfer_grad(const Points& p, const Points& q) {
  const auto t = nn_tables(p, q);
  MetricGrad g;
  g.value = mean_of(t.p_to_q) + mean_of(t.q_to_p);
  g.grad_p = Points::Zero(p.rows(), 3);
  g.grad_q = Points::Zero(q.rows(), 3);
  const double wf = 2.0 / static_cast<double>(p.rows());
  const double wb = 2.0 / static_cast<double>(q.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto j = t.p_arg[i];
    const Eigen::RowVector3d diff = p.row(i) - q.row(j);
    g.grad_p.row(i) += wf * diff;
    g.grad_q.row(j) -= wf * diff;
  }
  for (Eigen::Index j = 0; j < q.rows(); ++j) {
    const auto i = t.q_arg[j];
    const Eigen::RowVector3d diff = q.row(j) - p.row(i);
    g.grad_q.row(j) += wb * diff;
    g.grad_p.row(i) -= wb * diff;
  }
  return g;
}

double hausdorff(const Points& p, const Points& q) {
  const auto t = nn_tables(p, q);
  const double a = directed_max(t.p_to_q).first;
  const double b = directed_max(t.q_to_p).first;
  return std::sqrt(std::max(a, b));
}

MetricGrad hausdorff_grad(const Points& p, const Points& q) {
  const auto t = nn_tables(p, q);
  const auto [fwd, fi] = directed_max(t.p_to_q);
  const auto [bwd, bj] = directed_max(t.q_to_p);
  MetricGrad g;
  g.grad_p = Points::Zero(p.rows(), 3);
  g.grad_q = Points::Zero(q.rows(), 3);
  Eigen::Index i, j;
  if (fwd >= bwd) {
    i = fi;
    j = t.p_arg[fi];
  } else {
    j = bj;
    i = t.q_arg[bj];
  }
  if (auto* trace = DecisionTrace::current()) {
    trace->record(static_cast<std::uint64_t>(i));
    trace->record(static_cast<std::uint64_t>(j));
  }
  g.value = std::sqrt(std::max(fwd, bwd));
  if (g.value > 0.0) {
    const Eigen::RowVector3d dir = (p.row(i) - q.row(j)) / g.value;
    g.grad_p.row(i) = dir;
    g.grad_q.row(j) = -dir;
  }
  return g;
}

double l2_distortion(const Points& p, const Points& q) {
  require(p.rows() == q.rows(), "l2_distortion: point count mismatch");
  return (p - q).norm();
}

double linf_distortion(const Points& p, const Points& q) {
  require(p.rows() == q.rows(), "linf_distortion: point count mismatch");
  if (p.rows() == 0) return 0.0;
  return (p - q).cwiseAbs().maxCoeff();
}

Points linf_clip(const Points& adv, const Points& orig, double eps) {
  require(adv.rows() == orig.rows(), "linf_clip: point count mismatch");
  require(eps >= 0.0, "linf_clip: eps must be non-negative");
  Points out(adv.rows(), 3);
  for (Eigen::Index i = 0; i < adv.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      out(i, c) = std::clamp(adv(i, c), orig(i, c) - eps, orig(i, c) + eps);
    }
  }
  return out;
}

Points match_points(const Points& adv, const Points& orig) {
  require(adv.rows() == orig.rows(), "match_points: point count mismatch");
  const Eigen::Index n = orig.rows();
  // Shortest augmenting paths with potentials; orig rows are the 1-based "rows" of the cost matrix.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    owner[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = owner[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cost = (orig.row(i0 - 1) - adv.row(j - 1)).squaredNorm() - u[i0] - v[j];
        if (cost < minv[j]) {
          minv[j] = cost;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Points out(n, 3);
  for (Eigen::Index j = 1; j <= n; ++j) out.row(owner[j] - 1) = adv.row(j - 1);
  return out;
}

PointCloud linf_clip(const PointCloud& adv, const PointCloud& orig, double eps) {
  return PointCloud(linf_clip(adv.points(), orig.points(), eps), adv.label());
}

Points normalize(const Points& p) {
  require(p.rows() >= 1, "normalize: empty cloud");
  const Eigen::RowVector3d centroid = p.colwise().sum() / static_cast<double>(p.rows());
  Points out = p.rowwise() - centroid;
  const double radius = out.rowwise().norm().maxCoeff();
  if (!(radius > 0.0)) throw PreconditionError("normalize: all points coincide (zero radius)");
  out /= radius;
  return out;
}

PointCloud normalize(const PointCloud& p) { return PointCloud(normalize(p.points()), p.label()); }

DistortionReport distortion(const Points& adv, const Points& orig) {
  const auto t = nn_tables(adv, orig);
  DistortionReport r;
  r.cd = mean_of(t.p_to_q) + mean_of(t.q_to_p);
  r.hd = std::sqrt(std::max(directed_max(t.p_to_q).first, directed_max(t.q_to_p).first));
  r.l2 = l2_distortion(adv, orig);
  r.linf = linf_distortion(adv, orig);
  return r;
}

std::vector<Eigen::Index> nearest_indices(const Points& from, const Points& to) {
  return nn_tables(from, to).p_arg;
}

}  // namespace cosa
