#include "cosa/subspace.hpp"

#include "cosa/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cosa {

namespace {

double sq_dist(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  return (a.col(i) - b.col(j)).squaredNorm();
}

// Squared distance of every point to its nearest center, lowest center index on ties.
double assign(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& centers, std::vector<int>& assignment,
              std::vector<double>& dist) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < xs.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.cols(); ++c) {
      const double d = sq_dist(xs, i, centers, c);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = arg;
    dist[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& xs, int m, std::uint64_t seed, const KMeansOptions& opt) {
  require(m >= 1, "kmeans: m must be >= 1");
  require(xs.cols() >= m, "kmeans: fewer points than clusters");
  require(xs.allFinite(), "kmeans: non-finite input");
  const auto n = xs.cols();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd centers(xs.rows(), m);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = xs.col(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(xs, i, centers, 0);
  for (int c = 1; c < m; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.col(c) = xs.col(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(xs, i, centers, c));
    }
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double inertia = assign(xs, centers, res.assignment, dist);
    res.inertia_trace.push_back(inertia);
    res.iterations = it + 1;
    if (it > 0 && res.inertia_trace[res.inertia_trace.size() - 2] - inertia < opt.tolerance) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(xs.rows(), m);
    std::vector<int> counts(static_cast<std::size_t>(m), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      sums.col(c) += xs.col(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < m; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Reseed with the point farthest from its center, then make it ineligible.
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      centers.col(c) = xs.col(far);
      dist[static_cast<std::size_t>(far)] = -1.0;
    }
  }
  res.centers = std::move(centers);
  return res;
}

DictionarySet build_dictionaries(const nn::Encoder& encoder, const std::vector<PointCloud>& train,
                                 int prototypes, std::uint64_t seed) {
  require(prototypes >= 1, "build_dictionaries: prototype count must be >= 1");
  std::map<int, std::vector<Eigen::VectorXd>> latents;
  for (const auto& cloud : train) {
    require(cloud.label().has_value(), "build_dictionaries: unlabeled training cloud");
    latents[*cloud.label()].push_back(nn::encoder_forward(encoder, cloud.points()));
  }
  DictionarySet out;
  for (const auto& [label, zs] : latents) {
    if (static_cast<int>(zs.size()) < prototypes) {
      throw PreconditionError("build_dictionaries: class " + std::to_string(label) + " has " +
                              std::to_string(zs.size()) + " samples, fewer than " + std::to_string(prototypes));
    }
    Eigen::MatrixXd xs(encoder.latent_dim(), static_cast<Eigen::Index>(zs.size()));
    for (std::size_t i = 0; i < zs.size(); ++i) xs.col(static_cast<Eigen::Index>(i)) = zs[i];
    auto km = kmeans(xs, prototypes, mix_seed(seed, static_cast<std::uint64_t>(label), 0, 0x6469));
    out[label] = PrototypeDictionary{label, std::move(km.centers)};
  }
  return out;
}

// ---------------------------------------------------------------------------

double lasso_objective(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                       double lambda) {
  return (z - dict * alpha).squaredNorm() + lambda * alpha.lpNorm<1>();
}

double lasso_residual(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                      double lambda) {
  const Eigen::VectorXd g = 2.0 * dict.transpose() * (dict * alpha - z);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    double r;
    if (alpha(j) > 0.0) {
      r = std::abs(g(j) + lambda);
    } else if (alpha(j) < 0.0) {
      r = std::abs(g(j) - lambda);
    } else {
      r = std::max(0.0, std::abs(g(j)) - lambda);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

double gram_spectral_norm(const Eigen::MatrixXd& dict, int iterations) {
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dict.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  v.normalize();
  const Eigen::MatrixXd gram = dict.transpose() * dict;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd w = gram * v;
    const double nrm = w.norm();
    if (nrm == 0.0) return 0.0;
    v = w / nrm;
  }
  return v.dot(gram * v);
}

SparseCode sparse_code(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, double lambda,
                       const SparseCodeOptions& opt) {
  require(z.size() == dict.rows(), "sparse_code: latent width does not match dictionary");
  require(dict.cols() >= 1, "sparse_code: empty dictionary");
  require(lambda >= 0.0, "sparse_code: lambda must be non-negative");
  require(z.allFinite() && dict.allFinite(), "sparse_code: non-finite input");

  SparseCode best;
  best.alpha = Eigen::VectorXd::Zero(dict.cols());
  const double lip = 2.0 * gram_spectral_norm(dict, opt.power_iterations) * opt.lipschitz_margin;
  auto finish = [&](SparseCode& s) {
    s.objective = lasso_objective(z, dict, s.alpha, lambda);
    s.residual = lasso_residual(z, dict, s.alpha, lambda);
  };
  finish(best);
  if (opt.keep_trace) best.objective_trace.push_back(best.objective);
  if (best.residual <= opt.tolerance || lip == 0.0) return best;

  const double step = 1.0 / lip;
  const double shrink = step * lambda;  // prox of step * lambda * ||.||_1
  const Eigen::MatrixXd gram = dict.transpose() * dict;
  const Eigen::VectorXd dtz = dict.transpose() * z;
  Eigen::VectorXd alpha = best.alpha;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd grad = 2.0 * (gram * alpha - dtz);
    const Eigen::VectorXd u = alpha - step * grad;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
      const double a = std::abs(u(j)) - shrink;
      alpha(j) = a > 0.0 ? std::copysign(a, u(j)) : 0.0;
    }
    best.alpha = alpha;
    best.iterations = it;
    finish(best);
    if (opt.keep_trace) best.objective_trace.push_back(best.objective);
    if (best.residual <= opt.tolerance) return best;
  }
  throw ConvergenceError("sparse_code: optimality residual " + std::to_string(best.residual) +
                             " above tolerance after " + std::to_string(opt.max_iterations) + " iterations",
                         best);
}

double dictionary_condition(const PrototypeDictionary& dict) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dict.atoms.transpose() * dict.atoms);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace cosa
