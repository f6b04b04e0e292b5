#pragma once

#include "cosa/error.hpp"
#include "cosa/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <vector>

namespace cosa {

// Class-wise prototype dictionary. Columns of `atoms` are latent prototypes; their span
// is the base subspace an input latent is coded over.
struct PrototypeDictionary {
  int label = 0;
  Eigen::MatrixXd atoms;  // d x m

  Eigen::Index dim() const { return atoms.rows(); }
  Eigen::Index size() const { return atoms.cols(); }
};

using DictionarySet = std::map<int, PrototypeDictionary>;

struct KMeansResult {
  Eigen::MatrixXd centers;  // d x m
  std::vector<int> assignment;
  // Inertia after every assignment step; non-increasing.
  std::vector<double> inertia_trace;
  int iterations = 0;
};

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-10;  // stop once inertia decreases by less than this
};

// k-means++ seeding then Lloyd iterations. xs holds one point per column. Assignment
// ties go to the lowest center index; an empty cluster is reseeded with the point
// farthest from its current center.
KMeansResult kmeans(const Eigen::MatrixXd& xs, int m, std::uint64_t seed, const KMeansOptions& opt = {});

// Encodes every training cloud of each class and clusters the latents into m prototypes.
DictionarySet build_dictionaries(const nn::Encoder& encoder, const std::vector<PointCloud>& train,
                                 int prototypes, std::uint64_t seed);

struct SparseCode {
  Eigen::VectorXd alpha;
  double objective = 0.0;
  double residual = 0.0;  // infinity norm of the optimality residual
  int iterations = 0;
  std::vector<double> objective_trace;
};

struct SparseCodeOptions {
  double tolerance = 1e-8;
  int max_iterations = 20000;
  int power_iterations = 100;
  double lipschitz_margin = 1.01;
  bool keep_trace = false;
};

// ISTA does not reach the requested optimality residual within the iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, SparseCode best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const SparseCode& best() const { return best_; }

 private:
  SparseCode best_;
};

// argmin_a ||z - D a||^2 + lambda ||a||_1 by ISTA (no 1/2 on the quadratic).
SparseCode sparse_code(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, double lambda,
                       const SparseCodeOptions& opt = {});
inline SparseCode sparse_code(const Eigen::VectorXd& z, const PrototypeDictionary& dict, double lambda,
                              const SparseCodeOptions& opt = {}) {
  return sparse_code(z, dict.atoms, lambda, opt);
}

double lasso_objective(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                       double lambda);
// Distance of -grad of the smooth part from the subdifferential of lambda ||.||_1, inf-norm.
double lasso_residual(const Eigen::VectorXd& z, const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                      double lambda);

// Largest eigenvalue of D^T D by power iteration from a fixed seeded start.
double gram_spectral_norm(const Eigen::MatrixXd& dict, int iterations);

// lambda_max / lambda_min of D^T D (infinity when singular).
double dictionary_condition(const PrototypeDictionary& dict);

}  // namespace cosa
