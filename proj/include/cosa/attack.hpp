#pragma once

#include "cosa/geometry.hpp"
#include "cosa/nn.hpp"
#include "cosa/subspace.hpp"
#include "cosa/train.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cosa {

enum class MisLoss { NegCE, Margin };

std::string misloss_name(MisLoss m);
MisLoss misloss_from_name(const std::string& s);

struct AttackConfig {
  double lambda_spa = 0.1;
  double lambda_per = 1.0;
  double lambda_rank = 1e-4;
  double lambda_ort = 1e-3;
  double eps = 0.18;
  int iters = 2000;
  double lr = 1e-2;
  int rank = 3;
  int prototypes = 5;
  MisLoss misloss = MisLoss::NegCE;
  double margin_kappa = 0.0;
  std::uint64_t seed = 0;
  // Freezing both leaves the loss trace constant; used as a sanity check.
  bool optimize_u = true;
  bool optimize_gamma = true;
  // Iterates whose (U, Gamma) are recorded; 0 disables.
  int snapshot_every = 0;

  // Throws PreconditionError on a violated invariant. latent_dim < 0 skips the r <= d check.
  void validate(int latent_dim = -1) const;
};

// z' = D alpha + U (Gamma alpha).
Eigen::VectorXd perturbed_latent(const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                                 const Eigen::MatrixXd& u, const Eigen::MatrixXd& gamma);

// Sum of singular values via the eigenvalues of the smaller Gram matrix.
double nuclear_norm(const Eigen::MatrixXd& gamma);
// U_s V_s^T over singular values above 1e-10.
Eigen::MatrixXd nuclear_norm_subgrad(const Eigen::MatrixXd& gamma);

// ||U^T U - I||_F^2 and its gradient 4 U (U^T U - I).
double ortho_penalty(const Eigen::MatrixXd& u);
Eigen::MatrixXd ortho_penalty_grad(const Eigen::MatrixXd& u);

struct ObjectiveParts {
  double mis = 0.0;
  double cd = 0.0;
  double hd = 0.0;
  double per = 0.0;  // cd + 0.1 hd
  double rank = 0.0;
  double ortho = 0.0;
};

// Misclassification plus perceptual loss of the decoded latent, with dL/dz.
struct LatentLoss {
  double value = 0.0;
  ObjectiveParts parts;
  Eigen::VectorXd grad_z;
  Points decoded;
};

LatentLoss latent_loss(const Points& clean, int label, const nn::Classifier& surrogate, const nn::Decoder& decoder,
                       const Eigen::VectorXd& z, const AttackConfig& cfg);

struct Objective {
  double loss = 0.0;
  Eigen::MatrixXd grad_u;
  Eigen::MatrixXd grad_gamma;
  ObjectiveParts parts;
};

// Full objective over (U, Gamma): L_mis + lambda_per L_per + lambda_rank ||Gamma||_* + lambda_ort ortho(U).
Objective cosa_objective(const Points& clean, int label, const nn::Classifier& surrogate,
                         const nn::Decoder& decoder, const Eigen::MatrixXd& dict, const Eigen::VectorXd& alpha,
                         const Eigen::MatrixXd& u, const Eigen::MatrixXd& gamma, const AttackConfig& cfg);

struct SubspaceSnapshot {
  int iteration = 0;
  Eigen::MatrixXd u;
  Eigen::MatrixXd gamma;
};

struct AttackResult {
  Points adversarial;
  Points delta;
  bool success = false;
  int predicted = -1;
  std::vector<double> loss_trace;
  DistortionReport distortion;
  double pre_clip_linf = 0.0;
  Eigen::VectorXd alpha;
  double sparse_residual = 0.0;  // ISTA optimality residual of alpha (above 1e-8 when capped)
  // Final optimization variables. For the ablations that do not use (U, Gamma) these
  // hold the mode's own variables (see ablation_attack).
  Eigen::MatrixXd u;
  Eigen::MatrixXd gamma;
  std::vector<SubspaceSnapshot> snapshots;
};

// Non-finite loss during an attack; carries the trace so far.
class AttackDiverged : public NumericError {
 public:
  AttackDiverged(const std::string& what, std::vector<double> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

AttackResult cosa_attack(const Points& clean, int label, const nn::Classifier& surrogate,
                         const nn::AutoEncoder& ae, const DictionarySet& dicts, const AttackConfig& cfg);

enum class AblationMode { None, SOnly, BOnly, Full };

std::string ablation_name(AblationMode m);
AblationMode ablation_from_name(const std::string& s);

// none:   z' = Enc(P) + dz, dz free.                      result.u = dz
// s_only: z' = Enc(P) + U g, g in R^r, all four terms.    result.u = U, result.gamma = g
// b_only: z' = (D + Delta) alpha, Delta free.             result.gamma = Delta
// full:   cosa_attack.
AttackResult ablation_attack(AblationMode mode, const Points& clean, int label, const nn::Classifier& surrogate,
                             const nn::AutoEncoder& ae, const DictionarySet& dicts, const AttackConfig& cfg);

// Iterated sign-gradient ascent on cross-entropy, projected onto the l_inf ball.
AttackResult pgd_baseline(const Points& clean, int label, const nn::Classifier& surrogate, double eps, int steps,
                          double step_size);

// Orthonormal factor of a seeded Gaussian d x r matrix.
Eigen::MatrixXd random_orthonormal(int d, int r, std::uint64_t seed);

}  // namespace cosa
