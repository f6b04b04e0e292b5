#include "cosa/attack.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace cosa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string misloss_name(MisLoss m) { return m == MisLoss::NegCE ? "neg_ce" : "margin"; }

MisLoss misloss_from_name(const std::string& s) {
  if (s == "neg_ce") return MisLoss::NegCE;
  if (s == "margin") return MisLoss::Margin;
  throw PreconditionError("unknown misloss '" + s + "' (expected neg_ce or margin)");
}

std::string ablation_name(AblationMode m) {
  switch (m) {
    case AblationMode::None: return "none";
    case AblationMode::SOnly: return "s_only";
    case AblationMode::BOnly: return "b_only";
    case AblationMode::Full: return "full";
  }
  return "full";
}

AblationMode ablation_from_name(const std::string& s) {
  if (s == "none") return AblationMode::None;
  if (s == "s_only") return AblationMode::SOnly;
  if (s == "b_only") return AblationMode::BOnly;
  if (s == "full") return AblationMode::Full;
  throw PreconditionError("unknown ablation mode '" + s + "'");
}

void AttackConfig::validate(int latent_dim) const {
  require(lambda_spa >= 0 && lambda_per >= 0 && lambda_rank >= 0 && lambda_ort >= 0,
          "attack config: weights must be non-negative");
  require(eps > 0.0, "attack config: eps must be positive");
  require(iters >= 0, "attack config: iters must be non-negative");
  require(lr > 0.0, "attack config: lr must be positive");
  require(rank >= 1, "attack config: rank must be >= 1");
  require(prototypes >= 1, "attack config: prototypes must be >= 1");
  require(margin_kappa >= 0.0, "attack config: margin_kappa must be non-negative");
  require(latent_dim < 0 || rank <= latent_dim, "attack config: rank exceeds latent dimension");
}

VectorXd perturbed_latent(const MatrixXd& dict, const VectorXd& alpha, const MatrixXd& u, const MatrixXd& gamma) {
  require(dict.cols() == alpha.size(), "perturbed_latent: alpha length does not match dictionary");
  require(u.rows() == dict.rows(), "perturbed_latent: U rows do not match latent width");
  require(gamma.rows() == u.cols() && gamma.cols() == dict.cols(), "perturbed_latent: Gamma shape mismatch");
  return dict * alpha + u * (gamma * alpha);
}


double nuclear_norm(const MatrixXd& gamma) {
  require(gamma.allFinite(), "nuclear_norm: non-finite input");
  if (gamma.size() == 0) return 0.0;
  return Eigen::JacobiSVD<MatrixXd>(gamma).singularValues().sum();
}

MatrixXd nuclear_norm_subgrad(const MatrixXd& gamma) {
  require(gamma.allFinite(), "nuclear_norm_subgrad: non-finite input");
  MatrixXd out = MatrixXd::Zero(gamma.rows(), gamma.cols());
  if (gamma.size() == 0) return out;
  Eigen::JacobiSVD<MatrixXd> svd(gamma, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-10) out += svd.matrixU().col(i) * svd.matrixV().col(i).transpose();
  }
  return out;
}

double ortho_penalty(const MatrixXd& u) {
  require(u.allFinite(), "ortho_penalty: non-finite input");
  return (u.transpose() * u - MatrixXd::Identity(u.cols(), u.cols())).squaredNorm();
}

MatrixXd ortho_penalty_grad(const MatrixXd& u) {
  require(u.allFinite(), "ortho_penalty_grad: non-finite input");
  return 4.0 * u * (u.transpose() * u - MatrixXd::Identity(u.cols(), u.cols()));
}

MatrixXd random_orthonormal(int d, int r, std::uint64_t seed) {
  require(r >= 1 && r <= d, "random_orthonormal: need 1 <= r <= d");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd g(d, r);
  for (int c = 0; c < r; ++c) {
    for (int i = 0; i < d; ++i) g(i, c) = normal(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(d, r);
  // Fix the sign so R has a positive diagonal.
  const MatrixXd& rr = qr.matrixQR();
  for (int c = 0; c < r; ++c) {
    if (rr(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

namespace {

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("attack objective: non-finite ") + term);
}

}  // namespace

LatentLoss latent_loss(const Points& clean, int label, const nn::Classifier& surrogate, const nn::Decoder& decoder,
                       const VectorXd& z, const AttackConfig& cfg) {
  require(z.size() == decoder.latent_dim(), "latent_loss: latent width mismatch");
  require(label >= 0 && label < surrogate.num_classes, "latent_loss: label out of range");
  LatentLoss out;
  nn::DecoderCache dcache;
  const nn::Mat flat = nn::decoder_forward(decoder, nn::Mat(z.transpose()), &dcache);
  out.decoded = nn::row_to_points(flat, 0);
  if (!out.decoded.allFinite()) throw NumericError("attack objective: non-finite decoded cloud");

  nn::ClassifierCache ccache;
  const nn::CloudBatch batch = nn::make_batch(out.decoded);
  const VectorXd logits = nn::classifier_forward(surrogate, batch, &ccache).row(0).transpose();
  nn::CrossEntropy mis;
  if (cfg.misloss == MisLoss::NegCE) {
    mis = nn::cross_entropy(logits, label);
    mis.loss = -mis.loss;
    mis.grad = -mis.grad;
  } else {
    mis = nn::margin_loss(logits, label, cfg.margin_kappa);
  }
  out.parts.mis = mis.loss;
  check_finite(out.parts.mis, "misclassification loss");
  nn::Mat dpoints = nn::classifier_backward(surrogate, ccache, nn::Mat(mis.grad.transpose()), nullptr);

  if (cfg.lambda_per != 0.0) {
    const MetricGrad cd = chamfer_grad(out.decoded, clean);
    const MetricGrad hd = hausdorff_grad(out.decoded, clean);
    out.parts.cd = cd.value;
    out.parts.hd = hd.value;
    out.parts.per = cd.value + 0.1 * hd.value;
    check_finite(out.parts.per, "perceptual loss");
    dpoints += cfg.lambda_per * (cd.grad_p + 0.1 * hd.grad_p);
  }
  out.value = out.parts.mis + cfg.lambda_per * out.parts.per;
  const nn::Mat dflat = nn::points_to_row(Points(dpoints));
  out.grad_z = nn::decoder_backward(decoder, dcache, dflat, nullptr).row(0).transpose();
  return out;
}

Objective cosa_objective(const Points& clean, int label, const nn::Classifier& surrogate,
                         const nn::Decoder& decoder, const MatrixXd& dict, const VectorXd& alpha, const MatrixXd& u,
                         const MatrixXd& gamma, const AttackConfig& cfg) {
  require(u.allFinite() && gamma.allFinite(), "cosa_objective: non-finite U or Gamma");
  const VectorXd ga = gamma * alpha;
  const VectorXd z = perturbed_latent(dict, alpha, u, gamma);
  const LatentLoss ll = latent_loss(clean, label, surrogate, decoder, z, cfg);
  Objective out;
  out.parts = ll.parts;
  out.parts.rank = nuclear_norm(gamma);
  out.parts.ortho = ortho_penalty(u);
  out.loss = ll.value + cfg.lambda_rank * out.parts.rank + cfg.lambda_ort * out.parts.ortho;
  check_finite(out.loss, "total loss");
  out.grad_u = ll.grad_z * ga.transpose() + cfg.lambda_ort * ortho_penalty_grad(u);
  out.grad_gamma = u.transpose() * ll.grad_z * alpha.transpose() + cfg.lambda_rank * nuclear_norm_subgrad(gamma);
  return out;
}

namespace {

struct Evaluation {
  double loss = 0.0;
  std::vector<MatrixXd> grads;  // one per variable
};

using Evaluator = std::function<Evaluation(const std::vector<MatrixXd>&)>;
using LatentOf = std::function<VectorXd(const std::vector<MatrixXd>&)>;

// Adam over `vars`, then decode and clip. Only variables flagged in `trainable` move.
AttackResult optimize(std::vector<MatrixXd> vars, const std::vector<bool>& trainable, const Evaluator& evaluate,
                      const LatentOf& latent_of, const Points& clean, int label, const nn::Classifier& surrogate,
                      const nn::Decoder& decoder, const AttackConfig& cfg, bool snapshots) {
  AttackResult res;
  nn::Adam adam({cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<MatrixXd> grads;
  std::vector<nn::Mat*> ps;
  std::vector<const nn::Mat*> gs;
  res.loss_trace.reserve(static_cast<std::size_t>(cfg.iters));
  auto snapshot = [&](int it) {
    if (snapshots) res.snapshots.push_back({it, vars[0], vars.size() > 1 ? vars[1] : MatrixXd()});
  };
  for (int it = 0; it < cfg.iters; ++it) {
    if (snapshots && cfg.snapshot_every > 0 && it % cfg.snapshot_every == 0) snapshot(it);
    Evaluation ev;
    try {
      ev = evaluate(vars);
    } catch (const NumericError& e) {
      throw AttackDiverged(std::string(e.what()) + " at iteration " + std::to_string(it), res.loss_trace);
    }
    res.loss_trace.push_back(ev.loss);
    grads = std::move(ev.grads);
    ps.clear();
    gs.clear();
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (!trainable[i]) continue;
      ps.push_back(&vars[i]);
      gs.push_back(&grads[i]);
    }
    if (!ps.empty()) adam.step(ps, gs);
  }
  if (snapshots && cfg.snapshot_every > 0) snapshot(cfg.iters);

  // Decoder slots carry no order, so pair them with the clean points before clipping.
  const Points raw = nn::decoder_forward(decoder, latent_of(vars));
  if (!raw.allFinite()) throw AttackDiverged("attack: non-finite decoded cloud", res.loss_trace);
  const Points decoded = match_points(raw, clean);
  res.pre_clip_linf = linf_distortion(decoded, clean);
  res.adversarial = linf_clip(decoded, clean, cfg.eps);
  res.delta = res.adversarial - clean;
  res.distortion = distortion(res.adversarial, clean);
  res.predicted = nn::predict(surrogate, res.adversarial);
  res.success = res.predicted != label;
  res.u = vars[0];
  if (vars.size() > 1) res.gamma = vars[1];
  return res;
}

const PrototypeDictionary& dictionary_for(const DictionarySet& dicts, int label) {
  const auto it = dicts.find(label);
  if (it == dicts.end()) throw PreconditionError("attack: no dictionary for class " + std::to_string(label));
  return it->second;
}

void check_inputs(const Points& clean, int label, const nn::Classifier& surrogate, const nn::AutoEncoder& ae,
                  const AttackConfig& cfg) {
  cfg.validate(ae.decoder.latent_dim());
  require(clean.rows() == ae.decoder.num_points(), "attack: cloud size does not match decoder output size");
  require(clean.allFinite(), "attack: non-finite input cloud");
  require(label >= 0 && label < surrogate.num_classes, "attack: label out of range");
}

// The attack keeps going on the best ISTA iterate when the cap is hit; the residual is reported.
VectorXd attack_code(const VectorXd& z, const MatrixXd& dict, double lambda, double& residual) {
  try {
    SparseCode code = sparse_code(z, dict, lambda);
    residual = code.residual;
    return code.alpha;
  } catch (const ConvergenceError& e) {
    residual = e.best().residual;
    return e.best().alpha;
  }
}

AttackResult run_full(const Points& clean, int label, const nn::Classifier& surrogate, const nn::AutoEncoder& ae,
                      const DictionarySet& dicts, const AttackConfig& cfg) {
  check_inputs(clean, label, surrogate, ae, cfg);
  const MatrixXd& dict = dictionary_for(dicts, label).atoms;
  const VectorXd z = nn::encoder_forward(ae.encoder, clean);
  double residual = 0.0;
  const VectorXd alpha = attack_code(z, dict, cfg.lambda_spa, residual);
  const int d = static_cast<int>(dict.rows());
  std::vector<MatrixXd> vars{random_orthonormal(d, cfg.rank, cfg.seed),
                             MatrixXd::Zero(cfg.rank, dict.cols())};
  auto evaluate = [&](const std::vector<MatrixXd>& v) {
    Objective o = cosa_objective(clean, label, surrogate, ae.decoder, dict, alpha, v[0], v[1], cfg);
    return Evaluation{o.loss, {std::move(o.grad_u), std::move(o.grad_gamma)}};
  };
  auto latent_of = [&](const std::vector<MatrixXd>& v) { return perturbed_latent(dict, alpha, v[0], v[1]); };
  auto res = optimize(std::move(vars), {cfg.optimize_u, cfg.optimize_gamma}, evaluate, latent_of, clean, label,
                      surrogate, ae.decoder, cfg, true);
  res.alpha = alpha;
  res.sparse_residual = residual;
  return res;
}

}  // namespace

AttackResult cosa_attack(const Points& clean, int label, const nn::Classifier& surrogate, const nn::AutoEncoder& ae,
                         const DictionarySet& dicts, const AttackConfig& cfg) {
  return run_full(clean, label, surrogate, ae, dicts, cfg);
}

AttackResult ablation_attack(AblationMode mode, const Points& clean, int label, const nn::Classifier& surrogate,
                             const nn::AutoEncoder& ae, const DictionarySet& dicts, const AttackConfig& cfg) {
  if (mode == AblationMode::Full) return run_full(clean, label, surrogate, ae, dicts, cfg);
  check_inputs(clean, label, surrogate, ae, cfg);
  const nn::Decoder& dec = ae.decoder;

  if (mode == AblationMode::BOnly) {
    const MatrixXd& dict = dictionary_for(dicts, label).atoms;
    double residual = 0.0;
    const VectorXd alpha = attack_code(nn::encoder_forward(ae.encoder, clean), dict, cfg.lambda_spa, residual);
    // Slot 0 is unused so the perturbation lands in result.gamma like the other modes.
    std::vector<MatrixXd> vars{MatrixXd(), MatrixXd::Zero(dict.rows(), dict.cols())};
    auto evaluate = [&](const std::vector<MatrixXd>& v) {
      const LatentLoss ll = latent_loss(clean, label, surrogate, dec, (dict + v[1]) * alpha, cfg);
      return Evaluation{ll.value, {MatrixXd(), ll.grad_z * alpha.transpose()}};
    };
    auto latent_of = [&](const std::vector<MatrixXd>& v) { return VectorXd((dict + v[1]) * alpha); };
    auto res = optimize(std::move(vars), {false, true}, evaluate, latent_of, clean, label, surrogate, dec, cfg, false);
    res.alpha = alpha;
    res.sparse_residual = residual;
    return res;
  }

  const VectorXd z = nn::encoder_forward(ae.encoder, clean);
  if (mode == AblationMode::None) {
    std::vector<MatrixXd> vars{MatrixXd::Zero(z.size(), 1)};
    auto evaluate = [&](const std::vector<MatrixXd>& v) {
      const LatentLoss ll = latent_loss(clean, label, surrogate, dec, z + v[0].col(0), cfg);
      return Evaluation{ll.value, {MatrixXd(ll.grad_z)}};
    };
    auto latent_of = [&](const std::vector<MatrixXd>& v) { return VectorXd(z + v[0].col(0)); };
    return optimize(std::move(vars), {true}, evaluate, latent_of, clean, label, surrogate, dec, cfg, false);
  }

  // s_only
  std::vector<MatrixXd> vars{random_orthonormal(static_cast<int>(z.size()), cfg.rank, cfg.seed),
                             MatrixXd::Zero(cfg.rank, 1)};
  auto evaluate = [&](const std::vector<MatrixXd>& v) {
    const LatentLoss ll = latent_loss(clean, label, surrogate, dec, z + v[0] * v[1].col(0), cfg);
    const double rank = nuclear_norm(v[1]);
    const double ortho = ortho_penalty(v[0]);
    const double loss = ll.value + cfg.lambda_rank * rank + cfg.lambda_ort * ortho;
    check_finite(loss, "total loss");
    MatrixXd gu = ll.grad_z * v[1].transpose() + cfg.lambda_ort * ortho_penalty_grad(v[0]);
    MatrixXd gg = v[0].transpose() * ll.grad_z + cfg.lambda_rank * nuclear_norm_subgrad(v[1]);
    return Evaluation{loss, {std::move(gu), std::move(gg)}};
  };
  auto latent_of = [&](const std::vector<MatrixXd>& v) { return VectorXd(z + v[0] * v[1].col(0)); };
  return optimize(std::move(vars), {true, true}, evaluate, latent_of, clean, label, surrogate, dec, cfg, false);
}

AttackResult pgd_baseline(const Points& clean, int label, const nn::Classifier& surrogate, double eps, int steps,
                          double step_size) {
  require(eps > 0.0, "pgd_baseline: eps must be positive");
  require(steps >= 0, "pgd_baseline: steps must be non-negative");
  require(step_size > 0.0, "pgd_baseline: step size must be positive");
  require(label >= 0 && label < surrogate.num_classes, "pgd_baseline: label out of range");
  AttackResult res;
  Points adv = clean;
  for (int it = 0; it < steps; ++it) {
    nn::ClassifierCache cache;
    const VectorXd logits = nn::classifier_forward(surrogate, nn::make_batch(adv), &cache).row(0).transpose();
    const nn::CrossEntropy ce = nn::cross_entropy(logits, label);
    res.loss_trace.push_back(ce.loss);
    const nn::Mat g = nn::classifier_backward(surrogate, cache, nn::Mat(ce.grad.transpose()), nullptr);
    if (!g.allFinite()) throw AttackDiverged("pgd_baseline: non-finite gradient", res.loss_trace);
    adv = linf_clip(Points(adv + step_size * g.array().sign().matrix()), clean, eps);
  }
  res.adversarial = adv;
  res.delta = adv - clean;
  res.pre_clip_linf = linf_distortion(adv, clean);
  res.distortion = distortion(adv, clean);
  res.predicted = nn::predict(surrogate, adv);
  res.success = res.predicted != label;
  return res;
}

}  // namespace cosa
