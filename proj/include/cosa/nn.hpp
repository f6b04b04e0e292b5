#pragma once

#include "cosa/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cosa::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kLeakySlope = 0.01;

// y = x W^T + b, rows of x are samples. b is stored as an out x 1 matrix so every
// parameter is a Mat.
struct Dense {
  Mat w;
  Mat b;
  Eigen::Index in() const { return w.cols(); }
  Eigen::Index out() const { return w.rows(); }
};

using Mlp = std::vector<Dense>;

// He-uniform weights, zero biases. widths = {in, hidden..., out}.
Mlp make_mlp(std::span<const int> widths, std::mt19937_64& rng);
Mlp zeros_like(const Mlp& net);
bool all_finite(const Mlp& net);

// Layer inputs past the first are recomputed from `pre` during backward.
struct MlpCache {
  Mat input;
  std::vector<Mat> pre;  // pre-activation of every layer
};

// Leaky activation after every layer except (unless act_last) the final one.
Mat mlp_forward(const Mlp& net, const Mat& x, bool act_last, MlpCache* cache = nullptr);
// Returns dL/dx; accumulates parameter gradients into `grads` when non-null.
Mat mlp_backward(const Mlp& net, const MlpCache& cache, Mat dy, bool act_last, Mlp* grads);

// Several clouds stacked row-wise. offsets has one entry per cloud plus the end.
struct CloudBatch {
  Mat xyz;
  std::vector<Eigen::Index> offsets;
  // k-NN table for edge features (row-major, k per point, global row indices).
  std::vector<Eigen::Index> neighbors;
  int neighbor_k = 0;

  Eigen::Index num_clouds() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
};

CloudBatch make_batch(std::span<const PointCloud> clouds);
CloudBatch make_batch(const Points& cloud);
// Fills batch.neighbors with the k nearest other points of each point (ties -> lowest index).
void attach_neighbors(CloudBatch& batch, int k);

// Per-segment pooling. argmax holds the winning global row per (segment, channel).
Mat max_pool(const Mat& x, std::span<const Eigen::Index> offsets, std::vector<Eigen::Index>* argmax);
Mat max_pool_backward(const Mat& dpooled, const std::vector<Eigen::Index>& argmax, Eigen::Index rows);
Mat mean_pool(const Mat& x, std::span<const Eigen::Index> offsets);
Mat mean_pool_backward(const Mat& dpooled, std::span<const Eigen::Index> offsets, Eigen::Index rows);

// ---------------------------------------------------------------------------
// Encoder: per-point MLP 3 -> h -> h -> d, then max pool over points.

struct Encoder {
  Mlp mlp;
  int hidden() const { return static_cast<int>(mlp.front().out()); }
  int latent_dim() const { return static_cast<int>(mlp.back().out()); }
};

struct EncoderCache {
  MlpCache mlp;  // rows in `live` only
  std::vector<Eigen::Index> live;  // sorted rows that won a pooled channel
  std::vector<Eigen::Index> argmax;
  Eigen::Index rows = 0;
};

Encoder make_encoder(int hidden, int latent, std::uint64_t seed);
Mat encoder_forward(const Encoder& enc, const CloudBatch& batch, EncoderCache* cache = nullptr);
Mat encoder_backward(const Encoder& enc, const EncoderCache& cache, const Mat& dz, Encoder* grads);
Vec encoder_forward(const Encoder& enc, const Points& cloud);

// ---------------------------------------------------------------------------
// Decoder: MLP d -> h -> h -> 3n, reshaped to n x 3.

struct Decoder {
  Mlp mlp;
  int num_points() const { return static_cast<int>(mlp.back().out() / 3); }
  int latent_dim() const { return static_cast<int>(mlp.front().in()); }
};

struct DecoderCache {
  MlpCache mlp;
};

Decoder make_decoder(int latent, int hidden, int num_points, std::uint64_t seed);
// Rows of z are latents; output row b holds cloud b as (x0 y0 z0 x1 y1 z1 ...).
Mat decoder_forward(const Decoder& dec, const Mat& z, DecoderCache* cache = nullptr);
Mat decoder_backward(const Decoder& dec, const DecoderCache& cache, const Mat& dout, Decoder* grads);
Points decoder_forward(const Decoder& dec, const Vec& z);
Points row_to_points(const Mat& flat, Eigen::Index row);
Eigen::RowVectorXd points_to_row(const Points& p);

// ---------------------------------------------------------------------------
// Classifiers. A: per-point MLP + max pool. B: k-NN edge features + max pools.
// C: per-point MLP + mean pool. All end in an MLP head h -> h -> Z.

enum class Arch { A, B, C };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& s);

struct Classifier {
  Arch arch = Arch::A;
  int num_classes = 0;
  int k = 8;     // neighbours for arch B
  Mlp edge;      // arch B only: 6 -> h
  Mlp point;     // A/C: 3 -> h -> h; B: h -> h
  Mlp head;      // h -> h -> Z
};

struct ClassifierCache {
  MlpCache point, head;
  Mat edge_input, edge_pre;  // arch B: input coordinates, winning edge pre-activations
  std::vector<Eigen::Index> edge_argmax, pool_argmax;
  std::vector<Eigen::Index> neighbors;
  std::vector<Eigen::Index> offsets;
  Eigen::Index rows = 0;
};

Classifier make_classifier(Arch arch, int hidden, int num_classes, std::uint64_t seed, int k = 8);
Classifier zeros_like(const Classifier& c);
Mat classifier_forward(const Classifier& clf, const CloudBatch& batch, ClassifierCache* cache = nullptr);
Mat classifier_backward(const Classifier& clf, const ClassifierCache& cache, const Mat& dlogits,
                        Classifier* grads);
Vec classifier_forward(const Classifier& clf, const Points& cloud);
int predict(const Classifier& clf, const Points& cloud);

// ---------------------------------------------------------------------------
// Losses

struct CrossEntropy {
  double loss = 0.0;
  Vec grad;  // d loss / d logits
};

CrossEntropy cross_entropy(const Vec& logits, int label);

// Untargeted margin: logit_y - max_{j != y} logit_j, floored at -kappa.
CrossEntropy margin_loss(const Vec& logits, int label, double kappa);

// ---------------------------------------------------------------------------
// Parameter enumeration, shared by Adam and the checkpoint code.

struct ParamRef {
  std::string name;
  Mat* value;
};

std::vector<ParamRef> parameters(Encoder& e);
std::vector<ParamRef> parameters(Decoder& d);
std::vector<ParamRef> parameters(Classifier& c);

class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options opt) : opt_(opt) {}

  // params[i] is updated with grads[i]; shapes must stay fixed across calls.
  void step(std::span<Mat* const> params, std::span<const Mat* const> grads);
  long steps() const { return t_; }

 private:
  Options opt_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// ---------------------------------------------------------------------------
// Finite-difference validation.

struct GradCheckReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::Index coordinates = 0;
  // Coordinates whose +/- step changed a discrete decision (see DecisionTrace).
  Eigen::Index skipped = 0;
  bool passed = false;
};

// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6 * max_j |n_j|, 1e-12).
GradCheckReport grad_check(const std::function<double(const Vec&)>& f, const Vec& analytic,
                           const Vec& x0, double step, double tol, bool skip_decision_changes = false);

}  // namespace cosa::nn
