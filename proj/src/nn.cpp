#include "cosa/nn.hpp"

#include "cosa/error.hpp"
#include "cosa/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cosa::nn {

namespace {


// max(x, slope * x) equals the leaky rectifier for 0 < slope < 1 and vectorizes.
Mat activate(const Mat& pre) { return pre.cwiseMax(kLeakySlope * pre); }

// x w^T + b with every output entry accumulated the same way (bias, then one fma per
// input in order), so a row's result does not depend on where it sits in x. BLAS-style
// kernels treat edge rows differently, which breaks exact permutation invariance.
using Packet = Eigen::internal::packet_traits<double>::type;
constexpr int kLanes = Eigen::internal::packet_traits<double>::size;
constexpr int kRowPackets = 3;
constexpr int kTileRows = kRowPackets * kLanes;

// One tile of kTileRows rows by J outputs. x has column stride ldx, y column stride ldy.
template <int J>
void affine_tile(const double* x, Eigen::Index ldx, const Mat& w, Eigen::Index j0, const double* bias, double* y,
                 Eigen::Index ldy) {
  using namespace Eigen::internal;
  Packet acc[J][kRowPackets];
  for (int jj = 0; jj < J; ++jj) {
    for (int p = 0; p < kRowPackets; ++p) acc[jj][p] = pset1<Packet>(bias ? bias[j0 + jj] : 0.0);
  }
  for (Eigen::Index k = 0; k < w.cols(); ++k) {
    Packet xs[kRowPackets];
    for (int p = 0; p < kRowPackets; ++p) xs[p] = ploadu<Packet>(x + k * ldx + p * kLanes);
    for (int jj = 0; jj < J; ++jj) {
      const Packet wk = pset1<Packet>(w(j0 + jj, k));
      for (int p = 0; p < kRowPackets; ++p) acc[jj][p] = pmadd(xs[p], wk, acc[jj][p]);
    }
  }
  for (int jj = 0; jj < J; ++jj) {
    for (int p = 0; p < kRowPackets; ++p) pstoreu(y + (j0 + jj) * ldy + p * kLanes, acc[jj][p]);
  }
}

void affine_rows(const double* x, Eigen::Index ldx, const Mat& w, const double* bias, double* y, Eigen::Index ldy) {
  constexpr int kCols = 8;
  Eigen::Index j = 0;
  for (; j + kCols <= w.rows(); j += kCols) affine_tile<kCols>(x, ldx, w, j, bias, y, ldy);
  for (; j < w.rows(); ++j) affine_tile<1>(x, ldx, w, j, bias, y, ldy);
}

Mat affine(const Mat& x, const Mat& w, const double* bias) {
  const Eigen::Index n = x.rows(), in = x.cols(), out = w.rows();
  Mat y(n, out);
  Eigen::Index i = 0;
  for (; i + kTileRows <= n; i += kTileRows) affine_rows(x.data() + i, n, w, bias, y.data() + i, n);
  if (i < n) {
    // Zero-padded copy of the last rows so they take the same path as the rest.
    const Eigen::Index rest = n - i;
    Mat xt = Mat::Zero(kTileRows, in), yt(kTileRows, out);
    xt.topRows(rest) = x.bottomRows(rest);
    affine_rows(xt.data(), kTileRows, w, bias, yt.data(), kTileRows);
    y.bottomRows(rest) = yt.topRows(rest);
  }
  return y;
}


auto activation_grad(const Mat& pre) {
  return (pre.array() >= 0.0).select(1.0, Eigen::ArrayXXd::Constant(pre.rows(), pre.cols(), kLeakySlope));
}

void trace_signs(const Mat& pre) {
  auto* trace = DecisionTrace::current();
  if (!trace) return;
  std::uint64_t word = 0;
  int bits = 0;
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    word = (word << 1) | (pre.data()[i] >= 0.0 ? 1u : 0u);
    if (++bits == 64) {
      trace->record(word);
      word = 0;
      bits = 0;
    }
  }
  trace->record(word);
}

void trace_indices(const std::vector<Eigen::Index>& idx) {
  if (auto* trace = DecisionTrace::current()) {
    for (auto v : idx) trace->record(static_cast<std::uint64_t>(v));
  }
}

Dense make_dense(int in, int out, std::mt19937_64& rng) {
  Dense d;
  d.w.resize(out, in);
  d.b = Mat::Zero(out, 1);
  const double bound = std::sqrt(6.0 / in);
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (Eigen::Index c = 0; c < d.w.cols(); ++c) {
    for (Eigen::Index r = 0; r < d.w.rows(); ++r) d.w(r, c) = unif(rng);
  }
  return d;
}

void append_params(std::vector<ParamRef>& out, Mlp& net, const std::string& prefix) {
  for (std::size_t l = 0; l < net.size(); ++l) {
    out.push_back({prefix + "." + std::to_string(l) + ".w", &net[l].w});
    out.push_back({prefix + "." + std::to_string(l) + ".b", &net[l].b});
  }
}

}  // namespace

Mlp make_mlp(std::span<const int> widths, std::mt19937_64& rng) {
  require(widths.size() >= 2, "make_mlp: need at least input and output width");
  Mlp net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) net.push_back(make_dense(widths[i], widths[i + 1], rng));
  return net;
}

Mlp zeros_like(const Mlp& net) {
  Mlp out;
  for (const auto& d : net) out.push_back({Mat::Zero(d.w.rows(), d.w.cols()), Mat::Zero(d.b.rows(), 1)});
  return out;
}

bool all_finite(const Mlp& net) {
  return std::all_of(net.begin(), net.end(), [](const Dense& d) { return d.w.allFinite() && d.b.allFinite(); });
}

Mat mlp_forward(const Mlp& net, const Mat& x, bool act_last, MlpCache* cache) {
  for (std::size_t l = 0; l < net.size(); ++l) {
    if ((l == 0 ? x.cols() : net[l - 1].out()) != net[l].in()) throw PreconditionError("mlp_forward: width mismatch");
  }
  // Rows are independent, so the layers run block by block while a block fits in cache.
  // affine() makes the result identical to a single pass over all rows.
  const Eigen::Index n = x.rows();
  // A cache passed in again keeps its buffers, which spares the page faults of fresh
  // large allocations.
  const bool keep_pre = cache || DecisionTrace::current();
  std::vector<Mat> local;
  std::vector<Mat>& pre = cache ? cache->pre : local;
  pre.resize(keep_pre ? net.size() : 0);
  for (std::size_t l = 0; l < pre.size(); ++l) pre[l].resize(n, net[l].out());
  Mat out(n, net.back().out());
  constexpr Eigen::Index kBlockRows = 10 * kTileRows;
  for (Eigen::Index r = 0; r < n; r += kBlockRows) {
    const Eigen::Index len = std::min(kBlockRows, n - r);
    Mat h = x.middleRows(r, len);
    for (std::size_t l = 0; l < net.size(); ++l) {
      Mat p = affine(h, net[l].w, net[l].b.data());
      if (keep_pre) pre[l].middleRows(r, len) = p;
      h = act_last || l + 1 < net.size() ? activate(p) : std::move(p);
    }
    out.middleRows(r, len) = h;
  }
  for (std::size_t l = 0; l < pre.size(); ++l) {
    if (act_last || l + 1 < net.size()) trace_signs(pre[l]);
  }
  if (cache) cache->input = x;
  return out;
}

Mat mlp_backward(const Mlp& net, const MlpCache& cache, Mat dy, bool act_last, Mlp* grads) {
  for (std::size_t l = net.size(); l-- > 0;) {
    const auto& pre = cache.pre[l];
    const bool act = act_last || l + 1 < net.size();
    if (act) dy.array() *= activation_grad(pre);
    if (grads) {
      auto& g = (*grads)[l];
      if (l == 0) {
        g.w.noalias() += dy.transpose() * cache.input;
      } else {
        g.w.noalias() += dy.transpose() * activate(cache.pre[l - 1]);
      }
      g.b.col(0) += dy.colwise().sum().transpose();
    }
    dy = dy * net[l].w;
  }
  return dy;
}

// ---------------------------------------------------------------------------

CloudBatch make_batch(std::span<const PointCloud> clouds) {
  CloudBatch b;
  Eigen::Index total = 0;
  b.offsets.push_back(0);
  for (const auto& c : clouds) {
    total += c.size();
    b.offsets.push_back(total);
  }
  b.xyz.resize(total, 3);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    b.xyz.middleRows(b.offsets[i], clouds[i].size()) = clouds[i].points();
  }
  return b;
}

CloudBatch make_batch(const Points& cloud) {
  CloudBatch b;
  b.xyz = cloud;
  b.offsets = {0, cloud.rows()};
  return b;
}

namespace {

std::vector<Eigen::Index> compute_neighbors(const Mat& xyz, std::span<const Eigen::Index> offsets, int k) {
  std::vector<Eigen::Index> nb(static_cast<std::size_t>(xyz.rows()) * k);
  std::vector<std::pair<double, Eigen::Index>> cand;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const auto lo = offsets[s], hi = offsets[s + 1];
    if (hi - lo <= k) throw PreconditionError("k-NN features need more than k points per cloud");
    for (Eigen::Index i = lo; i < hi; ++i) {
      cand.clear();
      for (Eigen::Index j = lo; j < hi; ++j) {
        if (j == i) continue;
        cand.emplace_back((xyz.row(i) - xyz.row(j)).squaredNorm(), j);
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      for (int t = 0; t < k; ++t) nb[static_cast<std::size_t>(i) * k + t] = cand[t].second;
    }
  }
  return nb;
}


// Edge convolution over k-NN edges: feature of edge (i, j) is leaky(Wc x_i + Wd (x_j - x_i) + b),
// max over the k neighbours of i. Since leaky is monotone the max is taken on the
// pre-activation, and the per-edge tensor is never materialized:
// pre_ij = x_i (Wc - Wd)^T + b + x_j Wd^T.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat edge_conv_forward(const Dense& layer, const Mat& xyz, const std::vector<Eigen::Index>& nb, int k,
                      ClassifierCache& cc) {
  const Mat wc = layer.w.leftCols(3), wd = layer.w.rightCols(3);
  RowMat center = affine(xyz, wc - wd, layer.b.data());
  const RowMat other = affine(xyz, wd, nullptr);
  const auto n = xyz.rows(), h = layer.out();
  RowMat best(n, h);
  cc.edge_argmax.assign(static_cast<std::size_t>(n * h), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double* brow = best.row(i).data();
    Eigen::Index* arow = cc.edge_argmax.data() + i * h;
    for (int t = 0; t < k; ++t) {
      const auto j = nb[static_cast<std::size_t>(i * k + t)];
      const double* orow = other.row(j).data();
      for (Eigen::Index c = 0; c < h; ++c) {
        if (t == 0 || orow[c] > brow[c]) {
          brow[c] = orow[c];
          arow[c] = j;
        }
      }
    }
  }
  best += center;
  cc.edge_input = xyz;
  cc.edge_pre = best;
  trace_indices(cc.edge_argmax);
  trace_signs(cc.edge_pre);
  return activate(cc.edge_pre);
}

Mat edge_conv_backward(const Dense& layer, const ClassifierCache& cc, Mat dlocal, Dense* grad) {
  dlocal.array() *= activation_grad(cc.edge_pre);
  const Mat& d_center = dlocal;
  const auto n = dlocal.rows(), h = dlocal.cols();
  Mat d_other = Mat::Zero(n, h);
  for (Eigen::Index c = 0; c < h; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d_other(cc.edge_argmax[static_cast<std::size_t>(i * h + c)], c) += d_center(i, c);
    }
  }
  const Mat wc = layer.w.leftCols(3), wd = layer.w.rightCols(3);
  if (grad) {
    grad->w.leftCols(3).noalias() += d_center.transpose() * cc.edge_input;
    grad->w.rightCols(3).noalias() += (d_other - d_center).transpose() * cc.edge_input;
    grad->b.col(0) += d_center.colwise().sum().transpose();
  }
  return d_center * (wc - wd) + d_other * wd;
}

}  // namespace

void attach_neighbors(CloudBatch& batch, int k) {
  require(k >= 1, "attach_neighbors: k must be positive");
  batch.neighbors = compute_neighbors(batch.xyz, batch.offsets, k);
  batch.neighbor_k = k;
}

Mat max_pool(const Mat& x, std::span<const Eigen::Index> offsets, std::vector<Eigen::Index>* argmax) {
  const auto segs = static_cast<Eigen::Index>(offsets.size()) - 1;
  Mat out(segs, x.cols());
  if (argmax) argmax->assign(static_cast<std::size_t>(segs * x.cols()), 0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index s = 0; s < segs; ++s) {
      const auto lo = offsets[s], hi = offsets[s + 1];
      if (hi <= lo) throw PreconditionError("max_pool: empty segment");
      double best = x(lo, c);
      Eigen::Index arg = lo;
      for (Eigen::Index r = lo + 1; r < hi; ++r) {
        if (x(r, c) > best) {
          best = x(r, c);
          arg = r;
        }
      }
      out(s, c) = best;
      if (argmax) (*argmax)[static_cast<std::size_t>(s * x.cols() + c)] = arg;
    }
  }
  if (argmax) trace_indices(*argmax);
  return out;
}

Mat max_pool_backward(const Mat& dpooled, const std::vector<Eigen::Index>& argmax, Eigen::Index rows) {
  Mat dx = Mat::Zero(rows, dpooled.cols());
  for (Eigen::Index s = 0; s < dpooled.rows(); ++s) {
    for (Eigen::Index c = 0; c < dpooled.cols(); ++c) {
      dx(argmax[static_cast<std::size_t>(s * dpooled.cols() + c)], c) += dpooled(s, c);
    }
  }
  return dx;
}

Mat mean_pool(const Mat& x, std::span<const Eigen::Index> offsets) {
  const auto segs = static_cast<Eigen::Index>(offsets.size()) - 1;
  Mat out(segs, x.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const auto lo = offsets[s], n = offsets[s + 1] - lo;
    if (n <= 0) throw PreconditionError("mean_pool: empty segment");
    out.row(s) = x.middleRows(lo, n).colwise().sum() / static_cast<double>(n);
  }
  return out;
}

Mat mean_pool_backward(const Mat& dpooled, std::span<const Eigen::Index> offsets, Eigen::Index rows) {
  Mat dx(rows, dpooled.cols());
  for (Eigen::Index s = 0; s < dpooled.rows(); ++s) {
    const auto lo = offsets[s], n = offsets[s + 1] - lo;
    dx.middleRows(lo, n).rowwise() = dpooled.row(s) / static_cast<double>(n);
  }
  return dx;
}

namespace {

// Sorted distinct rows that won some pooled channel.
std::vector<Eigen::Index> winning_rows(const std::vector<Eigen::Index>& argmax) {
  std::vector<Eigen::Index> live(argmax);
  std::sort(live.begin(), live.end());
  live.erase(std::unique(live.begin(), live.end()), live.end());
  return live;
}

// Backward through a per-point MLP followed by a max pool, given the MLP cache of the
// winning rows only. Other rows receive no gradient.
Mat pooled_backward_live(const Mlp& net, const MlpCache& live_cache, const std::vector<Eigen::Index>& live,
                         const Mat& dpooled, const std::vector<Eigen::Index>& argmax, Eigen::Index rows,
                         bool act_last, Mlp* grads) {
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(rows), -1);
  for (std::size_t i = 0; i < live.size(); ++i) slot[static_cast<std::size_t>(live[i])] = static_cast<Eigen::Index>(i);
  Mat dy = Mat::Zero(static_cast<Eigen::Index>(live.size()), dpooled.cols());
  for (Eigen::Index s = 0; s < dpooled.rows(); ++s) {
    for (Eigen::Index c = 0; c < dpooled.cols(); ++c) {
      dy(slot[static_cast<std::size_t>(argmax[static_cast<std::size_t>(s * dpooled.cols() + c)])], c) += dpooled(s, c);
    }
  }
  const Mat dsub = mlp_backward(net, live_cache, std::move(dy), act_last, grads);
  Mat dx = Mat::Zero(rows, dsub.cols());
  dx(live, Eigen::all) = dsub;
  return dx;
}

Mat pooled_mlp_backward(const Mlp& net, const MlpCache& cache, const Mat& dpooled,
                        const std::vector<Eigen::Index>& argmax, Eigen::Index rows, bool act_last, Mlp* grads) {
  const auto live = winning_rows(argmax);
  MlpCache sub;
  sub.input = cache.input(live, Eigen::all);
  for (const auto& pre : cache.pre) sub.pre.push_back(pre(live, Eigen::all));
  return pooled_backward_live(net, sub, live, dpooled, argmax, rows, act_last, grads);
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder

Encoder make_encoder(int hidden, int latent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int widths[] = {3, hidden, hidden, latent};
  return Encoder{make_mlp(widths, rng)};
}

Mat encoder_forward(const Encoder& enc, const CloudBatch& batch, EncoderCache* cache) {
  // Last per-point layer is linear; the max pool supplies the nonlinearity.
  const Mat feat = mlp_forward(enc.mlp, batch.xyz, false);
  std::vector<Eigen::Index> argmax;
  Mat z = max_pool(feat, batch.offsets, &argmax);
  if (cache) {
    // Only pooled winners carry gradient. Recomputing them alone is cheaper than caching
    // every row, and affine() gives the same values as the full pass.
    cache->live = winning_rows(argmax);
    mlp_forward(enc.mlp, batch.xyz(cache->live, Eigen::all), false, &cache->mlp);
    cache->argmax = std::move(argmax);
    cache->rows = batch.xyz.rows();
  }
  return z;
}

Mat encoder_backward(const Encoder& enc, const EncoderCache& cache, const Mat& dz, Encoder* grads) {
  return pooled_backward_live(enc.mlp, cache.mlp, cache.live, dz, cache.argmax, cache.rows, false,
                              grads ? &grads->mlp : nullptr);
}

Vec encoder_forward(const Encoder& enc, const Points& cloud) {
  return encoder_forward(enc, make_batch(cloud)).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Decoder

Decoder make_decoder(int latent, int hidden, int num_points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int widths[] = {latent, hidden, hidden, 3 * num_points};
  return Decoder{make_mlp(widths, rng)};
}

Mat decoder_forward(const Decoder& dec, const Mat& z, DecoderCache* cache) {
  if (z.cols() != dec.latent_dim()) throw PreconditionError("decoder_forward: latent width mismatch");
  return mlp_forward(dec.mlp, z, false, cache ? &cache->mlp : nullptr);
}

Mat decoder_backward(const Decoder& dec, const DecoderCache& cache, const Mat& dout, Decoder* grads) {
  return mlp_backward(dec.mlp, cache.mlp, dout, false, grads ? &grads->mlp : nullptr);
}

Points decoder_forward(const Decoder& dec, const Vec& z) {
  if (z.size() != dec.latent_dim()) throw PreconditionError("decoder_forward: latent width mismatch");
  return row_to_points(decoder_forward(dec, Mat(z.transpose())), 0);
}

Points row_to_points(const Mat& flat, Eigen::Index row) {
  const auto n = flat.cols() / 3;
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) p(i, c) = flat(row, 3 * i + c);
  }
  return p;
}

Eigen::RowVectorXd points_to_row(const Points& p) {
  Eigen::RowVectorXd r(p.rows() * 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int c = 0; c < 3; ++c) r(3 * i + c) = p(i, c);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Classifiers

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::A: return "A";
    case Arch::B: return "B";
    case Arch::C: return "C";
  }
  return "?";
}

Arch arch_from_name(const std::string& s) {
  if (s == "A") return Arch::A;
  if (s == "B") return Arch::B;
  if (s == "C") return Arch::C;
  throw PreconditionError("unknown classifier architecture: " + s);
}

Classifier make_classifier(Arch arch, int hidden, int num_classes, std::uint64_t seed, int k) {
  require(num_classes >= 2, "make_classifier: need at least two classes");
  std::mt19937_64 rng(seed);
  Classifier c;
  c.arch = arch;
  c.num_classes = num_classes;
  c.k = k;
  if (arch == Arch::B) {
    const int edge[] = {6, hidden};
    const int point[] = {hidden, hidden};
    c.edge = make_mlp(edge, rng);
    c.point = make_mlp(point, rng);
  } else {
    const int point[] = {3, hidden, hidden};
    c.point = make_mlp(point, rng);
  }
  const int head[] = {hidden, hidden, num_classes};
  c.head = make_mlp(head, rng);
  return c;
}

Classifier zeros_like(const Classifier& c) {
  Classifier z = c;
  z.edge = zeros_like(c.edge);
  z.point = zeros_like(c.point);
  z.head = zeros_like(c.head);
  return z;
}

Mat classifier_forward(const Classifier& clf, const CloudBatch& batch, ClassifierCache* cache) {
  ClassifierCache local;
  ClassifierCache& cc = cache ? *cache : local;
  cc.rows = batch.xyz.rows();
  cc.offsets = batch.offsets;
  Mat per_point;
  if (clf.arch == Arch::B) {
    const int k = clf.k;
    if (batch.neighbor_k == k && !batch.neighbors.empty()) {
      cc.neighbors = batch.neighbors;
    } else {
      cc.neighbors = compute_neighbors(batch.xyz, batch.offsets, k);
    }
    trace_indices(cc.neighbors);
    const Mat local_feat = edge_conv_forward(clf.edge.front(), batch.xyz, cc.neighbors, k, cc);
    per_point = mlp_forward(clf.point, local_feat, true, &cc.point);
  } else {
    per_point = mlp_forward(clf.point, batch.xyz, true, &cc.point);
  }
  Mat global;
  if (clf.arch == Arch::C) {
    global = mean_pool(per_point, batch.offsets);
  } else {
    global = max_pool(per_point, batch.offsets, &cc.pool_argmax);
  }
  return mlp_forward(clf.head, global, false, &cc.head);
}

Mat classifier_backward(const Classifier& clf, const ClassifierCache& cc, const Mat& dlogits, Classifier* grads) {
  Mat dglobal = mlp_backward(clf.head, cc.head, dlogits, false, grads ? &grads->head : nullptr);
  Mlp* point_grads = grads ? &grads->point : nullptr;
  if (clf.arch == Arch::C) {
    return mlp_backward(clf.point, cc.point, mean_pool_backward(dglobal, cc.offsets, cc.rows), true, point_grads);
  }
  Mat dlocal = pooled_mlp_backward(clf.point, cc.point, dglobal, cc.pool_argmax, cc.rows, true, point_grads);
  if (clf.arch == Arch::A) return dlocal;
  return edge_conv_backward(clf.edge.front(), cc, std::move(dlocal), grads ? &grads->edge.front() : nullptr);
}

Vec classifier_forward(const Classifier& clf, const Points& cloud) {
  return classifier_forward(clf, make_batch(cloud)).row(0).transpose();
}

int predict(const Classifier& clf, const Points& cloud) {
  Eigen::Index arg = 0;
  classifier_forward(clf, cloud).maxCoeff(&arg);
  return static_cast<int>(arg);
}

// ---------------------------------------------------------------------------
// Losses

CrossEntropy cross_entropy(const Vec& logits, int label) {
  require(label >= 0 && label < logits.size(), "cross_entropy: label out of range");
  const double mx = logits.maxCoeff();
  const Vec e = (logits.array() - mx).exp().matrix();
  const double sum = e.sum();
  CrossEntropy out;
  out.loss = std::log(sum) - (logits(label) - mx);
  out.grad = e / sum;
  out.grad(label) -= 1.0;
  return out;
}

CrossEntropy margin_loss(const Vec& logits, int label, double kappa) {
  require(label >= 0 && label < logits.size(), "margin_loss: label out of range");
  Eigen::Index other = -1;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (j == label) continue;
    if (other < 0 || logits(j) > logits(other)) other = j;
  }
  CrossEntropy out;
  out.grad = Vec::Zero(logits.size());
  const double m = logits(label) - logits(other);
  if (m > -kappa) {
    out.loss = m;
    out.grad(label) = 1.0;
    out.grad(other) = -1.0;
  } else {
    out.loss = -kappa;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ParamRef> parameters(Encoder& e) {
  std::vector<ParamRef> out;
  append_params(out, e.mlp, "enc");
  return out;
}

std::vector<ParamRef> parameters(Decoder& d) {
  std::vector<ParamRef> out;
  append_params(out, d.mlp, "dec");
  return out;
}

std::vector<ParamRef> parameters(Classifier& c) {
  std::vector<ParamRef> out;
  append_params(out, c.edge, "edge");
  append_params(out, c.point, "point");
  append_params(out, c.head, "head");
  return out;
}

void Adam::step(std::span<Mat* const> params, std::span<const Mat* const> grads) {
  require(params.size() == grads.size(), "Adam::step: params/grads size mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  require(m_.size() == params.size(), "Adam::step: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = *grads[i];
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    params[i]->array() -= opt_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(const Vec&)>& f, const Vec& analytic, const Vec& x0,
                           double step, double tol, bool skip_decision_changes) {
  require(analytic.size() == x0.size(), "grad_check: gradient size mismatch");
  require(step > 0.0, "grad_check: step must be positive");
  auto eval = [&](const Vec& x, std::uint64_t* hash) {
    double v;
    if (hash) {
      DecisionTrace trace;
      v = f(x);
      *hash = trace.hash();
    } else {
      v = f(x);
    }
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return v;
  };
  std::uint64_t base_hash = 0;
  eval(x0, skip_decision_changes ? &base_hash : nullptr);

  Vec numeric(x0.size());
  std::vector<bool> skip(static_cast<std::size_t>(x0.size()), false);
  GradCheckReport rep;
  rep.coordinates = x0.size();
  Vec x = x0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    std::uint64_t hp = 0, hm = 0;
    x(i) = x0(i) + step;
    const double fp = eval(x, skip_decision_changes ? &hp : nullptr);
    x(i) = x0(i) - step;
    const double fm = eval(x, skip_decision_changes ? &hm : nullptr);
    x(i) = x0(i);
    numeric(i) = (fp - fm) / (2.0 * step);
    if (skip_decision_changes && (hp != base_hash || hm != base_hash)) {
      skip[static_cast<std::size_t>(i)] = true;
      ++rep.skipped;
    }
  }
  const double scale = numeric.size() ? numeric.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    if (skip[static_cast<std::size_t>(i)]) continue;
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), 1e-6 * scale, 1e-12});
    const double rel = std::abs(analytic(i) - numeric(i)) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
  }
  rep.passed = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace cosa::nn
