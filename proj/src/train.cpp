#include "cosa/train.hpp"

#include <cmath>

namespace cosa::nn {

namespace {

std::vector<CloudBatch> make_chunks(const std::vector<PointCloud>& clouds, int chunk, int knn) {
  require(chunk >= 1, "chunk size must be positive");
  std::vector<CloudBatch> out;
  for (std::size_t lo = 0; lo < clouds.size(); lo += static_cast<std::size_t>(chunk)) {
    const auto hi = std::min(clouds.size(), lo + static_cast<std::size_t>(chunk));
    out.push_back(make_batch(std::span<const PointCloud>(clouds.data() + lo, hi - lo)));
    if (knn > 0) attach_neighbors(out.back(), knn);
  }
  return out;
}

template <class Net>
void adam_step(Adam& opt, Net& net, Net& grads) {
  auto p = parameters(net);
  auto g = parameters(grads);
  std::vector<Mat*> pv;
  std::vector<const Mat*> gv;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pv.push_back(p[i].value);
    gv.push_back(g[i].value);
  }
  opt.step(pv, gv);
}

}  // namespace

double reconstruction_cd(const AutoEncoder& ae, const std::vector<PointCloud>& clouds) {
  require(!clouds.empty(), "reconstruction_cd: empty set");
  double total = 0.0;
  for (const auto& c : clouds) {
    total += chamfer(c.points(), decoder_forward(ae.decoder, encoder_forward(ae.encoder, c.points())));
  }
  return total / static_cast<double>(clouds.size());
}

double accuracy(const Classifier& clf, const std::vector<PointCloud>& clouds) {
  require(!clouds.empty(), "accuracy: empty set");
  int correct = 0;
  for (const auto& c : clouds) {
    if (predict(clf, c.points()) == c.label().value_or(-1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(clouds.size());
}

std::pair<AutoEncoder, TrainReport> train_autoencoder(const std::vector<PointCloud>& train,
                                                      const std::vector<PointCloud>& test,
                                                      const AutoEncoderHyper& hyper, std::uint64_t seed) {
  require(!train.empty(), "train_autoencoder: empty train split");
  require(hyper.epochs >= 1, "train_autoencoder: epochs must be >= 1");
  const int n = static_cast<int>(train.front().size());
  for (const auto& c : train) require(c.size() == n, "train_autoencoder: all clouds need the same n");

  AutoEncoder ae{make_encoder(hyper.hidden, hyper.latent, mix_seed(seed, 0, 1, 0)),
                 make_decoder(hyper.latent, hyper.hidden, n, mix_seed(seed, 0, 2, 0))};
  Adam enc_opt({hyper.lr}), dec_opt({hyper.lr});
  const auto chunks = make_chunks(train, hyper.chunk, 0);
  const double inv_total = 1.0 / static_cast<double>(train.size());

  TrainReport rep;
  rep.seed = seed;
  EncoderCache ec;
  DecoderCache dc;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Encoder enc_grad{zeros_like(ae.encoder.mlp)};
    Decoder dec_grad{zeros_like(ae.decoder.mlp)};
    double loss = 0.0;
    for (const auto& batch : chunks) {
      const Mat z = encoder_forward(ae.encoder, batch, &ec);
      const Mat out = decoder_forward(ae.decoder, z, &dc);
      Mat dout(out.rows(), out.cols());
      for (Eigen::Index b = 0; b < batch.num_clouds(); ++b) {
        const Points target = batch.xyz.middleRows(batch.offsets[b], batch.offsets[b + 1] - batch.offsets[b]);
        const auto g = chamfer_grad(target, row_to_points(out, b));
        loss += g.value * inv_total;
        dout.row(b) = points_to_row(g.grad_q) * inv_total;
      }
      const Mat dz = decoder_backward(ae.decoder, dc, dout, &dec_grad);
      encoder_backward(ae.encoder, ec, dz, &enc_grad);
    }
    rep.loss_trace.push_back(loss);
    rep.epochs = epoch + 1;
    if (!std::isfinite(loss)) throw TrainingDiverged("autoencoder loss became non-finite", rep);
    adam_step(enc_opt, ae.encoder, enc_grad);
    adam_step(dec_opt, ae.decoder, dec_grad);
    if (!all_finite(ae.encoder.mlp) || !all_finite(ae.decoder.mlp)) {
      throw TrainingDiverged("autoencoder parameters became non-finite", rep);
    }
    if (hyper.eval_every > 0 && !test.empty() && (epoch + 1) % hyper.eval_every == 0) {
      rep.metric_trace.emplace_back(epoch + 1, reconstruction_cd(ae, test));
    }
  }
  rep.final_loss = rep.loss_trace.back();
  rep.metric = test.empty() ? reconstruction_cd(ae, train) : reconstruction_cd(ae, test);
  return {std::move(ae), std::move(rep)};
}

std::pair<AutoEncoder, TrainReport> train_autoencoder(const DatasetManifest& manifest,
                                                      const AutoEncoderHyper& hyper, std::uint64_t seed) {
  return train_autoencoder(load_split(manifest, manifest.train), load_split(manifest, manifest.test), hyper, seed);
}

std::pair<Classifier, TrainReport> train_classifier(Arch arch, int num_classes,
                                                    const std::vector<PointCloud>& train,
                                                    const std::vector<PointCloud>& test,
                                                    const ClassifierHyper& hyper, std::uint64_t seed) {
  require(!train.empty(), "train_classifier: empty train split");
  require(hyper.epochs >= 1, "train_classifier: epochs must be >= 1");
  for (const auto& c : train) {
    require(c.label().has_value() && *c.label() >= 0 && *c.label() < num_classes,
            "train_classifier: every training cloud needs a label in range");
  }
  Classifier clf = make_classifier(arch, hyper.hidden, num_classes, mix_seed(seed, 0, 3, 0), hyper.k);
  Adam opt({hyper.lr});
  const auto chunks = make_chunks(train, hyper.chunk, arch == Arch::B ? hyper.k : 0);
  const double inv_total = 1.0 / static_cast<double>(train.size());

  TrainReport rep;
  rep.seed = seed;
  std::size_t base = 0;
  ClassifierCache cache;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Classifier grads = zeros_like(clf);
    double loss = 0.0;
    base = 0;
    for (const auto& batch : chunks) {
      const Mat logits = classifier_forward(clf, batch, &cache);
      Mat dlogits(logits.rows(), logits.cols());
      for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        const auto ce = cross_entropy(logits.row(b).transpose(), *train[base + static_cast<std::size_t>(b)].label());
        loss += ce.loss * inv_total;
        dlogits.row(b) = ce.grad.transpose() * inv_total;
      }
      classifier_backward(clf, cache, dlogits, &grads);
      base += static_cast<std::size_t>(logits.rows());
    }
    rep.loss_trace.push_back(loss);
    rep.epochs = epoch + 1;
    if (!std::isfinite(loss)) throw TrainingDiverged("classifier loss became non-finite", rep);
    adam_step(opt, clf, grads);
    if (!all_finite(clf.edge) || !all_finite(clf.point) || !all_finite(clf.head)) {
      throw TrainingDiverged("classifier parameters became non-finite", rep);
    }
    if (hyper.eval_every > 0 && !test.empty() && (epoch + 1) % hyper.eval_every == 0) {
      rep.metric_trace.emplace_back(epoch + 1, accuracy(clf, test));
    }
  }
  rep.final_loss = rep.loss_trace.back();
  rep.metric = test.empty() ? accuracy(clf, train) : accuracy(clf, test);
  return {std::move(clf), std::move(rep)};
}

std::pair<Classifier, TrainReport> train_classifier(Arch arch, const DatasetManifest& manifest,
                                                    const ClassifierHyper& hyper, std::uint64_t seed) {
  return train_classifier(arch, manifest.num_classes, load_split(manifest, manifest.train),
                          load_split(manifest, manifest.test), hyper, seed);
}

}  // namespace cosa::nn
