#pragma once

#include "cosa/error.hpp"
#include "cosa/nn.hpp"
#include "cosa/synthdata.hpp"

#include <cstdint>
#include <vector>

namespace cosa::nn {

struct TrainReport {
  double final_loss = 0.0;
  // Held-out reconstruction CD for the autoencoder, held-out accuracy in [0,1] for classifiers.
  double metric = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
  // (epoch, held-out metric) every eval_every epochs when requested.
  std::vector<std::pair<int, double>> metric_trace;
};

// Non-finite loss during training. Carries the report up to the failing epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainReport report)
      : NumericError(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

struct AutoEncoder {
  Encoder encoder;
  Decoder decoder;
};

struct AutoEncoderHyper {
  int epochs = 1500;
  double lr = 1e-3;
  int hidden = 64;
  int latent = 32;
  // Gradient accumulation chunk; the update is still full-batch.
  int chunk = 100;
  int eval_every = 0;
};

struct ClassifierHyper {
  int epochs = 300;
  double lr = 1e-3;
  int hidden = 64;
  int k = 8;
  int chunk = 100;
  int eval_every = 0;
};

// Full-batch Adam on mean chamfer(P, Dec(Enc(P))).
std::pair<AutoEncoder, TrainReport> train_autoencoder(const std::vector<PointCloud>& train,
                                                      const std::vector<PointCloud>& test,
                                                      const AutoEncoderHyper& hyper, std::uint64_t seed);
std::pair<AutoEncoder, TrainReport> train_autoencoder(const DatasetManifest& manifest,
                                                      const AutoEncoderHyper& hyper, std::uint64_t seed);

// Full-batch Adam on mean cross-entropy.
std::pair<Classifier, TrainReport> train_classifier(Arch arch, int num_classes,
                                                    const std::vector<PointCloud>& train,
                                                    const std::vector<PointCloud>& test,
                                                    const ClassifierHyper& hyper, std::uint64_t seed);
std::pair<Classifier, TrainReport> train_classifier(Arch arch, const DatasetManifest& manifest,
                                                    const ClassifierHyper& hyper, std::uint64_t seed);

double reconstruction_cd(const AutoEncoder& ae, const std::vector<PointCloud>& clouds);
double accuracy(const Classifier& clf, const std::vector<PointCloud>& clouds);

}  // namespace cosa::nn
