#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csnn/data.hpp"
#include "csnn/model.hpp"
#include "csnn/rng.hpp"

namespace csnn {

enum class ScheduleKind { linear_epoch, clamped_ramp, fixed };

// Shape-parameter schedule over epochs. linear_epoch: alpha = e / total.
// clamped_ramp: alpha = min(1, max(0, (e - offset) / span)). fixed: constant.
struct AlphaSchedule {
  ScheduleKind kind = ScheduleKind::linear_epoch;
  double offset = 0.0;  // clamped_ramp
  double span = 1.0;    // clamped_ramp
  double value = 1.0;   // fixed
};

double alpha_at(const AlphaSchedule& schedule, std::size_t epoch, std::size_t total);

enum class OptKind { sgd, adam };

struct OptimizerCfg {
  OptKind kind = OptKind::adam;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainPlan {
  std::size_t epochs_pretrain = 0;
  std::size_t epochs_anneal = 0;
  AlphaSchedule schedule;
  OptimizerCfg optimizer;
  double radius_init = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool use_bias = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double alpha = 0.0;
  double train_error = 0.0;
  std::optional<double> val_error;
  double mean_loss = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
};

// CSV columns: epoch,alpha,train_error,val_error,mean_loss (val_error empty
// when absent).
void write_trace_csv(const TrainTrace& trace, const std::string& path);

// Decoupled weight decay: p <- p (1 - lr wd) - lr g. decay is applied to W
// and the head only, never to r or b.
void sgd_step(double* p, const double* g, std::size_t n, const OptimizerCfg& cfg, bool decay);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

void adam_step(double* p, const double* g, std::size_t n, const OptimizerCfg& cfg,
               AdamState& state, bool decay);

// Pretrained alpha = 0 parameters that seed annealing.
struct SeedParams {
  StandardLayer hidden;
  Matrix head;  // C x K
};

SeedParams init_params(std::size_t d, std::size_t k, std::size_t c, Rng& rng);

// Algorithm step 1: train the regular network L relu(2 W v + b) with softmax
// cross-entropy on already-normalized features. Zero epochs returns the
// untouched initialization. Single-class data trains with a warning.
SeedParams pretrain_standard(const Dataset& train_v, std::size_t num_classes,
                             std::size_t hidden, const TrainPlan& plan, Rng& rng,
                             TrainTrace* trace = nullptr);

// Observer invoked after each annealing epoch with a view of the current
// model; must not mutate anything that feeds training.
using EpochHook = std::function<void(std::size_t epoch, double alpha, const CsnnModel& m)>;

// Algorithm steps 4-7: per epoch set alpha from the schedule and run one
// minibatch pass updating (W, L, b, r); r starts at radius_init everywhere.
// Throws NumericError on a non-finite loss naming the epoch and learning rate.
std::pair<CsnnModel, TrainTrace> anneal_csnn(const Dataset& train_v, const Dataset* val_v,
                                             const SeedParams& seed, const Normalizer& norm,
                                             std::size_t num_classes, const TrainPlan& plan,
                                             Rng& rng, const EpochHook* hook = nullptr);

// Baseline: same two-layer architecture with an RBF hidden layer, trained
// directly (centers, log beta, head) with no alpha schedule for
// epochs_pretrain + epochs_anneal epochs.
std::pair<CsnnModel, TrainTrace> train_rbf_baseline(const Dataset& train_v,
                                                    const Dataset* val_v,
                                                    const Normalizer& norm,
                                                    std::size_t num_classes,
                                                    const TrainPlan& plan, Rng& rng,
                                                    std::size_t hidden);

// Mean softmax cross-entropy of the assembled model over a dataset of raw
// inputs; used by gradient checks and reporting.
double model_loss(const CsnnModel& m, const Dataset& d);

struct ModelGrads {
  Matrix W;
  Vector b;
  Vector r;
  Matrix head;
};

// Analytic gradient of model_loss w.r.t. every parameter block of a CSN
// hidden layer. Backbone-free csnn models only.
ModelGrads model_loss_grads(const CsnnModel& m, const Dataset& d);

enum class ModelKind { csnn, standard, rbf };

struct ModelSpec {
  ModelKind kind = ModelKind::csnn;
  std::size_t hidden = 128;          // K
  std::size_t backbone_hidden = 0;   // 0 = identity backbone
};

struct TrainOutput {
  CsnnModel model;
  TrainTrace trace;
  SeedParams seed;        // alpha = 0 parameters (csnn kind only)
  Normalizer normalizer;
};

// Full pipeline: optional backbone stage, normalizer fit on frozen features,
// pretraining, then annealing (or the requested baseline).
TrainOutput train_model(const Dataset& train_raw, const Dataset* val_raw,
                        const ModelSpec& spec, const TrainPlan& plan,
                        const EpochHook* hook = nullptr);

// Post-hoc selector over the trace: largest alpha whose validation error is
// <= the validation error at alpha = 0. Returns the epoch index into the
// trace, or nullopt when the trace has no alpha = 0 record.
std::optional<std::size_t> select_alpha_epoch(const TrainTrace& trace);

}  // namespace csnn
