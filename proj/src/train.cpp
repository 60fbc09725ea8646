#include "csnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "csnn/io.hpp"
#include "csnn/kernels.hpp"

namespace csnn {

double alpha_at(const AlphaSchedule& schedule, std::size_t epoch, std::size_t total) {
  switch (schedule.kind) {
    case ScheduleKind::linear_epoch:
      return total == 0 ? 1.0 : static_cast<double>(epoch) / static_cast<double>(total);
    case ScheduleKind::clamped_ramp: {
      const double raw = (static_cast<double>(epoch) - schedule.offset) / schedule.span;
      return std::min(1.0, std::max(0.0, raw));
    }
    case ScheduleKind::fixed:
      return schedule.value;
  }
  return 0.0;
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,alpha,train_error,val_error,mean_loss\n";
  for (const auto& rec : trace.epochs) {
    out << rec.epoch << "," << rec.alpha << "," << rec.train_error << ",";
    if (rec.val_error) out << *rec.val_error;
    out << "," << rec.mean_loss << "\n";
  }
  atomic_write_file(path, out.str());
}

void sgd_step(double* p, const double* g, std::size_t n, const OptimizerCfg& cfg, bool decay) {
  const double shrink = decay ? 1.0 - cfg.learning_rate * cfg.weight_decay : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = p[i] * shrink - cfg.learning_rate * g[i];
  }
}

void adam_step(double* p, const double* g, std::size_t n, const OptimizerCfg& cfg,
               AdamState& state, bool decay) {
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.t = 0;
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double shrink = decay ? 1.0 - cfg.learning_rate * cfg.weight_decay : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p[i] = p[i] * shrink - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

SeedParams init_params(std::size_t d, std::size_t k, std::size_t c, Rng& rng) {
  SeedParams seed;
  seed.hidden.W = Matrix(k, d);
  // the 2W convention doubles the effective weight, so halve the usual scale
  const double w_std = 0.5 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < seed.hidden.W.size(); ++i) {
    seed.hidden.W.data()[i] = rng.normal(0.0, w_std);
  }
  seed.hidden.b.assign(k, 0.0);
  seed.head = Matrix(c, k);
  const double l_std = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::size_t i = 0; i < seed.head.size(); ++i) {
    seed.head.data()[i] = rng.normal(0.0, l_std);
  }
  return seed;
}

namespace {

struct ParamState {
  AdamState W, b, r, head;
};

void step_tensor(double* p, double* g, std::size_t n, const OptimizerCfg& cfg,
                 AdamState& state, bool decay) {
  if (cfg.kind == OptKind::sgd) {
    sgd_step(p, g, n, cfg, decay);
  } else {
    adam_step(p, g, n, cfg, state, decay);
  }
}

// Forward + cross-entropy + gradient accumulation for one sample in feature
// space. Returns the sample loss; gradients are scaled by `scale`.
double accumulate_sample(const CsnLayer& layer, const Matrix& head, const Vector& v,
                         int label, double scale, Matrix& gW, Vector& gb, Vector& gr,
                         Matrix& gL, bool want_grads) {
  const std::size_t c = head.rows();
  const Vector h = layer_forward(v, layer);
  Vector z(c);
  kernels::matvec(head.data(), c, head.cols(), h.data(), z.data());
  const double z_max = *std::max_element(z.begin(), z.end());
  double sum_exp = 0.0;
  for (double zi : z) sum_exp += std::exp(zi - z_max);
  const double lse = z_max + std::log(sum_exp);
  const double loss = lse - z[static_cast<std::size_t>(label)];
  if (!want_grads) return loss;

  Vector dz(c);
  for (std::size_t i = 0; i < c; ++i) dz[i] = std::exp(z[i] - lse);
  dz[static_cast<std::size_t>(label)] -= 1.0;

  Vector dh(head.cols(), 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    kernels::axpy(scale * dz[i], h.data(), gL.row(i), head.cols());
    kernels::axpy(dz[i], head.row(i), dh.data(), head.cols());
  }
  layer_backward_into(v, layer, dh, scale, gW, gb, gr, nullptr);
  return loss;
}

double feature_error(const CsnLayer& layer, const Matrix& head, const Dataset& dv) {
  std::size_t wrong = 0;
  Vector z(head.rows());
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const Vector h = layer_forward(dv.X[i], layer);
    kernels::matvec(head.data(), head.rows(), head.cols(), h.data(), z.data());
    std::size_t pred = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[pred]) pred = j;
    }
    if (pred != static_cast<std::size_t>(dv.y[i])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(dv.size());
}

CsnnModel assemble(const Normalizer& norm, const CsnLayer& layer, const Matrix& head,
                   std::size_t num_classes) {
  CsnnModel m;
  m.normalizer = norm;
  m.hidden = layer;
  m.head = head;
  m.num_classes = num_classes;
  return m;
}

// Shared minibatch loop for pretraining (schedule == nullptr, alpha pinned at
// layer.alpha) and annealing. Appends one record per epoch to trace.
void run_epochs(CsnLayer& layer, Matrix& head, const Dataset& train_v, const Dataset* val_v,
                std::size_t epochs, const AlphaSchedule* schedule, const TrainPlan& plan,
                Rng& rng, TrainTrace* trace, const Normalizer* norm,
                const EpochHook* hook) {
  const std::size_t n = train_v.size();
  const std::size_t bs = std::max<std::size_t>(plan.batch_size, 1);
  ParamState opt;
  Matrix gW(layer.W.rows(), layer.W.cols());
  Vector gb(layer.b.size());
  Vector gr(layer.r.size());
  Matrix gL(head.rows(), head.cols());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    if (schedule != nullptr) layer.alpha = alpha_at(*schedule, epoch, epochs);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      const double scale = 1.0 / static_cast<double>(count);
      gW.fill(0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      std::fill(gr.begin(), gr.end(), 0.0);
      gL.fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = order[start + k];
        batch_loss += accumulate_sample(layer, head, train_v.X[i], train_v.y[i], scale, gW,
                                        gb, gr, gL, true);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training aborted: non-finite loss at epoch " +
                           std::to_string(epoch) + " (learning rate " +
                           std::to_string(plan.optimizer.learning_rate) + ")");
      }
      step_tensor(layer.W.data(), gW.data(), gW.size(), plan.optimizer, opt.W, true);
      if (plan.use_bias) {
        step_tensor(layer.b.data(), gb.data(), gb.size(), plan.optimizer, opt.b, false);
      }
      step_tensor(layer.r.data(), gr.data(), gr.size(), plan.optimizer, opt.r, false);
      step_tensor(head.data(), gL.data(), gL.size(), plan.optimizer, opt.head, true);
      loss_sum += batch_loss;
      ++batches;
    }
    if (trace != nullptr) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.alpha = layer.alpha;
      rec.train_error = feature_error(layer, head, train_v);
      if (val_v != nullptr) rec.val_error = feature_error(layer, head, *val_v);
      rec.mean_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
      trace->epochs.push_back(rec);
    }
    if (hook != nullptr && *hook && norm != nullptr) {
      (*hook)(epoch, layer.alpha, assemble(*norm, layer, head, head.rows()));
    }
  }
}

}  // namespace

SeedParams pretrain_standard(const Dataset& train_v, std::size_t num_classes,
                             std::size_t hidden, const TrainPlan& plan, Rng& rng,
                             TrainTrace* trace) {
  if (train_v.size() == 0) throw ConfigError("pretrain_standard: empty dataset");
  bool single_class = true;
  for (int label : train_v.y) {
    if (label != train_v.y.front()) {
      single_class = false;
      break;
    }
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ConfigError("pretrain_standard: label " + std::to_string(label) +
                        " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  if (single_class) {
    std::fprintf(stderr, "csnn: pretrain_standard: dataset has a single class\n");
  }
  SeedParams seed = init_params(train_v.dim(), hidden, num_classes, rng);
  CsnLayer layer;
  layer.W = seed.hidden.W;
  layer.b = seed.hidden.b;
  layer.r = Vector(hidden, plan.radius_init);
  layer.alpha = 0.0;  // a CSN layer at alpha = 0 is exactly relu(2Wv + b)
  Matrix head = seed.head;
  run_epochs(layer, head, train_v, nullptr, plan.epochs_pretrain, nullptr, plan, rng, trace,
             nullptr, nullptr);
  seed.hidden.W = layer.W;
  seed.hidden.b = layer.b;
  seed.head = head;
  return seed;
}

std::pair<CsnnModel, TrainTrace> anneal_csnn(const Dataset& train_v, const Dataset* val_v,
                                             const SeedParams& seed, const Normalizer& norm,
                                             std::size_t num_classes, const TrainPlan& plan,
                                             Rng& rng, const EpochHook* hook) {
  CsnLayer layer;
  layer.W = seed.hidden.W;
  layer.b = seed.hidden.b;
  layer.r = Vector(seed.hidden.W.rows(), plan.radius_init);
  layer.alpha = 0.0;
  Matrix head = seed.head;
  TrainTrace trace;
  run_epochs(layer, head, train_v, val_v, plan.epochs_anneal, &plan.schedule, plan, rng,
             &trace, &norm, hook);
  CsnnModel m = assemble(norm, layer, head, num_classes);
  return {std::move(m), std::move(trace)};
}

// ---------------------------------------------------------------------------
// RBF baseline
// ---------------------------------------------------------------------------

namespace {

double rbf_accumulate_sample(const RbfLayer& layer, const Matrix& head, const Vector& v,
                             int label, double scale, Matrix& gW, Vector& gLogBeta,
                             Matrix& gL) {
  const std::size_t k = layer.W.rows();
  const std::size_t d = layer.W.cols();
  const std::size_t c = head.rows();
  Vector h(k), dist_sq(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double* w = layer.W.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dj = v[j] - w[j];
      s += dj * dj;
    }
    dist_sq[i] = s;
    h[i] = std::exp(-std::exp(layer.log_beta[i]) * s);
  }
  Vector z(c);
  kernels::matvec(head.data(), c, head.cols(), h.data(), z.data());
  const double z_max = *std::max_element(z.begin(), z.end());
  double sum_exp = 0.0;
  for (double zi : z) sum_exp += std::exp(zi - z_max);
  const double lse = z_max + std::log(sum_exp);
  const double loss = lse - z[static_cast<std::size_t>(label)];

  Vector dz(c);
  for (std::size_t i = 0; i < c; ++i) dz[i] = std::exp(z[i] - lse);
  dz[static_cast<std::size_t>(label)] -= 1.0;
  Vector dh(k, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    kernels::axpy(scale * dz[i], h.data(), gL.row(i), k);
    kernels::axpy(dz[i], head.row(i), dh.data(), k);
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (dh[i] == 0.0) continue;
    const double beta = std::exp(layer.log_beta[i]);
    const double u = scale * dh[i] * h[i];
    // d h_i / d w_i = 2 beta (v - w_i) h_i
    kernels::axpy(2.0 * beta * u, v.data(), gW.row(i), d);
    kernels::axpy(-2.0 * beta * u, layer.W.row(i), gW.row(i), d);
    // d h_i / d log beta_i = -beta dist_sq h_i
    gLogBeta[i] += -beta * dist_sq[i] * u;
  }
  return loss;
}

double rbf_feature_error(const RbfLayer& layer, const Matrix& head, const Dataset& dv) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const Vector h = rbf_forward(dv.X[i], layer);
    const Vector z = matvec(head, h);
    std::size_t pred = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[pred]) pred = j;
    }
    if (pred != static_cast<std::size_t>(dv.y[i])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(dv.size());
}

}  // namespace

std::pair<CsnnModel, TrainTrace> train_rbf_baseline(const Dataset& train_v,
                                                    const Dataset* val_v,
                                                    const Normalizer& norm,
                                                    std::size_t num_classes,
                                                    const TrainPlan& plan, Rng& rng,
                                                    std::size_t hidden) {
  const std::size_t n = train_v.size();
  if (n == 0) throw ConfigError("train_rbf_baseline: empty dataset");
  const std::size_t d = train_v.dim();

  RbfLayer layer;
  layer.W = Matrix(hidden, d);
  for (std::size_t i = 0; i < hidden; ++i) {
    // centers seeded from random training points, classic RBF initialization
    const std::size_t pick = rng.below(n);
    std::copy(train_v.X[pick].begin(), train_v.X[pick].end(), layer.W.row(i));
  }
  layer.log_beta.assign(hidden, 0.0);
  Matrix head(num_classes, hidden);
  const double l_std = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < head.size(); ++i) head.data()[i] = rng.normal(0.0, l_std);

  const std::size_t epochs = plan.epochs_pretrain + plan.epochs_anneal;
  const std::size_t bs = std::max<std::size_t>(plan.batch_size, 1);
  AdamState opt_w, opt_beta, opt_head;
  Matrix gW(hidden, d);
  Vector gLogBeta(hidden);
  Matrix gL(num_classes, hidden);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainTrace trace;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      const double scale = 1.0 / static_cast<double>(count);
      gW.fill(0.0);
      std::fill(gLogBeta.begin(), gLogBeta.end(), 0.0);
      gL.fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t i = order[start + j];
        batch_loss += rbf_accumulate_sample(layer, head, train_v.X[i], train_v.y[i], scale,
                                            gW, gLogBeta, gL);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training aborted: non-finite loss at epoch " +
                           std::to_string(epoch) + " (learning rate " +
                           std::to_string(plan.optimizer.learning_rate) + ")");
      }
      step_tensor(layer.W.data(), gW.data(), gW.size(), plan.optimizer, opt_w, true);
      step_tensor(layer.log_beta.data(), gLogBeta.data(), gLogBeta.size(), plan.optimizer,
                  opt_beta, false);
      step_tensor(head.data(), gL.data(), gL.size(), plan.optimizer, opt_head, true);
      loss_sum += batch_loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = 1.0;  // the RBF layer is the alpha = 1 analogue, no schedule
    rec.train_error = rbf_feature_error(layer, head, train_v);
    if (val_v != nullptr) rec.val_error = rbf_feature_error(layer, head, *val_v);
    rec.mean_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    trace.epochs.push_back(rec);
  }

  CsnnModel m;
  m.normalizer = norm;
  m.hidden = layer;
  m.head = head;
  m.num_classes = num_classes;
  return {std::move(m), std::move(trace)};
}

// ---------------------------------------------------------------------------
// loss and gradient probes
// ---------------------------------------------------------------------------

double model_loss(const CsnnModel& m, const Dataset& d) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector z = raw_outputs(m, d.X[i]);
    const double z_max = *std::max_element(z.begin(), z.end());
    double sum_exp = 0.0;
    for (double zi : z) sum_exp += std::exp(zi - z_max);
    total += z_max + std::log(sum_exp) - z[static_cast<std::size_t>(d.y[i])];
  }
  return total / static_cast<double>(d.size());
}

ModelGrads model_loss_grads(const CsnnModel& m, const Dataset& d) {
  const auto* layer = std::get_if<CsnLayer>(&m.hidden);
  if (layer == nullptr || m.backbone) {
    throw ConfigError("model_loss_grads: backbone-free csnn models only");
  }
  ModelGrads g;
  g.W = Matrix(layer->W.rows(), layer->W.cols());
  g.b.assign(layer->b.size(), 0.0);
  g.r.assign(layer->r.size(), 0.0);
  g.head = Matrix(m.head.rows(), m.head.cols());
  const double scale = 1.0 / static_cast<double>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector v = normalize(m.normalizer, d.X[i]);
    accumulate_sample(*layer, m.head, v, d.y[i], scale, g.W, g.b, g.r, g.head, true);
  }
  return g;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

namespace {

// Stage-1 joint training of backbone + head on raw inputs:
//   x -> relu(Wg x + bg) -> relu(2 W u + b) -> L h.
// Only the backbone survives; the upper layers are retrained afterwards on
// the frozen, normalized features.
MlpBackbone train_backbone(const Dataset& train_raw, std::size_t num_classes,
                           const ModelSpec& spec, const TrainPlan& plan, Rng& rng) {
  const std::size_t d = train_raw.dim();
  const std::size_t h_dim = spec.backbone_hidden;
  MlpBackbone backbone;
  backbone.W = Matrix(h_dim, d);
  const double g_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < backbone.W.size(); ++i) {
    backbone.W.data()[i] = rng.normal(0.0, g_std);
  }
  backbone.b.assign(h_dim, 0.0);

  SeedParams upper = init_params(h_dim, spec.hidden, num_classes, rng);
  CsnLayer layer;
  layer.W = upper.hidden.W;
  layer.b = upper.hidden.b;
  layer.r = Vector(spec.hidden, plan.radius_init);
  layer.alpha = 0.0;
  Matrix head = upper.head;

  const std::size_t n = train_raw.size();
  const std::size_t bs = std::max<std::size_t>(plan.batch_size, 1);
  AdamState opt_wg, opt_bg;
  ParamState opt;
  Matrix gWg(h_dim, d);
  Vector gbg(h_dim);
  Matrix gW(spec.hidden, h_dim);
  Vector gb(spec.hidden), gr(spec.hidden), du(h_dim);
  Matrix gL(num_classes, spec.hidden);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= plan.epochs_pretrain; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      const double scale = 1.0 / static_cast<double>(count);
      gWg.fill(0.0);
      std::fill(gbg.begin(), gbg.end(), 0.0);
      gW.fill(0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      std::fill(gr.begin(), gr.end(), 0.0);
      gL.fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t i = order[start + j];
        const Vector& x = train_raw.X[i];
        const Vector u = backbone_forward(x, backbone);
        const Vector h = layer_forward(u, layer);
        Vector z = matvec(head, h);
        const double z_max = *std::max_element(z.begin(), z.end());
        double sum_exp = 0.0;
        for (double zi : z) sum_exp += std::exp(zi - z_max);
        const double lse = z_max + std::log(sum_exp);
        batch_loss += lse - z[static_cast<std::size_t>(train_raw.y[i])];

        Vector dz(num_classes);
        for (std::size_t cidx = 0; cidx < num_classes; ++cidx) {
          dz[cidx] = std::exp(z[cidx] - lse);
        }
        dz[static_cast<std::size_t>(train_raw.y[i])] -= 1.0;
        Vector dh(spec.hidden, 0.0);
        for (std::size_t cidx = 0; cidx < num_classes; ++cidx) {
          kernels::axpy(scale * dz[cidx], h.data(), gL.row(cidx), spec.hidden);
          kernels::axpy(dz[cidx], head.row(cidx), dh.data(), spec.hidden);
        }
        std::fill(du.begin(), du.end(), 0.0);
        layer_backward_into(u, layer, dh, scale, gW, gb, gr, &du);
        // du = scale * dLoss/du; relu mask of the backbone gates the chain
        for (std::size_t q = 0; q < h_dim; ++q) {
          if (u[q] <= 0.0 || du[q] == 0.0) continue;
          kernels::axpy(du[q], x.data(), gWg.row(q), d);
          gbg[q] += du[q];
        }
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training aborted: non-finite loss at epoch " +
                           std::to_string(epoch) + " (learning rate " +
                           std::to_string(plan.optimizer.learning_rate) + ")");
      }
      step_tensor(backbone.W.data(), gWg.data(), gWg.size(), plan.optimizer, opt_wg, true);
      step_tensor(backbone.b.data(), gbg.data(), gbg.size(), plan.optimizer, opt_bg, false);
      step_tensor(layer.W.data(), gW.data(), gW.size(), plan.optimizer, opt.W, true);
      if (plan.use_bias) {
        step_tensor(layer.b.data(), gb.data(), gb.size(), plan.optimizer, opt.b, false);
      }
      step_tensor(head.data(), gL.data(), gL.size(), plan.optimizer, opt.head, true);
    }
  }
  return backbone;
}

}  // namespace

TrainOutput train_model(const Dataset& train_raw, const Dataset* val_raw,
                        const ModelSpec& spec, const TrainPlan& plan,
                        const EpochHook* hook) {
  if (train_raw.size() == 0) throw ConfigError("train_model: empty training set");
  Rng rng(plan.seed);
  const std::size_t num_classes = train_raw.num_classes;

  std::optional<MlpBackbone> backbone;
  Dataset train_feat = train_raw;
  Dataset val_feat;
  if (spec.backbone_hidden > 0) {
    backbone = train_backbone(train_raw, num_classes, spec, plan, rng);
    for (auto& x : train_feat.X) x = backbone_forward(x, *backbone);
  }
  if (val_raw != nullptr) {
    val_feat = *val_raw;
    if (backbone) {
      for (auto& x : val_feat.X) x = backbone_forward(x, *backbone);
    }
  }

  TrainOutput out;
  out.normalizer = fit_normalizer(train_feat.X);
  Dataset train_v = train_feat;
  for (auto& x : train_v.X) x = normalize(out.normalizer, x);
  Dataset val_v = val_feat;
  const Dataset* val_ptr = nullptr;
  if (val_raw != nullptr) {
    for (auto& x : val_v.X) x = normalize(out.normalizer, x);
    val_ptr = &val_v;
  }

  switch (spec.kind) {
    case ModelKind::csnn: {
      out.seed = pretrain_standard(train_v, num_classes, spec.hidden, plan, rng);
      EpochHook wrapped;
      const EpochHook* hook_ptr = nullptr;
      if (hook != nullptr && *hook) {
        wrapped = [&](std::size_t epoch, double alpha, const CsnnModel& inner) {
          CsnnModel with_backbone = inner;
          with_backbone.num_classes = num_classes;
          with_backbone.backbone = backbone;
          (*hook)(epoch, alpha, with_backbone);
        };
        hook_ptr = &wrapped;
      }
      auto [model, trace] =
          anneal_csnn(train_v, val_ptr, out.seed, out.normalizer, num_classes, plan, rng,
                      hook_ptr);
      model.backbone = backbone;
      out.model = std::move(model);
      out.trace = std::move(trace);
      break;
    }
    case ModelKind::standard: {
      TrainTrace trace;
      out.seed = pretrain_standard(train_v, num_classes, spec.hidden, plan, rng, &trace);
      CsnnModel m;
      m.normalizer = out.normalizer;
      m.hidden = out.seed.hidden;
      m.head = out.seed.head;
      m.num_classes = num_classes;
      m.backbone = backbone;
      out.model = std::move(m);
      out.trace = std::move(trace);
      break;
    }
    case ModelKind::rbf: {
      auto [model, trace] = train_rbf_baseline(train_v, val_ptr, out.normalizer, num_classes,
                                               plan, rng, spec.hidden);
      model.backbone = backbone;
      out.model = std::move(model);
      out.trace = std::move(trace);
      break;
    }
  }
  return out;
}

std::optional<std::size_t> select_alpha_epoch(const TrainTrace& trace) {
  const auto err = [](const EpochRecord& r) {
    return r.val_error ? *r.val_error : r.train_error;
  };
  std::optional<std::size_t> base;
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    if (trace.epochs[i].alpha == 0.0) base = i;
  }
  if (!base) return std::nullopt;
  const double base_err = err(trace.epochs[*base]);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    if (err(trace.epochs[i]) > base_err) continue;
    if (!best || trace.epochs[i].alpha >= trace.epochs[*best].alpha) best = i;
  }
  return best;
}

}  // namespace csnn
