#include "csnn/csn.hpp"

#include <algorithm>
#include <cmath>

#include "csnn/kernels.hpp"

namespace csnn {

namespace {

void check_same_dim(const Vector& x, const Vector& w, const char* op) {
  if (x.size() != w.size()) {
    throw DimensionError(std::string(op) + ": input " + shape_str(x) +
                         " incompatible with weights " + shape_str(w));
  }
}

}  // namespace

double neuron_preactivation(const Vector& x, const Vector& w, double b, double R,
                            double alpha) {
  check_same_dim(x, w, "neuron_forward");
  const double xsq = squared_norm(x);
  const double wsq = squared_norm(w);
  const double proj = kernels::dot(w.data(), x.data(), x.size());
  return alpha * (R - xsq - wsq - b) + 2.0 * proj + b;
}

double neuron_forward(const Vector& x, const Vector& w, double b, double R,
                      double alpha) {
  return std::max(neuron_preactivation(x, w, b, R, alpha), 0.0);
}

Vector layer_forward(const Vector& x, const CsnLayer& layer) {
  if (x.size() != layer.input_dim()) {
    throw DimensionError("layer_forward: input " + shape_str(x) +
                         " incompatible with layer weights " + shape_str(layer.W));
  }
  const std::size_t k = layer.neurons();
  const double xsq = squared_norm(x);
  Vector out(k);
  kernels::matvec(layer.W.data(), k, layer.W.cols(), x.data(), out.data());
  for (std::size_t i = 0; i < k; ++i) {
    const double wsq = kernels::squared_norm(layer.W.row(i), layer.W.cols());
    const double pre =
        layer.alpha * (layer.r[i] - xsq - wsq - layer.b[i]) + 2.0 * out[i] + layer.b[i];
    out[i] = std::max(pre, 0.0);
  }
  return out;
}

SupportSphere support_sphere(const Vector& w, double b, double R, double alpha) {
  if (alpha <= 0.0) {
    throw NumericError("support_sphere: unbounded support at alpha = 0");
  }
  const double wsq = squared_norm(w);
  SupportSphere s;
  s.center.resize(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) s.center[j] = w[j] / alpha;
  s.radius_sq = R + b * (1.0 / alpha - 1.0) + wsq * (1.0 / (alpha * alpha) - 1.0);
  return s;
}

Vector neuron_grad_x(const Vector& x, const Vector& w, double b, double R,
                     double alpha) {
  const double pre = neuron_preactivation(x, w, b, R, alpha);
  Vector g(x.size(), 0.0);
  if (pre > 0.0) {
    for (std::size_t j = 0; j < x.size(); ++j) g[j] = -alpha * x[j] + w[j];
  }
  return g;
}

double grad_bound(const Vector& w, double b, double R, double alpha) {
  const double wsq = squared_norm(w);
  return alpha * alpha * R + b * alpha * (1.0 - alpha) + wsq * (1.0 - alpha * alpha);
}

void layer_backward_into(const Vector& x, const CsnLayer& layer, const Vector& upstream,
                         double scale, Matrix& grad_W, Vector& grad_b, Vector& grad_r,
                         Vector* grad_x) {
  const std::size_t k = layer.neurons();
  const std::size_t d = layer.input_dim();
  if (x.size() != d || upstream.size() != k) {
    throw DimensionError("layer_backward: input " + shape_str(x) + ", upstream " +
                         shape_str(upstream) + " incompatible with layer weights " +
                         shape_str(layer.W));
  }
  if (grad_W.rows() != k || grad_W.cols() != d || grad_b.size() != k || grad_r.size() != k ||
      (grad_x != nullptr && grad_x->size() != d)) {
    throw DimensionError("layer_backward: gradient buffers do not match layer weights " +
                         shape_str(layer.W));
  }

  const double xsq = squared_norm(x);
  const double alpha = layer.alpha;
  for (std::size_t i = 0; i < k; ++i) {
    const double* w = layer.W.row(i);
    const double wsq = kernels::squared_norm(w, d);
    const double proj = kernels::dot(w, x.data(), d);
    const double pre =
        alpha * (layer.r[i] - xsq - wsq - layer.b[i]) + 2.0 * proj + layer.b[i];
    if (pre <= 0.0) continue;  // inactive: zero gradient, also at the kink
    const double u = scale * upstream[i];
    if (u == 0.0) continue;
    // d f_i / d w_i = -2 alpha w_i + 2 x
    kernels::axpy(-2.0 * alpha * u, w, grad_W.row(i), d);
    kernels::axpy(2.0 * u, x.data(), grad_W.row(i), d);
    grad_b[i] += u * (1.0 - alpha);
    grad_r[i] += u * alpha;
    if (grad_x != nullptr) {
      // d f_i / d x = -2 alpha x + 2 w_i
      kernels::axpy(-2.0 * alpha * u, x.data(), grad_x->data(), d);
      kernels::axpy(2.0 * u, w, grad_x->data(), d);
    }
  }
}

LayerGrads layer_backward(const Vector& x, const CsnLayer& layer, const Vector& upstream) {
  LayerGrads g;
  g.W = Matrix(layer.neurons(), layer.input_dim());
  g.b.assign(layer.neurons(), 0.0);
  g.r.assign(layer.neurons(), 0.0);
  g.x.assign(layer.input_dim(), 0.0);
  layer_backward_into(x, layer, upstream, 1.0, g.W, g.b, g.r, &g.x);
  return g;
}

double rbf_neuron_forward(const Vector& x, const Vector& w, double beta) {
  check_same_dim(x, w, "rbf_neuron_forward");
  if (beta <= 0.0) {
    throw NumericError("rbf_neuron_forward: beta must be positive, got " +
                       std::to_string(beta));
  }
  double dist_sq = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double dj = x[j] - w[j];
    dist_sq += dj * dj;
  }
  return std::exp(-beta * dist_sq);
}

std::size_t dead_neuron_count(const CsnLayer& layer) {
  if (layer.alpha <= 0.0) return 0;
  std::size_t dead = 0;
  for (std::size_t i = 0; i < layer.neurons(); ++i) {
    Vector w(layer.W.row(i), layer.W.row(i) + layer.input_dim());
    if (support_sphere(w, layer.b[i], layer.r[i], layer.alpha).radius_sq <= 0.0) ++dead;
  }
  return dead;
}

double max_grad_bound(const CsnLayer& layer) {
  double worst = 0.0;
  for (std::size_t i = 0; i < layer.neurons(); ++i) {
    Vector w(layer.W.row(i), layer.W.row(i) + layer.input_dim());
    worst = std::max(worst, grad_bound(w, layer.b[i], layer.r[i], layer.alpha));
  }
  return worst;
}

}  // namespace csnn
