#pragma once

#include <cstddef>

#include "csnn/numeric.hpp"

namespace csnn {

// Layer of K compact support neurons over d inputs. Each neuron computes
//   f(x) = relu(alpha * (r_i - |x|^2 - |w_i|^2 - b_i) + 2 w_i.x + b_i),
// which at alpha = 0 is a standard projection neuron relu(2 w.x + b) and at
// alpha = 1 an RBF-style neuron with compact support.
struct CsnLayer {
  Matrix W;           // K x d, rows are neuron weights w_i
  Vector b;           // K biases
  Vector r;           // K radius parameters R_i (trainable, sign-unconstrained)
  double alpha = 0.0; // shape parameter in [0, 1]

  std::size_t neurons() const { return W.rows(); }
  std::size_t input_dim() const { return W.cols(); }
};

// Region where a neuron's output is positive: the open ball of squared
// radius radius_sq around center = w / alpha. radius_sq can be negative,
// meaning the support is empty (a dead neuron).
struct SupportSphere {
  Vector center;
  double radius_sq = 0.0;
};

double neuron_preactivation(const Vector& x, const Vector& w, double b, double R,
                            double alpha);
double neuron_forward(const Vector& x, const Vector& w, double b, double R,
                      double alpha);

/// Vectorized layer pass: matvec + per-neuron combine. Matches the per-neuron
/// neuron_forward loop to rounding error.
Vector layer_forward(const Vector& x, const CsnLayer& layer);

/// Support geometry, defined for alpha > 0 only; alpha = 0 has unbounded
/// support and throws NumericError.
SupportSphere support_sphere(const Vector& w, double b, double R, double alpha);

/// Gradient of the neuron w.r.t. x as stated by the bound theorem:
/// -alpha*x + w strictly inside the support, zero otherwise (also zero
/// exactly at the boundary). The exact differential of the forward form is
/// twice this; layer_backward uses the exact differential.
Vector neuron_grad_x(const Vector& x, const Vector& w, double b, double R,
                     double alpha);

/// Upper bound on |neuron_grad_x|^2 over all x:
/// alpha^2 R + b alpha (1 - alpha) + |w|^2 (1 - alpha^2).
double grad_bound(const Vector& w, double b, double R, double alpha);

struct LayerGrads {
  Matrix W;  // K x d
  Vector b;  // K
  Vector r;  // K
  Vector x;  // d
};

/// Gradients of sum_i upstream[i] * f_i(x) w.r.t. every parameter block and x.
/// Inactive neurons (pre-activation <= 0) contribute exactly zero rows.
LayerGrads layer_backward(const Vector& x, const CsnLayer& layer, const Vector& upstream);

/// Accumulating form used by the training loop: adds scale * gradients into
/// the provided buffers. grad_x may be null when the input gradient is not
/// needed.
void layer_backward_into(const Vector& x, const CsnLayer& layer, const Vector& upstream,
                         double scale, Matrix& grad_W, Vector& grad_b, Vector& grad_r,
                         Vector* grad_x);

/// Baseline RBF neuron exp(-beta |x - w|^2), beta > 0.
double rbf_neuron_forward(const Vector& x, const Vector& w, double beta);

// Diagnostics.
std::size_t dead_neuron_count(const CsnLayer& layer);
double max_grad_bound(const CsnLayer& layer);

}  // namespace csnn
