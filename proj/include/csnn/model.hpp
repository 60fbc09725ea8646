#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "csnn/csn.hpp"
#include "csnn/numeric.hpp"

namespace csnn {

// Per-dimension standardization to zero mean and std 1/sqrt(d), so that
// |v|^2 ~ 1 on the training data and the radius parameter is
// dimension-independent.
struct Normalizer {
  Vector mu;
  Vector sigma;  // population std, floored at kSigmaFloor

  std::size_t dim() const { return mu.size(); }
};

inline constexpr double kSigmaFloor = 1e-8;

Normalizer fit_normalizer(const std::vector<Vector>& data);
Vector normalize(const Normalizer& n, const Vector& u);

// Standard projection layer relu(2 W x + b). The factor 2 matches the CSN
// layer at alpha = 0, so annealing can start from these exact parameters.
struct StandardLayer {
  Matrix W;
  Vector b;
};
Vector standard_forward(const Vector& x, const StandardLayer& layer);

// Baseline RBF layer exp(-beta_i |x - w_i|^2) with per-neuron trainable
// widths, stored as log(beta) so beta stays positive under any update.
struct RbfLayer {
  Matrix W;         // K x d centers
  Vector log_beta;  // K
};
Vector rbf_forward(const Vector& x, const RbfLayer& layer);

// Optional frozen feature extractor relu(W x + b) in front of the normalizer,
// for datasets where raw inputs have degenerate (constant) dimensions.
struct MlpBackbone {
  Matrix W;
  Vector b;
};
Vector backbone_forward(const Vector& x, const MlpBackbone& backbone);

using HiddenLayer = std::variant<CsnLayer, StandardLayer, RbfLayer>;

// Full network: optional backbone -> normalizer -> hidden layer -> bias-free
// linear head. The head has no bias so the raw outputs can be an all-zero
// vector outside the hidden layer's support.
struct CsnnModel {
  Normalizer normalizer;
  HiddenLayer hidden;
  Matrix head;  // C x K
  std::size_t num_classes = 0;
  std::optional<MlpBackbone> backbone;

  std::size_t input_dim() const {
    return backbone ? backbone->W.cols() : normalizer.dim();
  }
  std::size_t hidden_size() const { return head.cols(); }
  const char* hidden_kind() const;
};

Vector hidden_forward(const Vector& v, const HiddenLayer& hidden);
Vector raw_outputs(const CsnnModel& m, const Vector& x);

Vector softmax(const Vector& z);

struct Confidence {
  Vector probs;
  std::size_t predicted = 0;  // argmax, lowest index on ties
};
Confidence confidence(const CsnnModel& m, const Vector& x);

// Versioned JSON document with base64-encoded little-endian float64 blobs;
// round-trips every parameter bit-exactly. Writes are atomic
// (temp file + rename).
void save_model(const CsnnModel& m, const std::string& path);
CsnnModel load_model(const std::string& path);

}  // namespace csnn
