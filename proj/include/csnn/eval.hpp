#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csnn/data.hpp"
#include "csnn/model.hpp"

namespace csnn {

// OOD scoring convention: label 0 = in-distribution, label 1 = OOD; a higher
// score means "looks in-distribution".
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct RocResult {
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auroc = 0.0;
};

/// Maximum raw network output; exactly 0 far from the training data when the
/// hidden layer has compact support.
double ood_score(const CsnnModel& m, const Vector& x);

ScoredSet score_in_ood(const CsnnModel& m, const std::vector<Vector>& in_points,
                       const std::vector<Vector>& ood_points);

/// Exact tie-corrected Mann-Whitney statistic P(score_in > score_ood) +
/// P(tie)/2 computed by sorting, plus the ROC sweep (in-distribution treated
/// as the positive class). Throws NumericError unless both labels appear.
RocResult auroc(const ScoredSet& s);

/// Fraction of samples whose predicted class differs from the label.
double error_rate(const CsnnModel& m, const Dataset& d);

// resolution x resolution raster of max-class softmax confidence over
// [low, high]^2; row 0 holds the highest y so PGM output reads like a plot.
struct ConfMap {
  std::size_t resolution = 0;
  double low = 0.0;
  double high = 0.0;
  std::vector<double> values;  // row-major

  double at(std::size_t row, std::size_t col) const { return values[row * resolution + col]; }
};

ConfMap confidence_map(const CsnnModel& m, double low, double high, std::size_t resolution);

/// 8-bit binary PGM (P5, maxval 255), confidence 1/C mapped to 255 (white)
/// and 1 to 0 (black).
void write_confmap_pgm(const ConfMap& map, std::size_t num_classes, const std::string& path);
void write_confmap_csv(const ConfMap& map, const std::string& path);
void write_roc_csv(const RocResult& roc, const std::string& path);

/// Evaluation fan-out width: CSNN_THREADS when set (>= 1), else 1.
std::size_t eval_threads();

}  // namespace csnn
