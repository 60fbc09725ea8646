#include "csnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "csnn/io.hpp"

namespace csnn {

std::size_t eval_threads() {
  const char* env = std::getenv("CSNN_THREADS");
  if (env == nullptr) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n > 1 ? static_cast<std::size_t>(n) : 1;
}

namespace {

// Index-parallel map; results land by index, so the outcome does not depend
// on thread scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(eval_threads(), n == 0 ? std::size_t{1} : n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

double ood_score(const CsnnModel& m, const Vector& x) {
  const Vector z = raw_outputs(m, x);
  return *std::max_element(z.begin(), z.end());
}

ScoredSet score_in_ood(const CsnnModel& m, const std::vector<Vector>& in_points,
                       const std::vector<Vector>& ood_points) {
  ScoredSet s;
  s.scores.resize(in_points.size() + ood_points.size());
  s.labels.resize(s.scores.size());
  parallel_for(in_points.size(),
               [&](std::size_t i) { s.scores[i] = ood_score(m, in_points[i]); });
  parallel_for(ood_points.size(), [&](std::size_t i) {
    s.scores[in_points.size() + i] = ood_score(m, ood_points[i]);
  });
  std::fill(s.labels.begin(), s.labels.begin() + static_cast<std::ptrdiff_t>(in_points.size()), 0);
  std::fill(s.labels.begin() + static_cast<std::ptrdiff_t>(in_points.size()), s.labels.end(), 1);
  return s;
}

RocResult auroc(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size()) {
    throw DimensionError("auroc: scores " + std::to_string(s.scores.size()) + " vs labels " +
                         std::to_string(s.labels.size()));
  }
  std::vector<double> in_scores, ood_scores;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores[i])) throw NumericError("auroc: non-finite score");
    (s.labels[i] == 0 ? in_scores : ood_scores).push_back(s.scores[i]);
  }
  if (in_scores.empty() || ood_scores.empty()) {
    throw ConfigError("auroc: need both in-distribution and OOD samples, got " +
                      std::to_string(in_scores.size()) + " in / " +
                      std::to_string(ood_scores.size()) + " ood");
  }
  std::sort(ood_scores.begin(), ood_scores.end());

  // 2U = 2 * #{in > ood} + #{ties}; kept integral so the result is exactly
  // the pair-count statistic.
  std::uint64_t two_u = 0;
  for (const double v : in_scores) {
    const auto lo = std::lower_bound(ood_scores.begin(), ood_scores.end(), v);
    const auto hi = std::upper_bound(lo, ood_scores.end(), v);
    two_u += 2 * static_cast<std::uint64_t>(lo - ood_scores.begin());
    two_u += static_cast<std::uint64_t>(hi - lo);
  }

  RocResult roc;
  roc.auroc = static_cast<double>(two_u) /
              (2.0 * static_cast<double>(in_scores.size()) *
               static_cast<double>(ood_scores.size()));

  // ROC sweep with in-distribution as the positive class: predict "in" when
  // score >= threshold.
  std::vector<double> all = s.scores;
  std::sort(all.begin(), all.end(), std::greater<>());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::sort(in_scores.begin(), in_scores.end());
  const double n_in = static_cast<double>(in_scores.size());
  const double n_ood = static_cast<double>(ood_scores.size());
  roc.thresholds.reserve(all.size() + 1);
  roc.fpr.reserve(all.size() + 1);
  roc.tpr.reserve(all.size() + 1);
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  for (const double t : all) {
    const auto in_ge = in_scores.end() - std::lower_bound(in_scores.begin(), in_scores.end(), t);
    const auto ood_ge =
        ood_scores.end() - std::lower_bound(ood_scores.begin(), ood_scores.end(), t);
    roc.thresholds.push_back(t);
    roc.tpr.push_back(static_cast<double>(in_ge) / n_in);
    roc.fpr.push_back(static_cast<double>(ood_ge) / n_ood);
  }
  return roc;
}

double error_rate(const CsnnModel& m, const Dataset& d) {
  if (d.size() == 0) throw ConfigError("error_rate: empty dataset");
  std::vector<std::uint8_t> wrong(d.size(), 0);
  parallel_for(d.size(), [&](std::size_t i) {
    wrong[i] = confidence(m, d.X[i]).predicted != static_cast<std::size_t>(d.y[i]) ? 1 : 0;
  });
  std::size_t total = 0;
  for (auto w : wrong) total += w;
  return static_cast<double>(total) / static_cast<double>(d.size());
}

ConfMap confidence_map(const CsnnModel& m, double low, double high, std::size_t resolution) {
  if (m.input_dim() != 2) {
    throw DimensionError("confidence_map: model input dim " + std::to_string(m.input_dim()) +
                         ", need 2");
  }
  if (resolution < 2) throw ConfigError("confidence_map: resolution must be >= 2");
  ConfMap map;
  map.resolution = resolution;
  map.low = low;
  map.high = high;
  map.values.resize(resolution * resolution);
  const double step = (high - low) / static_cast<double>(resolution - 1);
  parallel_for(resolution * resolution, [&](std::size_t idx) {
    const std::size_t row = idx / resolution;
    const std::size_t col = idx % resolution;
    const double x = low + step * static_cast<double>(col);
    const double y = high - step * static_cast<double>(row);  // row 0 = top
    const Confidence c = confidence(m, {x, y});
    map.values[idx] = c.probs[c.predicted];
  });
  return map;
}

void write_confmap_pgm(const ConfMap& map, std::size_t num_classes, const std::string& path) {
  const double floor = 1.0 / static_cast<double>(num_classes);
  std::string body;
  body.reserve(map.values.size());
  for (const double v : map.values) {
    const double t = std::clamp((v - floor) / (1.0 - floor), 0.0, 1.0);
    body.push_back(static_cast<char>(static_cast<int>(std::lround(255.0 * (1.0 - t)))));
  }
  std::ostringstream header;
  header << "P5\n" << map.resolution << " " << map.resolution << "\n255\n";
  atomic_write_file(path, header.str() + body);
}

void write_confmap_csv(const ConfMap& map, const std::string& path) {
  std::ostringstream out;
  out << "x,y,confidence\n";
  const double step = (map.high - map.low) / static_cast<double>(map.resolution - 1);
  out.precision(17);
  for (std::size_t row = 0; row < map.resolution; ++row) {
    for (std::size_t col = 0; col < map.resolution; ++col) {
      const double x = map.low + step * static_cast<double>(col);
      const double y = map.high - step * static_cast<double>(row);
      out << x << "," << y << "," << map.at(row, col) << "\n";
    }
  }
  atomic_write_file(path, out.str());
}

void write_roc_csv(const RocResult& roc, const std::string& path) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  out.precision(17);
  for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
    out << roc.thresholds[i] << "," << roc.fpr[i] << "," << roc.tpr[i] << "\n";
  }
  atomic_write_file(path, out.str());
}

}  // namespace csnn
