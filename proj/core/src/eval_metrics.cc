#include "pathgrad/eval_metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pathgrad/log.h"

namespace pathgrad {

void GroundTruthMask::Validate() const {
  bool any = false;
  for (double v : mask.data()) {
    if (v != 0.0 && v != 1.0) throw Error("ground-truth mask entries must be 0 or 1");
    any = any || v == 1.0;
  }
  if (!any) throw Error("ground-truth mask marks no feature");
}

double RocAuc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw Error("roc auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based) for tied groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 0.5) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return 0.5;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double GroundTruthAuc(const Tensor& scores, const GroundTruthMask& mask) {
  CheckSameShape(scores, mask.mask, "ground-truth auc");
  mask.Validate();
  return RocAuc(scores.data(), mask.mask.data());
}

double GroundTruthSum(const Tensor& scores, const GroundTruthMask& mask) {
  CheckSameShape(scores, mask.mask, "ground-truth sum");
  mask.Validate();
  const double total = L1Norm(scores);
  if (total == 0.0) {
    Warn("ground-truth sum of an all-zero attribution is undefined; reporting 0");
    return 0.0;
  }
  double inside = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) inside += std::abs(scores[i]) * mask.mask[i];
  return inside / total;
}

double TrapezoidArea(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("trapezoid: length mismatch");
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return area;
}

std::vector<double> UniformGrid(std::size_t n) {
  if (n < 2) throw Error("grid needs at least 2 points");
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return grid;
}

double ClassProbability(const Model& model, const Tensor& x, std::size_t cls) {
  const Tensor out = Evaluate(model, x).output;
  if (model.layers().back().spec.kind == LayerKind::kSoftmax) return out.data()[cls];
  if (out.size() == 1) {
    const double p1 = 1.0 / (1.0 + std::exp(-out[0]));
    return cls == 1 ? p1 : 1.0 - p1;
  }
  const double mx = *std::max_element(out.data().begin(), out.data().end());
  double z = 0.0;
  for (double v : out.data()) z += std::exp(v - mx);
  return std::exp(out.data()[cls] - mx) / z;
}

PerturbationCurve SicCurve(const Model& model, const Tensor& x, const Tensor& scores,
                           const Tensor& background, SicDirection direction,
                           const std::vector<double>& grid) {
  CheckSameShape(x, scores, "sic curve scores");
  CheckSameShape(x, background, "sic curve background");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] < 0.0 || grid[i] > 1.0 || (i > 0 && grid[i] <= grid[i - 1]))
      throw Error("sic grid must be strictly increasing within [0, 1]");
  const std::size_t n = x.size();
  const std::size_t cls = PredictedClass(model, x);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  PerturbationCurve curve;
  curve.thresholds = grid;
  for (double q : grid) {
    const auto moved = static_cast<std::size_t>(std::llround(q * static_cast<double>(n)));
    Tensor probe = direction == SicDirection::kAdd ? background : x;
    const Tensor& source = direction == SicDirection::kAdd ? x : background;
    for (std::size_t r = 0; r < moved; ++r) probe[order[r]] = source[order[r]];
    // Endpoints are taken verbatim so they do not depend on the ranking.
    if (q == 1.0) probe = direction == SicDirection::kAdd ? x : background;
    if (q == 0.0) probe = direction == SicDirection::kAdd ? background : x;
    curve.values.push_back(ClassProbability(model, probe, cls));
  }
  curve.auc = TrapezoidArea(curve.thresholds, curve.values);
  return curve;
}

PerturbationCurve SaturationCurve(const Model& model, const Path& path, std::size_t cls) {
  if (path.points.size() < 2) throw Error("saturation curve needs a path with at least one step");
  PerturbationCurve curve;
  const double k = static_cast<double>(path.steps());
  for (std::size_t j = 0; j < path.points.size(); ++j) {
    curve.thresholds.push_back(static_cast<double>(j) / k);
    curve.values.push_back(ClassProbability(model, path.points[j], cls));
  }
  curve.auc = TrapezoidArea(curve.thresholds, curve.values);
  return curve;
}

double DropProgress(const PerturbationCurve& curve, double level) {
  for (std::size_t j = curve.values.size(); j-- > 0;)
    if (curve.values[j] < level) return 1.0 - curve.thresholds[j];
  return 1.0;
}

std::string CurveCsv(const PerturbationCurve& curve) {
  std::string out = "alpha,value\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.thresholds[i], curve.values[i]);
    out += buf;
  }
  return out;
}

}  // namespace pathgrad
