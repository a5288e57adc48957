#pragma once

#include <span>
#include <string>
#include <vector>

#include "pathgrad/attribution.h"
#include "pathgrad/model.h"

namespace pathgrad {

/// Binary mask shaped like the explicand; 1 marks important features.
struct GroundTruthMask {
  Tensor mask;
  /// Throws unless every entry is 0 or 1 and at least one is 1.
  void Validate() const;
};

/// ROC AUC of scores against binary labels, tied scores sharing their midrank.
/// Returns 0.5 when one class is empty.
double RocAuc(std::span<const double> scores, std::span<const double> labels);

double GroundTruthAuc(const Tensor& scores, const GroundTruthMask& mask);

/// Share of |scores| mass inside the mask. All-zero scores yield 0 and a warning.
double GroundTruthSum(const Tensor& scores, const GroundTruthMask& mask);

struct PerturbationCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double auc = 0.0;
};

double TrapezoidArea(std::span<const double> x, std::span<const double> y);

/// n evenly spaced fractions from 0 to 1 inclusive.
std::vector<double> UniformGrid(std::size_t n = 21);

/// Probability of class cls: the output itself when the model ends in
/// softmax, a logistic of the single output for one-output models, else the
/// softmax of the outputs.
double ClassProbability(const Model& model, const Tensor& x, std::size_t cls);

enum class SicDirection { kAdd, kDelete };

/// ADD inserts explicand features into the background in order of decreasing
/// score; DELETE overwrites explicand features with the background in the same
/// order. At grid fraction q, round(q n) features have been moved. Values are
/// the probability of the explicand's predicted class.
PerturbationCurve SicCurve(const Model& model, const Tensor& x, const Tensor& scores,
                           const Tensor& background, SicDirection direction,
                           const std::vector<double>& grid);

/// Probability of cls at every path point, indexed by alpha = j / k.
PerturbationCurve SaturationCurve(const Model& model, const Path& path, std::size_t cls);

/// Fraction of the path travelled from the explicand (1 - alpha) at the first
/// point, scanning from alpha = 1 down, whose value is below level. 1 when the
/// curve never drops below it.
double DropProgress(const PerturbationCurve& curve, double level);

/// Writes "alpha,value" rows.
std::string CurveCsv(const PerturbationCurve& curve);

}  // namespace pathgrad
