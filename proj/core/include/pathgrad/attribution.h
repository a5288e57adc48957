#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrad/model.h"

namespace pathgrad {

enum class PathKind { kStraight, kGuided, kGradPath };

/// Ordered points gamma(j/k), j = 0..k. points.front() is the baseline,
/// points.back() the explicand.
struct Path {
  PathKind kind = PathKind::kStraight;
  std::vector<Tensor> points;
  /// GradPath only: step_weights[j] is the coefficient eta / W applied to the
  /// gradient when moving between points[j + 1] and points[j].
  std::vector<double> step_weights;

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
  const Tensor& baseline() const { return points.front(); }
  const Tensor& explicand() const { return points.back(); }
};

enum class Normalization { kL2, kL1 };
enum class DifferenceScheme { kForward, kBackward, kTrapezoid };

struct AttributionConfig {
  double step_size = 0.01;
  int steps = 500;
  Normalization norm = Normalization::kL2;
  /// Coordinates moved per step under l1 normalization.
  std::size_t top_k = 1;
  DistanceMeasure measure = DistanceMeasure::kEuclidean;
  std::optional<int> representation_tap;
  DifferenceScheme scheme = DifferenceScheme::kTrapezoid;
  std::vector<Tensor> references;
  bool allow_same_class_references = false;
  /// Guided IG: fraction of unconverged features moved per step.
  double guided_fraction = 0.1;

  /// Throws unless step_size > 0, steps >= 1, 1 <= top_k <= n_features and
  /// guided_fraction in (0, 1].
  void Validate(std::size_t n_features) const;
  nlohmann::json ToJson() const;
};

enum class Method {
  kVanillaGradient,
  kIntegratedGradients,
  kExpectedIG,
  kGuidedIG,
  kIG2,
  kExpectedIG2,
  kGradCFE,
  kRandom,
};

std::string MethodName(Method m);
Method ParseMethod(const std::string& name);
std::string NormalizationName(Normalization n);
Normalization ParseNormalization(const std::string& name);
std::string SchemeName(DifferenceScheme s);
DifferenceScheme ParseScheme(const std::string& name);

struct Attribution {
  Tensor scores;
  Method method = Method::kIntegratedGradients;
  nlohmann::json config;
  /// sum(scores) - (f(explicand) - mean f(baselines)); empty for methods that
  /// do not integrate along a path.
  std::optional<double> completeness_gap;
  /// gamma(0) of every path that was integrated (one per reference for the
  /// expected variants).
  std::vector<Tensor> baselines;
  /// Per-reference scores kept by the expected variants.
  std::vector<Tensor> per_reference;
};

/// Output entry explained for x: 0 for single-output models, else the
/// predicted class.
std::size_t TargetOutput(const Model& model, const Tensor& x);

/// points[j] = baseline + (j/k)(x - baseline) for j < k, points[k] = x.
Path StraightLinePath(const Tensor& x, const Tensor& baseline, int steps);

/// Riemann sum of output gradients against path displacements.
///   forward:  sum_{j=0}^{k-1} grad f(p_j) * (p_{j+1} - p_j)
///   backward: sum_{j=1}^{k}   grad f(p_j) * (p_j - p_{j-1})
///   trapezoid: mean of the two
/// Segments of zero length contribute nothing and are not evaluated.
Attribution IntegrateOnPath(const Model& model, const Path& path, std::size_t output,
                            DifferenceScheme scheme);

struct GradPathResult {
  Path path;
  Tensor gradcf;
  /// Steps that moved before the objective gradient vanished.
  int active_steps = 0;
};

/// Normalized gradient descent on the representation distance to the
/// reference, starting from x. Records every iterate; the returned path runs
/// from the final iterate (GradCF) to x.
GradPathResult GradPath(const Model& model, const Tensor& x, const Tensor& reference,
                        const AttributionConfig& config);

/// x - gradcf.
Attribution GradCfe(const Tensor& x, const Tensor& gradcf);

/// Integrated gradients along GradPath with the configured difference scheme.
Attribution IG2(const Model& model, const Tensor& x, const Tensor& reference,
                const AttributionConfig& config, std::size_t output);

/// Mean of IG2 over references, in reference order. References must be
/// counterfactual (different predicted class) unless the config allows
/// otherwise.
Attribution ExpectedIG2(const Model& model, const Tensor& x, std::span<const Tensor> references,
                        const AttributionConfig& config, std::size_t output);

/// Straight-line integrated gradients.
Attribution IntegratedGradients(const Model& model, const Tensor& x, const Tensor& baseline,
                                int steps, std::size_t output,
                                DifferenceScheme scheme = DifferenceScheme::kTrapezoid);

/// Mean of straight-line IG over baselines drawn from data.
Attribution ExpectedIG(const Model& model, const Tensor& x, std::span<const Tensor> references,
                       int steps, std::size_t output,
                       DifferenceScheme scheme = DifferenceScheme::kTrapezoid);

/// Guided IG path: each step moves the unconverged features with the smallest
/// |df/dx_i| toward the baseline, sharing an equal L1 budget of
/// |x - baseline|_1 / k. Ties go to the lowest index.
Path GuidedIgPath(const Model& model, const Tensor& x, const Tensor& baseline, int steps,
                  double fraction, std::size_t output);

Attribution GuidedIG(const Model& model, const Tensor& x, const Tensor& baseline, int steps,
                     double fraction, std::size_t output,
                     DifferenceScheme scheme = DifferenceScheme::kTrapezoid);

/// df/dx at x, without input multiplication.
Attribution VanillaGradient(const Model& model, const Tensor& x, std::size_t output);

/// Seeded standard-normal scores.
Attribution RandomAttribution(const Shape& shape, std::uint64_t seed);

/// Model copy with the representation tap overridden when the config sets one.
Model WithTap(const Model& model, const AttributionConfig& config);

/// Everything needed to run one method on one explicand.
struct MethodSetup {
  Method method = Method::kIG2;
  /// IG2, expected IG2 and GradCFE read config.references as counterfactual
  /// references; expected IG uses them as baselines.
  AttributionConfig config;
  /// Straight-line and guided IG endpoint; zeros when unset.
  std::optional<Tensor> baseline;
  /// Random method.
  std::uint64_t seed = 0;
  /// Explained output; TargetOutput when unset.
  std::optional<std::size_t> output;
};

/// Dispatches on setup.method. IG2 uses the first reference; GradCFE averages
/// x - GradCF over all references.
Attribution Attribute(const Model& model, const Tensor& x, const MethodSetup& setup);

/// The single path the method integrates along, when there is one.
std::optional<Path> MethodPath(const Model& model, const Tensor& x, const MethodSetup& setup);

nlohmann::json TensorToJson(const Tensor& t);
Tensor TensorFromJson(const nlohmann::json& j);
/// Lossless: references and baseline values are included.
nlohmann::json SetupToJson(const MethodSetup& setup);
MethodSetup SetupFromJson(const nlohmann::json& j);

}  // namespace pathgrad
