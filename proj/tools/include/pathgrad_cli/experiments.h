#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrad/attribution.h"
#include "pathgrad/axioms.h"
#include "pathgrad/eval_metrics.h"
#include "pathgrad/xai_bench.h"
#include "pathgrad_cli/io.h"

namespace pathgrad::cli {

enum class ReferenceStrategy { kRandomCounterfactual, kFixedList, kAllOfClass };

std::string ReferenceStrategyName(ReferenceStrategy s);
ReferenceStrategy ParseReferenceStrategy(const std::string& name);

struct ReferenceSelection {
  ReferenceStrategy strategy = ReferenceStrategy::kRandomCounterfactual;
  std::size_t count = 8;
  /// fixed-list: dataset indices.
  std::vector<std::size_t> indices;
  /// all-of-class: predicted class to collect; unset picks the first class
  /// other than the explicand's.
  std::optional<std::size_t> cls;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
};

/// References for explicand number `stream` drawn from data[pool]. Random
/// draws use a generator seeded from (seed, stream), so results do not depend
/// on evaluation order.
std::vector<Tensor> SelectReferences(const Model& model, const Dataset& data,
                                     const std::vector<std::size_t>& pool, const Tensor& x,
                                     const ReferenceSelection& selection, std::uint64_t stream);

/// Uniform draws (any class) from data[pool].
std::vector<Tensor> DrawSamples(const Dataset& data, const std::vector<std::size_t>& pool,
                                std::size_t count, std::uint64_t seed, std::uint64_t stream);

/// Architecture of a model as a buildable spec.
ModelSpec SpecOf(const Model& model, std::uint64_t seed);

/// Method setup with references and zero baseline filled in for x.
MethodSetup SetupFor(Method method, const AttributionConfig& base, std::vector<Tensor> references,
                     std::uint64_t seed);

struct XaiBenchOptions {
  std::vector<Method> methods{Method::kIntegratedGradients, Method::kExpectedIG,
                              Method::kGuidedIG,            Method::kExpectedIG2,
                              Method::kGradCFE,             Method::kRandom};
  std::size_t explicands = 100;
  std::size_t background = 64;
  std::size_t shapley_explicands = 50;
  bool roar = false;
  std::size_t roar_train = 200;
  TrainConfig roar_train_config;
  AttributionConfig attribution;
  ReferenceSelection references;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
};

struct MetricRow {
  std::string method;
  std::vector<std::pair<std::string, double>> values;
};

struct MetricTable {
  std::vector<std::string> columns;
  std::vector<MetricRow> rows;

  nlohmann::json ToJson() const;
  std::string Csv(const std::string& provenance_line) const;
  double Get(const std::string& method, const std::string& column) const;
};

/// Faithfulness, monotonicity, ROAR (when enabled), GT-Shapley and
/// infidelity per method on held-out explicands of a tabular dataset.
MetricTable RunXaiBenchTable(const Model& model, const Dataset& data, const XaiBenchOptions& options);

struct ImageEvalOptions {
  std::vector<Method> methods{Method::kVanillaGradient, Method::kIntegratedGradients,
                              Method::kExpectedIG2, Method::kRandom};
  std::size_t explicands = 30;
  AttributionConfig attribution;
  ReferenceSelection references;
  std::uint64_t seed = 0;

  nlohmann::json ToJson() const;
};

struct ImageEvalResult {
  MetricTable table;  // gt_auc, gt_sum, sic_add, sic_delete
  /// Mean fraction of the path travelled from the explicand before the class
  /// probability first drops below 0.5.
  double straight_drop = 0.0;
  double gradpath_drop = 0.0;
  /// Mean curves, "method,direction,alpha,value" rows.
  std::string curves_csv;
};

/// Ground-truth and SIC metrics on held-out explicands of an image dataset
/// (zero background), plus saturation along straight-line and GradPath paths.
ImageEvalResult RunImageEvaluation(const Model& model, const ImageDataset& data,
                                   const ImageEvalOptions& options);

/// {straight, guided, gradpath} x {zero, train-data, gradcf}; GradPath is only
/// defined with its own GradCF endpoint, so the grid has seven cells.
MetricTable RunAblationGrid(const Model& model, const ImageDataset& data,
                            const ImageEvalOptions& options);

struct AxiomSuiteResult {
  std::vector<AxiomReport> reports;
  /// Reports expected to fail (negative controls).
  std::vector<bool> expect_fail;

  bool AllAsExpected() const;
  nlohmann::json ToJson() const;
};

/// Completeness, dummy, symmetry and implementation invariance on the given
/// rank-1 model and built-in toy models, with negative controls.
AxiomSuiteResult RunAxiomSuite(const Model& model, const Dataset& data,
                               const AttributionConfig& attribution, std::size_t explicands,
                               std::uint64_t seed);

}  // namespace pathgrad::cli
