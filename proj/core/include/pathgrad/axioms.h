#pragma once

#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "pathgrad/attribution.h"

namespace pathgrad {

enum class Axiom { kCompleteness, kDummy, kSymmetry, kImplementationInvariance };

std::string AxiomName(Axiom a);

struct AxiomReport {
  Axiom axiom = Axiom::kCompleteness;
  std::string method;
  double gap = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  /// Inputs and setup needed to re-run the check.
  nlohmann::json witness;

  nlohmann::json ToJson() const;
};

struct AxiomTolerances {
  /// Completeness tolerance is this times max(1, |f(x)|).
  double completeness_relative = 1e-3;
  double dummy = 1e-9;
  double symmetry = 1e-6;
  /// Largest |p_1 - p_2| allowed at any path point in the symmetry check.
  double symmetry_path = 1e-9;
  double implementation_invariance = 1e-6;
};

inline constexpr AxiomTolerances kAxiomTolerances{};

/// |sum(phi) - (f(x) - mean_b f(b))| over the baselines the method reports.
AxiomReport CheckCompleteness(const Model& model, const Tensor& x, const MethodSetup& setup,
                              std::optional<double> tolerance = std::nullopt);

/// Appends an input that no layer reads, sets it to 7 in the explicand (and to
/// other values in references and baseline) and measures |phi_dummy|.
AxiomReport CheckDummy(const Model& model, const Tensor& x, const MethodSetup& setup);

/// Runs on SymmetricSumModel with x_1 = x_2 and measures |phi_1 - phi_2|.
/// Path methods must also keep every path point symmetric.
AxiomReport CheckSymmetry(const Tensor& x, const MethodSetup& setup);

using Attributor = std::function<Tensor(const Model&, const Tensor&)>;

/// Reverses the hidden units of the first dense layer and measures
/// max |phi(model) - phi(twin)|.
AxiomReport CheckImplementationInvariance(const Model& model, const Tensor& x,
                                          const MethodSetup& setup);
AxiomReport CheckImplementationInvariance(const Model& model, const Tensor& x,
                                          const std::string& name, const Attributor& attributor);

/// Reads the first unit's input weights; not invariant under unit relabeling.
Tensor FirstUnitWeightAttribution(const Model& model, const Tensor& x);

/// Recomputes the gap from a report's witness. Completeness, dummy and
/// implementation invariance need the model the check ran on; symmetry uses
/// its built-in model.
double ReplayGap(const AxiomReport& report, const Model& model);

}  // namespace pathgrad
