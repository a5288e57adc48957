#include "pathgrad/axioms.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pathgrad {

std::string AxiomName(Axiom a) {
  switch (a) {
    case Axiom::kCompleteness: return "completeness";
    case Axiom::kDummy: return "dummy";
    case Axiom::kSymmetry: return "symmetry";
    case Axiom::kImplementationInvariance: return "implementation_invariance";
  }
  return "unknown";
}

nlohmann::json AxiomReport::ToJson() const {
  return {{"axiom", AxiomName(axiom)}, {"method", method},   {"gap", gap},
          {"tolerance", tolerance},    {"pass", pass},       {"witness", witness}};
}

namespace {

constexpr double kDummyValue = 7.0;

double Output(const Model& model, const Tensor& x, std::size_t output) {
  return Evaluate(model, x).output.data()[output];
}

AxiomReport Finish(Axiom axiom, std::string method, double gap, double tolerance,
                   nlohmann::json witness) {
  AxiomReport r;
  r.axiom = axiom;
  r.method = std::move(method);
  r.gap = gap;
  r.tolerance = tolerance;
  r.pass = gap <= tolerance;
  r.witness = std::move(witness);
  return r;
}

double CompletenessGap(const Model& model, const Tensor& x, const MethodSetup& setup) {
  const Attribution att = Attribute(model, x, setup);
  const std::size_t output = setup.output.value_or(TargetOutput(model, x));
  double base = 0.0;
  for (const Tensor& b : att.baselines) base += Output(model, b, output);
  if (!att.baselines.empty()) base /= static_cast<double>(att.baselines.size());
  return std::abs(Sum(att.scores) - (Output(model, x, output) - base));
}

Tensor Padded(const Tensor& t, double value) {
  std::vector<double> v = t.values();
  v.push_back(value);
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

MethodSetup PaddedSetup(const MethodSetup& setup) {
  MethodSetup s = setup;
  for (std::size_t r = 0; r < s.config.references.size(); ++r)
    s.config.references[r] = Padded(s.config.references[r], -1.0 - static_cast<double>(r));
  if (s.baseline) s.baseline = Padded(*s.baseline, 0.0);
  return s;
}

double DummyGap(const Model& model, const Tensor& x, const MethodSetup& setup) {
  if (x.rank() != 1) throw Error("dummy check needs a rank-1 explicand");
  const Model augmented = AppendDummyInput(model);
  const Tensor xp = Padded(x, kDummyValue);
  const Attribution att = Attribute(augmented, xp, PaddedSetup(setup));
  return std::abs(att.scores[x.size()]);
}

struct SymmetryGaps {
  double scores = 0.0;
  double path = 0.0;
};

SymmetryGaps SymmetryGap(const Tensor& x, const MethodSetup& setup) {
  if (x.shape() != Shape{2} || x[0] != x[1])
    throw Error("symmetry check needs a 2-feature explicand with x1 = x2");
  const Model model = SymmetricSumModel();
  SymmetryGaps g;
  const Attribution att = Attribute(model, x, setup);
  g.scores = std::abs(att.scores[0] - att.scores[1]);
  if (const std::optional<Path> path = MethodPath(model, x, setup))
    for (const Tensor& p : path->points) g.path = std::max(g.path, std::abs(p[0] - p[1]));
  return g;
}

std::vector<std::size_t> ReversedUnits(const Model& model) {
  const auto& layers = model.layers();
  if (layers.empty() || layers.front().spec.kind != LayerKind::kDense)
    throw Error("implementation-invariance check needs a dense first layer");
  std::vector<std::size_t> perm(layers.front().spec.out);
  std::iota(perm.rbegin(), perm.rend(), 0);
  return perm;
}

double InvarianceGap(const Model& model, const Tensor& x, const Attributor& attributor) {
  const Model twin = PermuteHiddenUnits(model, 0, ReversedUnits(model));
  return MaxAbsDiff(attributor(model, x), attributor(twin, x));
}

Attributor FromSetup(const MethodSetup& setup) {
  return [setup](const Model& m, const Tensor& x) { return Attribute(m, x, setup).scores; };
}

}  // namespace

AxiomReport CheckCompleteness(const Model& model, const Tensor& x, const MethodSetup& setup,
                              std::optional<double> tolerance) {
  const std::size_t output = setup.output.value_or(TargetOutput(model, x));
  const double tol = tolerance.value_or(kAxiomTolerances.completeness_relative *
                                        std::max(1.0, std::abs(Output(model, x, output))));
  return Finish(Axiom::kCompleteness, MethodName(setup.method), CompletenessGap(model, x, setup),
                tol, {{"x", TensorToJson(x)}, {"setup", SetupToJson(setup)}});
}

AxiomReport CheckDummy(const Model& model, const Tensor& x, const MethodSetup& setup) {
  return Finish(Axiom::kDummy, MethodName(setup.method), DummyGap(model, x, setup),
                kAxiomTolerances.dummy,
                {{"x", TensorToJson(x)}, {"dummy_value", kDummyValue}, {"setup", SetupToJson(setup)}});
}

AxiomReport CheckSymmetry(const Tensor& x, const MethodSetup& setup) {
  const SymmetryGaps g = SymmetryGap(x, setup);
  AxiomReport r = Finish(Axiom::kSymmetry, MethodName(setup.method), g.scores,
                         kAxiomTolerances.symmetry,
                         {{"x", TensorToJson(x)}, {"model", "symmetric-sum"},
                          {"path_gap", g.path}, {"setup", SetupToJson(setup)}});
  r.pass = r.pass && g.path <= kAxiomTolerances.symmetry_path;
  return r;
}

AxiomReport CheckImplementationInvariance(const Model& model, const Tensor& x,
                                          const MethodSetup& setup) {
  return Finish(Axiom::kImplementationInvariance, MethodName(setup.method),
                InvarianceGap(model, x, FromSetup(setup)),
                kAxiomTolerances.implementation_invariance,
                {{"x", TensorToJson(x)}, {"permutation", ReversedUnits(model)},
                 {"setup", SetupToJson(setup)}});
}

AxiomReport CheckImplementationInvariance(const Model& model, const Tensor& x,
                                          const std::string& name, const Attributor& attributor) {
  return Finish(Axiom::kImplementationInvariance, name, InvarianceGap(model, x, attributor),
                kAxiomTolerances.implementation_invariance,
                {{"x", TensorToJson(x)}, {"permutation", ReversedUnits(model)}});
}

Tensor FirstUnitWeightAttribution(const Model& model, const Tensor& x) {
  const Layer& first = model.layers().front();
  if (first.spec.kind != LayerKind::kDense) throw Error("weight attribution needs a dense first layer");
  Tensor scores(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) scores[i] = first.params[0][i] * x[i];
  return scores;
}

double ReplayGap(const AxiomReport& report, const Model& model) {
  const Tensor x = TensorFromJson(report.witness.at("x"));
  if (!report.witness.contains("setup"))
    throw Error("report for '" + report.method + "' carries no replayable setup");
  const MethodSetup setup = SetupFromJson(report.witness.at("setup"));
  switch (report.axiom) {
    case Axiom::kCompleteness: return CompletenessGap(model, x, setup);
    case Axiom::kDummy: return DummyGap(model, x, setup);
    case Axiom::kSymmetry: return SymmetryGap(x, setup).scores;
    case Axiom::kImplementationInvariance: return InvarianceGap(model, x, FromSetup(setup));
  }
  throw Error("unknown axiom");
}

}  // namespace pathgrad
