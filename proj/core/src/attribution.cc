#include "pathgrad/attribution.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "pathgrad/log.h"
#include "pathgrad/parallel.h"

namespace pathgrad {
namespace {

constexpr double kVanishingGradient = 1e-12;

double OutputValue(const Model& model, const Tensor& x, std::size_t output) {
  return Evaluate(model, x).output.data()[output];
}

bool AllZero(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
}

// Indices of the top_k largest |g| entries; ties keep the lower index first.
std::vector<std::size_t> TopKByMagnitude(const Tensor& g, std::size_t top_k) {
  std::vector<std::size_t> idx(g.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); });
  idx.resize(std::min(top_k, idx.size()));
  return idx;
}

Attribution MeanOf(std::vector<Attribution> parts, Method method, nlohmann::json config) {
  Attribution out;
  out.method = method;
  out.config = std::move(config);
  out.scores = Tensor(parts.front().scores.shape());
  double gap = 0.0;
  bool has_gap = true;
  for (Attribution& p : parts) {
    AddInPlace(out.scores, p.scores);
    if (p.completeness_gap) gap += *p.completeness_gap; else has_gap = false;
    for (Tensor& b : p.baselines) out.baselines.push_back(std::move(b));
    out.per_reference.push_back(std::move(p.scores));
  }
  const double n = static_cast<double>(parts.size());
  out.scores = (1.0 / n) * out.scores;
  if (has_gap) out.completeness_gap = gap / n;
  return out;
}

}  // namespace

void AttributionConfig::Validate(std::size_t n_features) const {
  if (!(step_size > 0.0)) throw Error("step size must be positive");
  if (steps < 1) throw Error("step count must be at least 1");
  if (norm == Normalization::kL1 && (top_k < 1 || top_k > n_features))
    throw Error("l1 top-k count " + std::to_string(top_k) + " must lie in [1, " +
                std::to_string(n_features) + "]");
  if (!(guided_fraction > 0.0 && guided_fraction <= 1.0))
    throw Error("guided fraction must lie in (0, 1]");
}

nlohmann::json AttributionConfig::ToJson() const {
  nlohmann::json j;
  j["step_size"] = step_size;
  j["steps"] = steps;
  j["norm"] = NormalizationName(norm);
  j["top_k"] = top_k;
  j["measure"] = DistanceMeasureName(measure);
  j["representation_tap"] = representation_tap ? nlohmann::json(*representation_tap) : nlohmann::json();
  j["scheme"] = SchemeName(scheme);
  j["references"] = references.size();
  j["allow_same_class_references"] = allow_same_class_references;
  j["guided_fraction"] = guided_fraction;
  return j;
}

std::string MethodName(Method m) {
  switch (m) {
    case Method::kVanillaGradient: return "gradient";
    case Method::kIntegratedGradients: return "ig";
    case Method::kExpectedIG: return "expected-ig";
    case Method::kGuidedIG: return "guided-ig";
    case Method::kIG2: return "ig2";
    case Method::kExpectedIG2: return "expected-ig2";
    case Method::kGradCFE: return "gradcfe";
    case Method::kRandom: return "random";
  }
  return "unknown";
}

Method ParseMethod(const std::string& name) {
  for (Method m : {Method::kVanillaGradient, Method::kIntegratedGradients, Method::kExpectedIG,
                   Method::kGuidedIG, Method::kIG2, Method::kExpectedIG2, Method::kGradCFE,
                   Method::kRandom})
    if (MethodName(m) == name) return m;
  throw Error("unknown attribution method '" + name + "'");
}

std::string NormalizationName(Normalization n) { return n == Normalization::kL2 ? "l2" : "l1"; }

Normalization ParseNormalization(const std::string& name) {
  if (name == "l2") return Normalization::kL2;
  if (name == "l1") return Normalization::kL1;
  throw Error("unknown normalization '" + name + "'");
}

std::string SchemeName(DifferenceScheme s) {
  switch (s) {
    case DifferenceScheme::kForward: return "forward";
    case DifferenceScheme::kBackward: return "backward";
    case DifferenceScheme::kTrapezoid: return "trapezoid";
  }
  return "unknown";
}

DifferenceScheme ParseScheme(const std::string& name) {
  if (name == "forward") return DifferenceScheme::kForward;
  if (name == "backward") return DifferenceScheme::kBackward;
  if (name == "trapezoid") return DifferenceScheme::kTrapezoid;
  throw Error("unknown difference scheme '" + name + "'");
}

std::size_t TargetOutput(const Model& model, const Tensor& x) {
  return model.output_size() == 1 ? 0 : PredictedClass(model, x);
}

Model WithTap(const Model& model, const AttributionConfig& config) {
  Model m = model;
  if (config.representation_tap) m.set_representation_tap(*config.representation_tap);
  return m;
}

Path StraightLinePath(const Tensor& x, const Tensor& baseline, int steps) {
  if (steps < 1) throw Error("straight-line path needs at least 1 step");
  CheckSameShape(x, baseline, "straight-line path");
  Path path;
  path.kind = PathKind::kStraight;
  const Tensor delta = x - baseline;
  for (int j = 0; j < steps; ++j) {
    const double alpha = static_cast<double>(j) / static_cast<double>(steps);
    Tensor p = baseline;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = baseline[i] + alpha * delta[i];
    path.points.push_back(std::move(p));
  }
  path.points.push_back(x);
  return path;
}

Attribution IntegrateOnPath(const Model& model, const Path& path, std::size_t output,
                            DifferenceScheme scheme) {
  if (path.points.empty()) throw Error("cannot integrate over an empty path");
  const Tensor& x = path.explicand();
  if (x.shape() != model.input_shape())
    throw Error("path points " + ShapeString(x.shape()) + " do not match model input " +
                ShapeString(model.input_shape()));
  if (output >= model.output_size()) throw Error("output index out of range");
  const ScalarSelector selector = ScalarSelector::Output(output);
  Attribution att;
  att.scores = Tensor(x.shape());
  // Gradient at points[j], kept while consecutive segments share it.
  std::optional<std::pair<std::size_t, Tensor>> cached;
  auto grad_at = [&](std::size_t j) -> const Tensor& {
    if (!cached || cached->first != j) cached.emplace(j, InputGradient(model, path.points[j], selector));
    return cached->second;
  };
  for (std::size_t j = 0; j + 1 < path.points.size(); ++j) {
    const Tensor step = path.points[j + 1] - path.points[j];
    if (AllZero(step)) continue;
    switch (scheme) {
      case DifferenceScheme::kForward:
        AddInPlace(att.scores, Hadamard(grad_at(j), step));
        break;
      case DifferenceScheme::kBackward:
        AddInPlace(att.scores, Hadamard(grad_at(j + 1), step));
        break;
      case DifferenceScheme::kTrapezoid: {
        const Tensor left = grad_at(j);
        AddInPlace(att.scores, Hadamard(0.5 * (left + grad_at(j + 1)), step));
        break;
      }
    }
  }
  att.baselines = {path.baseline()};
  att.completeness_gap =
      Sum(att.scores) - (OutputValue(model, x, output) - OutputValue(model, path.baseline(), output));
  att.config = {{"path", path.kind == PathKind::kStraight  ? "straight"
                         : path.kind == PathKind::kGuided ? "guided"
                                                           : "gradpath"},
                {"steps", path.steps()},
                {"scheme", SchemeName(scheme)},
                {"output", output}};
  return att;
}

GradPathResult GradPath(const Model& model, const Tensor& x, const Tensor& reference,
                        const AttributionConfig& config) {
  CheckSameShape(x, reference, "gradpath reference");
  config.Validate(x.size());
  const Model m = WithTap(model, config);
  const Tensor reference_rep = Representation(m, reference);
  const ScalarSelector objective =
      ScalarSelector::RepresentationDistance(reference_rep, config.measure);

  const int k = config.steps;
  std::vector<Tensor> iterates{x};
  std::vector<double> weights;
  Tensor cur = x;
  bool stalled = false;
  int active = 0;
  for (int s = 0; s < k; ++s) {
    if (!stalled) {
      const Tensor g = InputGradient(m, cur, objective);
      const double gnorm = L2Norm(g);
      if (gnorm < kVanishingGradient) {
        stalled = true;
        if (s == 0 && !(Representation(m, x) == reference_rep))
          Warn("GradPath objective gradient vanished at the explicand although its representation "
               "differs from the reference; path stays at the explicand");
      } else if (config.norm == Normalization::kL2) {
        const double coef = config.step_size / gnorm;
        for (std::size_t i = 0; i < cur.size(); ++i) cur[i] -= coef * g[i];
        weights.push_back(coef);
        ++active;
      } else {
        const std::vector<std::size_t> picked = TopKByMagnitude(g, config.top_k);
        const double coef = config.step_size / static_cast<double>(picked.size());
        for (std::size_t i : picked) cur[i] -= coef * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
        weights.push_back(coef);
        ++active;
      }
    }
    if (stalled) weights.push_back(0.0);
    iterates.push_back(cur);
  }
  std::reverse(iterates.begin(), iterates.end());
  std::reverse(weights.begin(), weights.end());
  GradPathResult result;
  result.gradcf = iterates.front();
  result.path.kind = PathKind::kGradPath;
  result.path.points = std::move(iterates);
  result.path.step_weights = std::move(weights);
  result.active_steps = active;
  return result;
}

Attribution GradCfe(const Tensor& x, const Tensor& gradcf) {
  CheckSameShape(x, gradcf, "gradcfe");
  Attribution att;
  att.method = Method::kGradCFE;
  att.scores = x - gradcf;
  att.baselines = {gradcf};
  return att;
}

Attribution IG2(const Model& model, const Tensor& x, const Tensor& reference,
                const AttributionConfig& config, std::size_t output) {
  const GradPathResult gp = GradPath(model, x, reference, config);
  Attribution att = IntegrateOnPath(model, gp.path, output, config.scheme);
  att.method = Method::kIG2;
  nlohmann::json cfg = config.ToJson();
  cfg["active_steps"] = gp.active_steps;
  cfg["output"] = output;
  att.config = std::move(cfg);
  return att;
}

Attribution ExpectedIG2(const Model& model, const Tensor& x, std::span<const Tensor> references,
                        const AttributionConfig& config, std::size_t output) {
  if (references.empty()) throw Error("expected IG2 needs at least one reference");
  if (!config.allow_same_class_references) {
    const std::size_t cls = PredictedClass(model, x);
    for (std::size_t r = 0; r < references.size(); ++r)
      if (PredictedClass(model, references[r]) == cls)
        throw Error("reference " + std::to_string(r) + " has the explicand's predicted class " +
                    std::to_string(cls) + "; counterfactual references are required");
  }
  std::vector<Attribution> parts(references.size());
  ParallelFor(references.size(),
              [&](std::size_t r) { parts[r] = IG2(model, x, references[r], config, output); });
  nlohmann::json cfg = config.ToJson();
  cfg["references"] = references.size();
  cfg["output"] = output;
  return MeanOf(std::move(parts), Method::kExpectedIG2, std::move(cfg));
}

Attribution IntegratedGradients(const Model& model, const Tensor& x, const Tensor& baseline,
                                int steps, std::size_t output, DifferenceScheme scheme) {
  Attribution att = IntegrateOnPath(model, StraightLinePath(x, baseline, steps), output, scheme);
  att.method = Method::kIntegratedGradients;
  return att;
}

Attribution ExpectedIG(const Model& model, const Tensor& x, std::span<const Tensor> references,
                       int steps, std::size_t output, DifferenceScheme scheme) {
  if (references.empty()) throw Error("expected IG needs at least one reference");
  std::vector<Attribution> parts(references.size());
  ParallelFor(references.size(), [&](std::size_t r) {
    parts[r] = IntegratedGradients(model, x, references[r], steps, output, scheme);
  });
  return MeanOf(std::move(parts), Method::kExpectedIG,
                {{"path", "straight"}, {"steps", steps}, {"scheme", SchemeName(scheme)},
                 {"references", references.size()}, {"output", output}});
}

Path GuidedIgPath(const Model& model, const Tensor& x, const Tensor& baseline, int steps,
                  double fraction, std::size_t output) {
  if (steps < 1) throw Error("guided IG path needs at least 1 step");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("guided fraction must lie in (0, 1]");
  CheckSameShape(x, baseline, "guided IG path");
  const std::size_t n = x.size();
  const double budget = L1Norm(x - baseline) / static_cast<double>(steps);
  const ScalarSelector selector = ScalarSelector::Output(output);

  std::vector<Tensor> iterates{x};
  Tensor cur = x;
  for (int s = 0; s < steps; ++s) {
    if (s == steps - 1) {
      iterates.push_back(baseline);
      break;
    }
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < n; ++i)
      if (cur[i] != baseline[i]) open.push_back(i);
    if (open.empty()) {
      iterates.push_back(cur);
      continue;
    }
    const Tensor g = InputGradient(model, cur, selector);
    std::stable_sort(open.begin(), open.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(g[a]) < std::abs(g[b]);
    });
    const std::size_t quota = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(open.size()))));
    std::size_t admitted = std::min(quota, open.size());
    double remaining = budget;
    while (remaining > budget * 1e-12) {
      std::vector<std::size_t> active;
      for (std::size_t r = 0; r < admitted; ++r)
        if (cur[open[r]] != baseline[open[r]]) active.push_back(open[r]);
      if (active.empty()) {
        if (admitted == open.size()) break;
        ++admitted;
        continue;
      }
      const double share = remaining / static_cast<double>(active.size());
      for (std::size_t i : active) {
        const double gap = std::abs(cur[i] - baseline[i]);
        if (share >= gap) {
          cur[i] = baseline[i];
          remaining -= gap;
        } else {
          cur[i] += cur[i] > baseline[i] ? -share : share;
          remaining -= share;
        }
      }
    }
    iterates.push_back(cur);
  }
  std::reverse(iterates.begin(), iterates.end());
  Path path;
  path.kind = PathKind::kGuided;
  path.points = std::move(iterates);
  return path;
}

Attribution GuidedIG(const Model& model, const Tensor& x, const Tensor& baseline, int steps,
                     double fraction, std::size_t output, DifferenceScheme scheme) {
  Attribution att = IntegrateOnPath(model, GuidedIgPath(model, x, baseline, steps, fraction, output),
                                    output, scheme);
  att.method = Method::kGuidedIG;
  att.config["fraction"] = fraction;
  return att;
}

Attribution VanillaGradient(const Model& model, const Tensor& x, std::size_t output) {
  Attribution att;
  att.method = Method::kVanillaGradient;
  att.scores = InputGradient(model, x, ScalarSelector::Output(output));
  att.baselines = {Tensor(x.shape())};
  att.config = {{"output", output}};
  return att;
}

Attribution RandomAttribution(const Shape& shape, std::uint64_t seed) {
  Attribution att;
  att.method = Method::kRandom;
  att.scores = Tensor(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : att.scores.data()) v = dist(rng);
  att.config = {{"seed", seed}};
  return att;
}

}  // namespace pathgrad

namespace pathgrad {

namespace {

Tensor BaselineFor(const Tensor& x, const MethodSetup& setup) {
  if (!setup.baseline) return Tensor(x.shape());
  CheckSameShape(x, *setup.baseline, "baseline");
  return *setup.baseline;
}

const Tensor& FirstReference(const MethodSetup& setup) {
  if (setup.config.references.empty())
    throw Error(MethodName(setup.method) + " needs at least one reference");
  return setup.config.references.front();
}

}  // namespace

Attribution Attribute(const Model& model, const Tensor& x, const MethodSetup& setup) {
  const std::size_t output = setup.output.value_or(TargetOutput(model, x));
  const AttributionConfig& cfg = setup.config;
  switch (setup.method) {
    case Method::kVanillaGradient:
      return VanillaGradient(model, x, output);
    case Method::kIntegratedGradients:
      return IntegratedGradients(model, x, BaselineFor(x, setup), cfg.steps, output, cfg.scheme);
    case Method::kExpectedIG:
      return ExpectedIG(model, x, cfg.references, cfg.steps, output, cfg.scheme);
    case Method::kGuidedIG:
      return GuidedIG(model, x, BaselineFor(x, setup), cfg.steps, cfg.guided_fraction, output,
                      cfg.scheme);
    case Method::kIG2:
      return IG2(model, x, FirstReference(setup), cfg, output);
    case Method::kExpectedIG2:
      return ExpectedIG2(model, x, cfg.references, cfg, output);
    case Method::kGradCFE: {
      FirstReference(setup);
      std::vector<Attribution> parts(cfg.references.size());
      ParallelFor(cfg.references.size(), [&](std::size_t r) {
        parts[r] = GradCfe(x, GradPath(model, x, cfg.references[r], cfg).gradcf);
      });
      Attribution att = MeanOf(std::move(parts), Method::kGradCFE, cfg.ToJson());
      return att;
    }
    case Method::kRandom:
      return RandomAttribution(x.shape(), setup.seed);
  }
  throw Error("unhandled attribution method");
}

std::optional<Path> MethodPath(const Model& model, const Tensor& x, const MethodSetup& setup) {
  const std::size_t output = setup.output.value_or(TargetOutput(model, x));
  switch (setup.method) {
    case Method::kIntegratedGradients:
      return StraightLinePath(x, BaselineFor(x, setup), setup.config.steps);
    case Method::kGuidedIG:
      return GuidedIgPath(model, x, BaselineFor(x, setup), setup.config.steps,
                          setup.config.guided_fraction, output);
    case Method::kIG2:
      return GradPath(model, x, FirstReference(setup), setup.config).path;
    default:
      return std::nullopt;
  }
}

nlohmann::json TensorToJson(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

Tensor TensorFromJson(const nlohmann::json& j) {
  return Tensor::FromExternal(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
}

nlohmann::json SetupToJson(const MethodSetup& setup) {
  nlohmann::json j;
  j["method"] = MethodName(setup.method);
  j["config"] = setup.config.ToJson();
  nlohmann::json refs = nlohmann::json::array();
  for (const Tensor& r : setup.config.references) refs.push_back(TensorToJson(r));
  j["config"]["references"] = refs;
  j["baseline"] = setup.baseline ? TensorToJson(*setup.baseline) : nlohmann::json();
  j["seed"] = setup.seed;
  j["output"] = setup.output ? nlohmann::json(*setup.output) : nlohmann::json();
  return j;
}

MethodSetup SetupFromJson(const nlohmann::json& j) {
  MethodSetup s;
  s.method = ParseMethod(j.at("method").get<std::string>());
  const nlohmann::json& c = j.at("config");
  s.config.step_size = c.at("step_size").get<double>();
  s.config.steps = c.at("steps").get<int>();
  s.config.norm = ParseNormalization(c.at("norm").get<std::string>());
  s.config.top_k = c.at("top_k").get<std::size_t>();
  s.config.measure = ParseDistanceMeasure(c.at("measure").get<std::string>());
  if (!c.at("representation_tap").is_null())
    s.config.representation_tap = c.at("representation_tap").get<int>();
  s.config.scheme = ParseScheme(c.at("scheme").get<std::string>());
  for (const nlohmann::json& r : c.at("references")) s.config.references.push_back(TensorFromJson(r));
  s.config.allow_same_class_references = c.at("allow_same_class_references").get<bool>();
  s.config.guided_fraction = c.at("guided_fraction").get<double>();
  if (!j.at("baseline").is_null()) s.baseline = TensorFromJson(j.at("baseline"));
  s.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("output").is_null()) s.output = j.at("output").get<std::size_t>();
  return s;
}

}  // namespace pathgrad
