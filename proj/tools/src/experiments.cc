#include "pathgrad_cli/experiments.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "pathgrad/parallel.h"

namespace pathgrad::cli {

std::string ReferenceStrategyName(ReferenceStrategy s) {
  switch (s) {
    case ReferenceStrategy::kRandomCounterfactual: return "random-counterfactual";
    case ReferenceStrategy::kFixedList: return "fixed-list";
    case ReferenceStrategy::kAllOfClass: return "all-of-class";
  }
  return "unknown";
}

ReferenceStrategy ParseReferenceStrategy(const std::string& name) {
  for (ReferenceStrategy s : {ReferenceStrategy::kRandomCounterfactual, ReferenceStrategy::kFixedList,
                              ReferenceStrategy::kAllOfClass})
    if (ReferenceStrategyName(s) == name) return s;
  throw Error("unknown reference strategy '" + name + "'");
}

nlohmann::json ReferenceSelection::ToJson() const {
  return {{"strategy", ReferenceStrategyName(strategy)},
          {"count", count},
          {"indices", indices},
          {"class", cls ? nlohmann::json(*cls) : nlohmann::json()},
          {"seed", seed}};
}

namespace {

std::mt19937_64 StreamRng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> PredictAll(const Model& model, const Dataset& data,
                                    const std::vector<std::size_t>& pool) {
  std::vector<std::size_t> cls(pool.size());
  if (pool.empty()) return cls;
  const Tensor out = EvaluateBatch(model, data.Stack(pool));
  const std::size_t stride = out.size() / pool.size();
  for (std::size_t p = 0; p < pool.size(); ++p) {
    if (stride == 1) {
      cls[p] = out[p] > 0.0 ? 1 : 0;
    } else {
      const auto row = out.data().subspan(p * stride, stride);
      cls[p] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return cls;
}

// Partial Fisher-Yates: `count` distinct picks in draw order.
std::vector<std::size_t> Pick(std::vector<std::size_t> candidates, std::size_t count,
                              std::mt19937_64& rng) {
  count = std::min(count, candidates.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[d(rng)]);
  }
  candidates.resize(count);
  return candidates;
}

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<std::size_t> FirstOf(const std::vector<std::size_t>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

}  // namespace

std::vector<Tensor> SelectReferences(const Model& model, const Dataset& data,
                                     const std::vector<std::size_t>& pool, const Tensor& x,
                                     const ReferenceSelection& selection, std::uint64_t stream) {
  std::vector<Tensor> refs;
  if (selection.strategy == ReferenceStrategy::kFixedList) {
    if (selection.indices.empty()) throw Error("fixed-list references need at least one index");
    for (std::size_t i : selection.indices) {
      if (i >= data.size()) throw Error("reference index " + std::to_string(i) + " is out of range");
      refs.push_back(data.inputs[i]);
    }
    return refs;
  }
  const std::size_t own = PredictedClass(model, x);
  const std::vector<std::size_t> predicted = PredictAll(model, data, pool);
  if (selection.strategy == ReferenceStrategy::kAllOfClass) {
    const std::size_t classes = model.output_size() == 1 ? 2 : model.output_size();
    std::size_t target = own == 0 ? 1 : 0;
    if (selection.cls) target = *selection.cls;
    if (target >= classes) throw Error("reference class " + std::to_string(target) + " does not exist");
    for (std::size_t p = 0; p < pool.size(); ++p)
      if (predicted[p] == target) refs.push_back(data.inputs[pool[p]]);
    if (refs.empty()) throw Error("no pool sample is predicted as class " + std::to_string(target));
    return refs;
  }
  std::vector<std::size_t> candidates;
  for (std::size_t p = 0; p < pool.size(); ++p)
    if (predicted[p] != own) candidates.push_back(pool[p]);
  if (candidates.empty())
    throw Error("no counterfactual reference available: every pool sample shares the explicand's "
                "predicted class " + std::to_string(own));
  std::mt19937_64 rng = StreamRng(selection.seed, stream);
  for (std::size_t i : Pick(std::move(candidates), selection.count, rng)) refs.push_back(data.inputs[i]);
  return refs;
}

std::vector<Tensor> DrawSamples(const Dataset& data, const std::vector<std::size_t>& pool,
                                std::size_t count, std::uint64_t seed, std::uint64_t stream) {
  std::mt19937_64 rng = StreamRng(seed, stream);
  std::vector<Tensor> out;
  for (std::size_t i : Pick(pool, count, rng)) out.push_back(data.inputs[i]);
  return out;
}

ModelSpec SpecOf(const Model& model, std::uint64_t seed) {
  ModelSpec spec;
  spec.input_shape = model.input_shape();
  for (const Layer& l : model.layers()) spec.layers.push_back(l.spec);
  spec.representation_tap = model.representation_tap();
  spec.seed = seed;
  return spec;
}

MethodSetup SetupFor(Method method, const AttributionConfig& base, std::vector<Tensor> references,
                     std::uint64_t seed) {
  MethodSetup s;
  s.method = method;
  s.config = base;
  s.config.references = std::move(references);
  s.seed = seed;
  return s;
}

nlohmann::json XaiBenchOptions::ToJson() const {
  nlohmann::json m = nlohmann::json::array();
  for (Method x : methods) m.push_back(MethodName(x));
  return {{"methods", m},
          {"explicands", explicands},
          {"background", background},
          {"shapley_explicands", shapley_explicands},
          {"roar", roar},
          {"roar_train", roar_train},
          {"roar_epochs", roar_train_config.epochs},
          {"roar_learning_rate", roar_train_config.learning_rate},
          {"attribution", attribution.ToJson()},
          {"references", references.ToJson()},
          {"seed", seed}};
}

nlohmann::json MetricTable::ToJson() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const MetricRow& r : rows) {
    nlohmann::json row{{"method", r.method}};
    for (const auto& [k, v] : r.values) row[k] = v;
    rows_json.push_back(row);
  }
  return {{"columns", columns}, {"rows", rows_json}};
}

std::string MetricTable::Csv(const std::string& provenance_line) const {
  std::string out = "# " + provenance_line + "\nmethod";
  for (const std::string& c : columns) out += "," + c;
  out += "\n";
  for (const MetricRow& r : rows) {
    out += r.method;
    for (const auto& [k, v] : r.values) out += "," + FormatDouble(v);
    out += "\n";
  }
  return out;
}

double MetricTable::Get(const std::string& method, const std::string& column) const {
  for (const MetricRow& r : rows)
    if (r.method == method)
      for (const auto& [k, v] : r.values)
        if (k == column) return v;
  throw Error("metric table has no entry " + method + "/" + column);
}

MetricTable RunXaiBenchTable(const Model& model, const Dataset& data, const XaiBenchOptions& options) {
  data.Validate();
  if (model.input_shape() != data.inputs.front().shape())
    throw Error("model input " + ShapeString(model.input_shape()) + " does not match dataset samples " +
                ShapeString(data.inputs.front().shape()));
  const Split split = SplitIndices(data.size());
  const std::vector<std::size_t> explain = FirstOf(split.heldout, options.explicands);
  if (explain.empty()) throw Error("no held-out samples to explain");
  std::vector<Tensor> inputs;
  for (std::size_t i : explain) inputs.push_back(data.inputs[i]);

  MetricConfig mc;
  mc.seed = options.seed;
  mc.background = DrawSamples(data, split.train, options.background, options.seed, ~0ull);

  std::vector<std::vector<Tensor>> refs(inputs.size());
  for (std::size_t e = 0; e < inputs.size(); ++e)
    refs[e] = SelectReferences(model, data, split.train, inputs[e], options.references, e);

  const std::size_t n_shapley = std::min(options.shapley_explicands, inputs.size());
  std::vector<ShapleyResult> shapley(n_shapley);
  ParallelFor(n_shapley, [&](std::size_t e) {
    shapley[e] = ExactShapley(model, inputs[e], {mc.background, 0, options.seed});
  });

  std::vector<std::size_t> roar_train = FirstOf(split.train, options.roar_train);
  std::vector<std::vector<Tensor>> roar_refs(roar_train.size());
  if (options.roar)
    for (std::size_t t = 0; t < roar_train.size(); ++t)
      roar_refs[t] = SelectReferences(model, data, split.train, data.inputs[roar_train[t]],
                                      options.references, inputs.size() + t);

  MetricTable table;
  table.columns = {"faithfulness", "monotonicity"};
  if (options.roar) table.columns.push_back("roar");
  table.columns.insert(table.columns.end(), {"gt_shapley", "infidelity"});

  for (Method method : options.methods) {
    auto attribute = [&](const Tensor& x, const std::vector<Tensor>& r, std::uint64_t stream) {
      return Attribute(model, x, SetupFor(method, options.attribution, r, options.seed * 1000003 + stream))
          .scores;
    };
    std::vector<Tensor> attrs(inputs.size());
    ParallelFor(inputs.size(), [&](std::size_t e) { attrs[e] = attribute(inputs[e], refs[e], e); });

    MetricRow row{MethodName(method), {}};
    row.values.emplace_back("faithfulness", MetricFaithfulness(attrs, model, inputs, mc));
    row.values.emplace_back("monotonicity", MetricMonotonicity(attrs, model, inputs, mc));
    if (options.roar) {
      std::vector<Tensor> train_attrs(roar_train.size());
      ParallelFor(roar_train.size(), [&](std::size_t t) {
        train_attrs[t] = attribute(data.inputs[roar_train[t]], roar_refs[t], inputs.size() + t);
      });
      RoarConfig rc;
      rc.model_spec = SpecOf(model, options.seed);
      rc.train = options.roar_train_config;
      const RoarResult rr =
          MetricRoar(train_attrs, attrs, data.Subset(roar_train), data.Subset(explain), rc);
      row.values.emplace_back("roar", rr.score);
    }
    row.values.emplace_back(
        "gt_shapley", n_shapley == 0 ? 0.0
                                     : MetricGtShapley(std::span(attrs).first(n_shapley), shapley));
    row.values.emplace_back("infidelity", MetricInfidelity(attrs, model, inputs, mc));
    table.rows.push_back(std::move(row));
  }
  return table;
}

nlohmann::json ImageEvalOptions::ToJson() const {
  nlohmann::json m = nlohmann::json::array();
  for (Method x : methods) m.push_back(MethodName(x));
  return {{"methods", m},
          {"explicands", explicands},
          {"attribution", attribution.ToJson()},
          {"references", references.ToJson()},
          {"seed", seed}};
}

namespace {

struct ImageMetrics {
  double gt_auc = 0.0, gt_sum = 0.0;
  PerturbationCurve add, del;
};

ImageMetrics MeasureImage(const Model& model, const Tensor& x, const Tensor& scores,
                          const Tensor& mask) {
  const std::vector<double> grid = UniformGrid(21);
  const Tensor background(x.shape());
  ImageMetrics m;
  m.gt_auc = GroundTruthAuc(scores, {mask});
  m.gt_sum = GroundTruthSum(scores, {mask});
  m.add = SicCurve(model, x, scores, background, SicDirection::kAdd, grid);
  m.del = SicCurve(model, x, scores, background, SicDirection::kDelete, grid);
  return m;
}

struct Explicands {
  std::vector<Tensor> inputs;
  std::vector<Tensor> masks;
  std::vector<std::vector<Tensor>> refs;
  std::vector<std::size_t> train_pool;
};

Explicands PrepareImages(const Model& model, const ImageDataset& images,
                         const ImageEvalOptions& options) {
  const Dataset& data = images.data;
  data.Validate();
  if (images.masks.size() != data.size()) throw Error("image evaluation needs a mask per sample");
  if (model.input_shape() != data.inputs.front().shape())
    throw Error("model input " + ShapeString(model.input_shape()) + " does not match dataset samples " +
                ShapeString(data.inputs.front().shape()));
  const Split split = SplitIndices(data.size());
  Explicands ex;
  ex.train_pool = split.train;
  for (std::size_t i : FirstOf(split.heldout, options.explicands)) {
    ex.inputs.push_back(data.inputs[i]);
    ex.masks.push_back(images.masks[i]);
  }
  if (ex.inputs.empty()) throw Error("no held-out samples to explain");
  ex.refs.resize(ex.inputs.size());
  for (std::size_t e = 0; e < ex.inputs.size(); ++e)
    ex.refs[e] = SelectReferences(model, data, split.train, ex.inputs[e], options.references, e);
  return ex;
}

MetricRow Summarize(const std::string& name, const std::vector<ImageMetrics>& per) {
  std::vector<double> auc, sum, add, del;
  for (const ImageMetrics& m : per) {
    auc.push_back(m.gt_auc);
    sum.push_back(m.gt_sum);
    add.push_back(m.add.auc);
    del.push_back(m.del.auc);
  }
  return {name, {{"gt_auc", Mean(auc)}, {"gt_sum", Mean(sum)}, {"sic_add", Mean(add)},
                 {"sic_delete", Mean(del)}}};
}

}  // namespace

ImageEvalResult RunImageEvaluation(const Model& model, const ImageDataset& images,
                                   const ImageEvalOptions& options) {
  const Explicands ex = PrepareImages(model, images, options);
  const std::size_t n = ex.inputs.size();
  ImageEvalResult result;
  result.table.columns = {"gt_auc", "gt_sum", "sic_add", "sic_delete"};
  result.curves_csv = "method,direction,alpha,value\n";
  for (Method method : options.methods) {
    std::vector<ImageMetrics> per(n);
    ParallelFor(n, [&](std::size_t e) {
      const Tensor scores =
          Attribute(model, ex.inputs[e],
                    SetupFor(method, options.attribution, ex.refs[e], options.seed * 1000003 + e))
              .scores;
      per[e] = MeasureImage(model, ex.inputs[e], scores, ex.masks[e]);
    });
    result.table.rows.push_back(Summarize(MethodName(method), per));
    for (const char* dir : {"add", "delete"}) {
      const PerturbationCurve& first = dir[0] == 'a' ? per[0].add : per[0].del;
      for (std::size_t g = 0; g < first.thresholds.size(); ++g) {
        double v = 0.0;
        for (const ImageMetrics& m : per) v += (dir[0] == 'a' ? m.add : m.del).values[g];
        result.curves_csv += MethodName(method) + "," + dir + "," + FormatDouble(first.thresholds[g]) +
                             "," + FormatDouble(v / static_cast<double>(n)) + "\n";
      }
    }
  }
  std::vector<double> straight(n), gradpath(n);
  ParallelFor(n, [&](std::size_t e) {
    const Tensor& x = ex.inputs[e];
    const std::size_t cls = PredictedClass(model, x);
    const Path sl = StraightLinePath(x, Tensor(x.shape()), options.attribution.steps);
    const Path gp = GradPath(model, x, ex.refs[e].front(), options.attribution).path;
    straight[e] = DropProgress(SaturationCurve(model, sl, cls), 0.5);
    gradpath[e] = DropProgress(SaturationCurve(model, gp, cls), 0.5);
  });
  result.straight_drop = Mean(straight);
  result.gradpath_drop = Mean(gradpath);
  return result;
}

MetricTable RunAblationGrid(const Model& model, const ImageDataset& images,
                            const ImageEvalOptions& options) {
  const Explicands ex = PrepareImages(model, images, options);
  const std::size_t n = ex.inputs.size();
  const AttributionConfig& cfg = options.attribution;
  const std::vector<std::pair<std::string, std::string>> cells{
      {"straight", "zero"},   {"straight", "train-data"}, {"straight", "gradcf"},
      {"guided", "zero"},     {"guided", "train-data"},   {"guided", "gradcf"},
      {"gradpath", "gradcf"}};
  std::vector<std::vector<ImageMetrics>> per(cells.size(), std::vector<ImageMetrics>(n));
  ParallelFor(n, [&](std::size_t e) {
    const Tensor& x = ex.inputs[e];
    const std::size_t out = TargetOutput(model, x);
    const Tensor zero(x.shape());
    const std::vector<Tensor> samples =
        DrawSamples(images.data, ex.train_pool, ex.refs[e].size(), options.seed, e);
    std::vector<Tensor> gradcfs;
    for (const Tensor& r : ex.refs[e]) gradcfs.push_back(GradPath(model, x, r, cfg).gradcf);
    auto guided_mean = [&](const std::vector<Tensor>& baselines) {
      Tensor acc(x.shape());
      for (const Tensor& b : baselines)
        AddInPlace(acc, GuidedIG(model, x, b, cfg.steps, cfg.guided_fraction, out, cfg.scheme).scores);
      return (1.0 / static_cast<double>(baselines.size())) * acc;
    };
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& [path, base] = cells[c];
      Tensor scores;
      if (path == "straight") {
        if (base == "zero") scores = IntegratedGradients(model, x, zero, cfg.steps, out, cfg.scheme).scores;
        else scores = ExpectedIG(model, x, base == "gradcf" ? gradcfs : samples, cfg.steps, out, cfg.scheme).scores;
      } else if (path == "guided") {
        scores = base == "zero" ? guided_mean({zero}) : guided_mean(base == "gradcf" ? gradcfs : samples);
      } else {
        scores = ExpectedIG2(model, x, ex.refs[e], cfg, out).scores;
      }
      per[c][e] = MeasureImage(model, x, scores, ex.masks[e]);
    }
  });
  MetricTable table;
  table.columns = {"gt_auc", "gt_sum", "sic_add", "sic_delete"};
  for (std::size_t c = 0; c < cells.size(); ++c)
    table.rows.push_back(Summarize(cells[c].first + "/" + cells[c].second, per[c]));
  return table;
}

bool AxiomSuiteResult::AllAsExpected() const {
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (reports[i].pass == expect_fail[i]) return false;
  return true;
}

nlohmann::json AxiomSuiteResult::ToJson() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    nlohmann::json r = reports[i].ToJson();
    r["negative_control"] = static_cast<bool>(expect_fail[i]);
    r["as_expected"] = reports[i].pass != expect_fail[i];
    out.push_back(r);
  }
  return {{"reports", out}, {"all_as_expected", AllAsExpected()}};
}

AxiomSuiteResult RunAxiomSuite(const Model& model, const Dataset& data,
                               const AttributionConfig& attribution, std::size_t explicands,
                               std::uint64_t seed) {
  if (model.input_shape().size() != 1)
    throw Error("the axiom suite needs a model with rank-1 input");
  data.Validate();
  const Split split = SplitIndices(data.size());
  const std::vector<std::size_t> explain = FirstOf(split.heldout, explicands);
  if (explain.empty()) throw Error("no held-out samples to check");
  ReferenceSelection one;
  one.count = 1;
  one.seed = seed;
  ReferenceSelection many;
  many.seed = seed;

  AxiomSuiteResult suite;
  auto add = [&](AxiomReport r, bool negative) {
    suite.reports.push_back(std::move(r));
    suite.expect_fail.push_back(negative);
  };

  for (std::size_t e = 0; e < explain.size(); ++e) {
    const Tensor& x = data.inputs[explain[e]];
    const auto ref = SelectReferences(model, data, split.train, x, one, e);
    for (Method m : {Method::kIntegratedGradients, Method::kGuidedIG, Method::kIG2})
      add(CheckCompleteness(model, x, SetupFor(m, attribution, ref, seed)), false);
  }

  // Toy models: exact on the piecewise-linear max, smooth for IG2.
  const Model toy = ToyMaxModel();
  const Tensor toy_x = Tensor::Vector({3.0, 3.0});
  for (Method m : {Method::kIntegratedGradients, Method::kGuidedIG})
    add(CheckCompleteness(toy, toy_x, SetupFor(m, attribution, {}, seed)), false);
  add(CheckCompleteness(toy, toy_x, SetupFor(Method::kVanillaGradient, attribution, {}, seed)), true);
  const Model sym = SymmetricSumModel();
  add(CheckCompleteness(sym, Tensor::Vector({0.8, -0.3}),
                        SetupFor(Method::kIG2, attribution, {Tensor::Vector({-1.0, -1.5})}, seed)),
      false);

  const Tensor& x0 = data.inputs[explain.front()];
  const auto refs = SelectReferences(model, data, split.train, x0, many, 0);
  for (Method m : {Method::kIG2, Method::kGradCFE, Method::kExpectedIG2, Method::kExpectedIG})
    add(CheckDummy(model, x0, SetupFor(m, attribution, refs, seed)), false);

  const Tensor xs = Tensor::Vector({0.6, 0.6});
  add(CheckSymmetry(xs, SetupFor(Method::kIG2, attribution, {Tensor::Vector({-1.0, -1.0})}, seed)), false);
  add(CheckSymmetry(xs, SetupFor(Method::kIntegratedGradients, attribution, {}, seed)), false);
  MethodSetup skewed = SetupFor(Method::kIntegratedGradients, attribution, {}, seed);
  skewed.baseline = Tensor::Vector({1.0, 0.0});
  add(CheckSymmetry(xs, skewed), true);

  const auto ref0 = SelectReferences(model, data, split.train, x0, one, 0);
  for (Method m : {Method::kIntegratedGradients, Method::kIG2})
    add(CheckImplementationInvariance(model, x0, SetupFor(m, attribution, ref0, seed)), false);
  add(CheckImplementationInvariance(model, x0, "first-unit-weights", FirstUnitWeightAttribution), true);
  return suite;
}

}  // namespace pathgrad::cli
