#include "pathgrad_cli/cli.h"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <sstream>

#include "pathgrad/pnm.h"
#include "pathgrad/version.h"
#include "pathgrad/weights_io.h"
#include "pathgrad_cli/experiments.h"

namespace pathgrad::cli {

namespace {

struct SynthArgs {
  std::string kind;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  std::size_t side = 16;
  double noise = 0.1;
  double field = 0.0;
};

struct TrainArgs {
  std::string data, out, arch = "auto";
  int epochs = 0;
  double lr = 0.0, momentum = 0.9;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

// Attribution flags shared by attribute and evaluate.
struct PathArgs {
  double eta = 0.01;
  int steps = 500;
  std::string norm = "l2", measure = "euclidean", scheme = "trapezoid";
  std::size_t top_k = 1;
  int tap = -2;  // -2 keeps the model's tap
  double guided_fraction = 0.1;
  std::string references = "random-counterfactual";
  std::size_t n_references = 8;
  std::vector<std::size_t> reference_index;
  int reference_class = -1;

  AttributionConfig Config() const {
    AttributionConfig c;
    c.step_size = eta;
    c.steps = steps;
    c.norm = ParseNormalization(norm);
    c.top_k = top_k;
    c.measure = ParseDistanceMeasure(measure);
    c.scheme = ParseScheme(scheme);
    if (tap != -2) c.representation_tap = tap;
    c.guided_fraction = guided_fraction;
    return c;
  }

  ReferenceSelection Selection(std::uint64_t seed) const {
    ReferenceSelection s;
    s.strategy = ParseReferenceStrategy(references);
    s.count = n_references;
    s.indices = reference_index;
    if (reference_class >= 0) s.cls = static_cast<std::size_t>(reference_class);
    s.seed = seed;
    return s;
  }
};

struct AttributeArgs {
  std::string model, data, out, method = "expected-ig2", baseline = "zero", heatmap = "none";
  std::vector<std::size_t> index{0};
  std::uint64_t seed = 0;
  bool force = false;
  PathArgs path;
};

struct EvaluateArgs {
  std::string suite, model, data, out;
  std::vector<std::string> methods;
  std::size_t explicands = 0;
  std::size_t background = 64;
  bool roar = false;
  std::size_t roar_train = 200;
  int roar_epochs = 150;
  std::uint64_t seed = 0;
  bool force = false;
  PathArgs path;
};

void AddPathOptions(CLI::App* cmd, PathArgs& a) {
  cmd->add_option("--eta", a.eta, "GradPath step size")->capture_default_str();
  cmd->add_option("--steps", a.steps, "path steps k")->capture_default_str();
  cmd->add_option("--norm", a.norm, "GradPath step normalization")
      ->check(CLI::IsMember({"l2", "l1"}))
      ->capture_default_str();
  cmd->add_option("--top-k", a.top_k, "coordinates moved per l1 step")->capture_default_str();
  cmd->add_option("--measure", a.measure, "representation distance")
      ->check(CLI::IsMember({"euclidean", "cosine", "l1"}))
      ->capture_default_str();
  cmd->add_option("--scheme", a.scheme, "path quadrature")
      ->check(CLI::IsMember({"forward", "backward", "trapezoid"}))
      ->capture_default_str();
  cmd->add_option("--tap", a.tap, "representation layer index (-1 = input)");
  cmd->add_option("--guided-fraction", a.guided_fraction, "guided IG fraction per step")
      ->capture_default_str();
  cmd->add_option("--references", a.references, "reference selection")
      ->check(CLI::IsMember({"random-counterfactual", "fixed-list", "all-of-class"}))
      ->capture_default_str();
  cmd->add_option("--n-references", a.n_references, "random-counterfactual reference count")
      ->capture_default_str();
  cmd->add_option("--reference-index", a.reference_index, "fixed-list dataset indices")->delimiter(',');
  cmd->add_option("--reference-class", a.reference_class, "all-of-class target class");
}

nlohmann::json PathJson(const PathArgs& a) {
  return {{"eta", a.eta},
          {"steps", a.steps},
          {"norm", a.norm},
          {"top_k", a.top_k},
          {"measure", a.measure},
          {"scheme", a.scheme},
          {"tap", a.tap},
          {"guided_fraction", a.guided_fraction},
          {"references", a.references},
          {"n_references", a.n_references},
          {"reference_index", a.reference_index},
          {"reference_class", a.reference_class}};
}

WeightMetadata MetaRecords(const Provenance& prov) {
  const std::string line = prov.Line();
  std::vector<double> text(line.begin(), line.end());
  return {{"meta.provenance", Tensor({line.size()}, std::move(text))}};
}

void RunSynth(const SynthArgs& a, std::ostream& out) {
  Provenance prov;
  prov.seed = a.seed;
  prov.config = {{"command", "synth"}, {"kind", a.kind}, {"n", a.n}, {"seed", a.seed}};
  if (a.kind == "images")
    prov.config.update({{"side", a.side}, {"noise", a.noise}, {"field", a.field}});
  PrepareOutputDir(a.out, a.force);
  if (a.kind == "xai-bench") {
    SyntheticSpec spec;
    spec.n_samples = a.n;
    spec.seed = a.seed;
    WriteTabular(fs::path(a.out) / "xai_bench.csv", GenXaiBench(spec), prov);
  } else {
    ImageSpec spec;
    spec.n_samples = a.n;
    spec.seed = a.seed;
    spec.side = a.side;
    spec.noise = a.noise;
    spec.field = a.field;
    WriteImageDataset(a.out, GenImages(spec), prov);
  }
  out << "wrote " << a.n << " " << a.kind << " samples to " << a.out << "\n";
}

double Accuracy(const Model& model, const Dataset& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i : idx)
    ok += PredictedClass(model, data.inputs[i]) == static_cast<std::size_t>(data.labels[i]);
  return static_cast<double>(ok) / static_cast<double>(idx.size());
}

void RunTrain(const TrainArgs& a, std::ostream& out) {
  const LoadedData loaded = LoadData(a.data);
  const Dataset& data = loaded.data();
  std::string arch = a.arch;
  if (arch == "auto") arch = loaded.is_image ? "tiny-cnn" : "xai-mlp";
  ModelSpec spec;
  TrainConfig tc;
  tc.seed = a.seed;
  tc.momentum = a.momentum;
  if (arch == "xai-mlp") {
    if (data.inputs.front().shape() != Shape{kXaiBenchFeatures})
      throw Error("xai-mlp expects 5 features per sample");
    spec = ModelSpec::XaiBenchMlp(a.seed);
    tc.loss = Loss::kMeanSquaredError;
    tc.learning_rate = 0.05;
    tc.epochs = 300;
    tc.batch_size = 64;
  } else {
    const Shape& s = data.inputs.front().shape();
    if (s.size() != 3 || s[0] != 1 || s[1] != s[2]) throw Error("tiny-cnn expects square [1, H, W] images");
    spec = ModelSpec::TinyCnn(s[1], 2, a.seed);
    tc.loss = Loss::kCrossEntropy;
    tc.learning_rate = 0.05;
    tc.epochs = 60;
    tc.batch_size = 32;
  }
  if (a.epochs > 0) tc.epochs = a.epochs;
  if (a.lr > 0.0) tc.learning_rate = a.lr;
  if (a.batch > 0) tc.batch_size = a.batch;

  Provenance prov;
  prov.seed = a.seed;
  prov.config = {{"command", "train"}, {"data", a.data},        {"arch", arch},
                 {"epochs", tc.epochs}, {"lr", tc.learning_rate}, {"momentum", tc.momentum},
                 {"batch", tc.batch_size}, {"seed", a.seed}};
  PrepareOutputDir(a.out, a.force);

  const Split split = SplitIndices(data.size());
  Model model = Model::Build(spec);
  const Dataset train = data.Subset(split.train);
  const TrainReport report =
      TrainSgd(model, tc.loss == Loss::kMeanSquaredError ? SignedTargets(train) : train, tc);

  SaveWeights(model, fs::path(a.out) / "model.pgrd", MetaRecords(prov));
  std::string loss = "# " + prov.Line() + "\nepoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    loss += std::to_string(e + 1) + "," + FormatDouble(report.epoch_loss[e]) + "\n";
  WriteText(fs::path(a.out) / "loss.csv", loss);
  const double train_acc = Accuracy(model, data, split.train);
  const double heldout_acc = Accuracy(model, data, split.heldout);
  WriteJson(fs::path(a.out) / "train.json",
            {{"provenance", prov.ToJson()},
             {"parameters", model.ParameterCount()},
             {"train_accuracy", train_acc},
             {"heldout_accuracy", heldout_acc},
             {"final_loss", report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()}});
  out << "trained " << arch << ": heldout accuracy " << heldout_acc << "\n";
}

Tensor BaselineFrom(const std::string& spec, const Dataset& data) {
  const Tensor& like = data.inputs.front();
  if (spec == "zero") return Tensor(like.shape());
  if (spec == "mean") {
    Tensor acc(like.shape());
    for (const Tensor& x : data.inputs) AddInPlace(acc, x);
    return (1.0 / static_cast<double>(data.size())) * acc;
  }
  if (spec.starts_with("index:")) {
    const std::size_t i = std::stoul(spec.substr(6));
    if (i >= data.size()) throw Error("baseline index " + std::to_string(i) + " is out of range");
    return data.inputs[i];
  }
  throw Error("baseline must be zero, mean or index:<n>, got '" + spec + "'");
}

void RunAttribute(const AttributeArgs& a, std::ostream& out) {
  const Model model = LoadWeights(a.model);
  const LoadedData loaded = LoadData(a.data);
  const Dataset& data = loaded.data();
  if (model.input_shape() != data.inputs.front().shape())
    throw Error("model input " + ShapeString(model.input_shape()) + " does not match dataset samples " +
                ShapeString(data.inputs.front().shape()));
  const Method method = ParseMethod(a.method);
  const AttributionConfig config = a.path.Config();
  const ReferenceSelection selection = a.path.Selection(a.seed);
  const Tensor baseline = BaselineFrom(a.baseline, data);

  Provenance prov;
  prov.seed = a.seed;
  prov.config = {{"command", "attribute"}, {"model", a.model},      {"data", a.data},
                 {"method", a.method},     {"baseline", a.baseline}, {"index", a.index},
                 {"heatmap", a.heatmap},   {"seed", a.seed},         {"path", PathJson(a.path)}};
  PrepareOutputDir(a.out, a.force);
  const Split split = SplitIndices(data.size());
  const bool needs_refs = method == Method::kIG2 || method == Method::kExpectedIG2 ||
                          method == Method::kGradCFE || method == Method::kExpectedIG;

  for (std::size_t k = 0; k < a.index.size(); ++k) {
    const std::size_t i = a.index[k];
    if (i >= data.size()) throw Error("explicand index " + std::to_string(i) + " is out of range");
    const Tensor& x = data.inputs[i];
    MethodSetup setup = SetupFor(
        method, config,
        needs_refs ? SelectReferences(model, data, split.train, x, selection, i) : std::vector<Tensor>{},
        a.seed * 1000003 + i);
    setup.baseline = baseline;
    const Attribution att = Attribute(model, x, setup);

    const std::string stem = "attr_" + std::to_string(i);
    std::string csv = "# " + prov.Line() + "\nfeature,score\n";
    for (std::size_t f = 0; f < att.scores.size(); ++f)
      csv += data.feature_names[f] + "," + FormatDouble(att.scores[f]) + "\n";
    WriteText(fs::path(a.out) / (stem + ".csv"), csv);

    nlohmann::json per_ref = nlohmann::json::array();
    for (std::size_t r = 0; r < att.baselines.size(); ++r) {
      nlohmann::json entry{{"baseline", att.baselines[r].values()}};
      if (r < att.per_reference.size()) entry["scores"] = att.per_reference[r].values();
      if (r < setup.config.references.size()) entry["reference"] = setup.config.references[r].values();
      per_ref.push_back(entry);
    }
    WriteJson(fs::path(a.out) / (stem + ".json"),
              {{"provenance", prov.ToJson()},
               {"explicand_index", i},
               {"method", MethodName(att.method)},
               {"config", att.config},
               {"completeness_gap", att.completeness_gap ? nlohmann::json(*att.completeness_gap)
                                                         : nlohmann::json()},
               {"predicted_class", PredictedClass(model, x)},
               {"per_reference", per_ref}});
    if (a.heatmap != "none") {
      if (!loaded.is_image) throw Error("heatmaps need an image dataset");
      if (a.heatmap == "gray")
        WritePnm(MagnitudeHeatmap(att.scores), fs::path(a.out) / (stem + ".pgm"), {prov.Line()});
      else
        WritePnm(SignedHeatmap(att.scores), fs::path(a.out) / (stem + ".ppm"), {prov.Line()});
    }
  }
  out << "wrote " << a.index.size() << " " << MethodName(method) << " attributions to " << a.out << "\n";
}

std::vector<Method> MethodsOr(const std::vector<std::string>& names, std::vector<Method> fallback) {
  if (names.empty()) return fallback;
  std::vector<Method> out;
  for (const std::string& n : names) out.push_back(ParseMethod(n));
  return out;
}

void RunEvaluate(const EvaluateArgs& a, std::ostream& out) {
  const Model model = LoadWeights(a.model);
  const LoadedData loaded = LoadData(a.data);
  Provenance prov;
  prov.seed = a.seed;
  prov.config = {{"command", "evaluate"}, {"suite", a.suite},        {"model", a.model},
                 {"data", a.data},        {"methods", a.methods},    {"explicands", a.explicands},
                 {"background", a.background}, {"roar", a.roar},     {"roar_train", a.roar_train},
                 {"roar_epochs", a.roar_epochs}, {"seed", a.seed},   {"path", PathJson(a.path)}};
  PrepareOutputDir(a.out, a.force);
  const fs::path dir(a.out);
  nlohmann::json report{{"provenance", prov.ToJson()}, {"suite", a.suite}};

  if (a.suite == "xai-bench") {
    if (loaded.is_image) throw Error("the xai-bench suite needs a tabular dataset");
    XaiBenchOptions o;
    o.methods = MethodsOr(a.methods, o.methods);
    if (a.explicands > 0) o.explicands = a.explicands;
    o.background = a.background;
    o.roar = a.roar;
    o.roar_train = a.roar_train;
    o.roar_train_config.learning_rate = 0.05;
    o.roar_train_config.momentum = 0.9;
    o.roar_train_config.epochs = a.roar_epochs;
    o.roar_train_config.batch_size = 64;
    o.roar_train_config.seed = a.seed;
    o.attribution = a.path.Config();
    o.references = a.path.Selection(a.seed);
    o.seed = a.seed;
    const MetricTable table = RunXaiBenchTable(model, loaded.data(), o);
    report["options"] = o.ToJson();
    report["table"] = table.ToJson();
    WriteText(dir / "xai_bench.csv", table.Csv(prov.Line()));
  } else if (a.suite == "images" || a.suite == "ablation") {
    if (!loaded.is_image) throw Error("the " + a.suite + " suite needs an image dataset");
    ImageEvalOptions o;
    o.methods = MethodsOr(a.methods, o.methods);
    if (a.explicands > 0) o.explicands = a.explicands;
    o.attribution = a.path.Config();
    o.references = a.path.Selection(a.seed);
    o.seed = a.seed;
    report["options"] = o.ToJson();
    if (a.suite == "images") {
      const ImageEvalResult r = RunImageEvaluation(model, loaded.images, o);
      report["table"] = r.table.ToJson();
      report["saturation"] = {{"straight_drop_progress", r.straight_drop},
                              {"gradpath_drop_progress", r.gradpath_drop}};
      WriteText(dir / "images.csv", r.table.Csv(prov.Line()));
      WriteText(dir / "curves.csv", "# " + prov.Line() + "\n" + r.curves_csv);
    } else {
      const MetricTable t = RunAblationGrid(model, loaded.images, o);
      report["table"] = t.ToJson();
      WriteText(dir / "ablation.csv", t.Csv(prov.Line()));
    }
  } else if (a.suite == "axioms") {
    const AxiomSuiteResult r = RunAxiomSuite(model, loaded.data(), a.path.Config(),
                                             a.explicands > 0 ? a.explicands : 5, a.seed);
    report["axioms"] = r.ToJson();
    if (!r.AllAsExpected()) {
      WriteJson(dir / "axioms.json", report);
      throw Error("axiom suite: at least one check did not behave as expected; see axioms.json");
    }
  }
  WriteJson(dir / (a.suite + ".json"), report);
  out << "wrote " << a.suite << " report to " << a.out << "\n";
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"path attribution with counterfactual baselines", "pathgrad"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("kind", synth.kind, "xai-bench or images")
      ->required()
      ->check(CLI::IsMember({"xai-bench", "images"}));
  synth_cmd->add_option("--n", synth.n, "sample count")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_flag("--force", synth.force, "overwrite a non-empty output directory");
  synth_cmd->add_option("--side", synth.side, "image side length")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "image pixel noise")->capture_default_str();
  synth_cmd->add_option("--field", synth.field, "image off-pattern level")->capture_default_str();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", train.data, "CSV file or image dataset directory")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--arch", train.arch)
      ->check(CLI::IsMember({"auto", "xai-mlp", "tiny-cnn"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "0 keeps the architecture default");
  train_cmd->add_option("--lr", train.lr, "0 keeps the architecture default");
  train_cmd->add_option("--momentum", train.momentum)->capture_default_str();
  train_cmd->add_option("--batch", train.batch, "0 keeps the architecture default");
  train_cmd->add_option("--seed", train.seed)->capture_default_str();
  train_cmd->add_flag("--force", train.force);

  AttributeArgs attr;
  CLI::App* attr_cmd = app.add_subcommand("attribute", "attribute predictions of a trained model");
  attr_cmd->add_option("--model", attr.model, "PGRD weight file")->required();
  attr_cmd->add_option("--data", attr.data)->required();
  attr_cmd->add_option("--out", attr.out)->required();
  attr_cmd->add_option("--method", attr.method)
      ->check(CLI::IsMember({"gradient", "ig", "expected-ig", "guided-ig", "ig2", "expected-ig2",
                             "gradcfe", "random"}))
      ->capture_default_str();
  attr_cmd->add_option("--baseline", attr.baseline, "zero, mean or index:<n>")->capture_default_str();
  attr_cmd->add_option("--index", attr.index, "explicand indices")->delimiter(',');
  attr_cmd->add_option("--heatmap", attr.heatmap)
      ->check(CLI::IsMember({"none", "gray", "signed"}))
      ->capture_default_str();
  attr_cmd->add_option("--seed", attr.seed)->capture_default_str();
  attr_cmd->add_flag("--force", attr.force);
  AddPathOptions(attr_cmd, attr.path);

  EvaluateArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score attribution methods");
  eval_cmd->add_option("--suite", eval.suite)
      ->required()
      ->check(CLI::IsMember({"xai-bench", "images", "ablation", "axioms"}));
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--out", eval.out)->required();
  eval_cmd->add_option("--methods", eval.methods)->delimiter(',');
  eval_cmd->add_option("--explicands", eval.explicands, "0 keeps the suite default");
  eval_cmd->add_option("--background", eval.background)->capture_default_str();
  eval_cmd->add_flag("--roar", eval.roar, "include remove-and-retrain (slow)");
  eval_cmd->add_option("--roar-train", eval.roar_train)->capture_default_str();
  eval_cmd->add_option("--roar-epochs", eval.roar_epochs)->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed)->capture_default_str();
  eval_cmd->add_flag("--force", eval.force);
  AddPathOptions(eval_cmd, eval.path);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, x;
    const int code = app.exit(e, o, x);
    out << o.str();
    err << x.str();
    return code == 0 ? 0 : 2;
  }
  try {
    if (*synth_cmd) RunSynth(synth, out);
    else if (*train_cmd) RunTrain(train, out);
    else if (*attr_cmd) RunAttribute(attr, out);
    else if (*eval_cmd) RunEvaluate(eval, out);
  } catch (const std::exception& e) {
    err << "pathgrad: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pathgrad::cli
