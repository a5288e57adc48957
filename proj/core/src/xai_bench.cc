#include "pathgrad/xai_bench.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "pathgrad/eval_metrics.h"
#include "pathgrad/parallel.h"

namespace pathgrad {

std::vector<double> SyntheticSpec::Identity() {
  std::vector<double> eye(kXaiBenchFeatures * kXaiBenchFeatures, 0.0);
  for (std::size_t i = 0; i < kXaiBenchFeatures; ++i) eye[i * kXaiBenchFeatures + i] = 1.0;
  return eye;
}

namespace {

constexpr std::size_t kD = kXaiBenchFeatures;

// Lower-triangular L with L L^T = cov; throws if cov is not positive-definite.
std::vector<double> Cholesky(const std::vector<double>& cov) {
  std::vector<double> l(kD * kD, 0.0);
  for (std::size_t i = 0; i < kD; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = cov[i * kD + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * kD + k] * l[j * kD + k];
      if (i == j) {
        if (!(s > 0.0)) throw Error("covariance is not positive-definite");
        l[i * kD + i] = std::sqrt(s);
      } else {
        l[i * kD + j] = s / l[j * kD + j];
      }
    }
  }
  return l;
}

}  // namespace

void SyntheticSpec::Validate() const {
  if (n_samples == 0) throw Error("synthetic spec needs at least one sample");
  if (mean.size() != kD) throw Error("synthetic mean must have 5 entries");
  if (covariance.size() != kD * kD) throw Error("synthetic covariance must be 5x5");
  for (double v : mean)
    if (!std::isfinite(v)) throw Error("synthetic mean must be finite");
  for (std::size_t i = 0; i < kD; ++i)
    for (std::size_t j = 0; j < kD; ++j) {
      const double a = covariance[i * kD + j];
      if (!std::isfinite(a)) throw Error("synthetic covariance must be finite");
      if (a != covariance[j * kD + i]) throw Error("synthetic covariance must be symmetric");
    }
  Cholesky(covariance);
}

double Psi1(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double Psi2(double x) {
  if (x < -0.5) return -2.0;
  if (x < 0.0) return -1.0;
  if (x < 0.5) return 1.0;
  return 2.0;
}

double Psi3(double x) { return std::floor(2.0 * std::cos(std::numbers::pi * x)); }

double PsiSum(const Tensor& x) {
  if (x.size() != kD) throw Error("psi sum expects 5 features");
  return Psi1(x[0]) + Psi2(x[1]) + Psi3(x[2]);
}

std::vector<double> NormalizedPsi(std::span<const Tensor> inputs) {
  std::vector<double> s;
  s.reserve(inputs.size());
  for (const Tensor& x : inputs) s.push_back(PsiSum(x));
  if (s.empty()) return s;
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  for (double& v : s) v -= mean;
  return s;
}

Dataset GenXaiBench(const SyntheticSpec& spec) {
  spec.Validate();
  const std::vector<double> l = Cholesky(spec.covariance);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  for (std::size_t f = 0; f < kD; ++f) data.feature_names.push_back("x" + std::to_string(f + 1));
  data.inputs.reserve(spec.n_samples);
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    double z[kD];
    for (double& v : z) v = normal(rng);
    Tensor x({kD});
    for (std::size_t i = 0; i < kD; ++i) {
      double v = spec.mean[i];
      for (std::size_t k = 0; k <= i; ++k) v += l[i * kD + k] * z[k];
      x[i] = v;
    }
    data.inputs.push_back(std::move(x));
  }
  for (double v : NormalizedPsi(data.inputs)) data.labels.push_back(v > 0.0 ? 1.0 : 0.0);
  return data;
}

BatchFunction ModelOutputFunction(const Model& model, std::size_t output) {
  if (output >= model.output_size()) throw Error("output index out of range");
  return [&model, output](const Tensor& rows) {
    const Tensor out = EvaluateBatch(model, rows);
    const std::size_t m = rows.dim(0);
    const std::size_t stride = out.size() / m;
    std::vector<double> values(m);
    for (std::size_t r = 0; r < m; ++r) values[r] = out[r * stride + output];
    return values;
  };
}

ShapleyResult ExactShapley(const BatchFunction& f, const Tensor& x, const ShapleyConfig& config) {
  const std::size_t n = x.size();
  if (x.rank() != 1) throw Error("exact Shapley expects a rank-1 explicand");
  if (n > kMaxExactShapleyFeatures)
    throw Error("exact Shapley enumerates 2^n subsets and supports at most " +
                std::to_string(kMaxExactShapleyFeatures) + " features; use a sampling estimator");
  if (config.background.empty()) throw Error("exact Shapley needs at least one background sample");
  for (const Tensor& b : config.background) CheckSameShape(x, b, "shapley background");

  const std::size_t subsets = std::size_t{1} << n;
  const std::size_t nb = config.background.size();
  Tensor rows({subsets * nb, n});
  for (std::size_t s = 0; s < subsets; ++s)
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t r = s * nb + b;
      for (std::size_t i = 0; i < n; ++i)
        rows[r * n + i] = (s >> i) & 1 ? x[i] : config.background[b][i];
    }
  const std::vector<double> out = f(rows);
  if (out.size() != subsets * nb) throw Error("batch function returned the wrong number of values");
  std::vector<double> v(subsets, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    for (std::size_t b = 0; b < nb; ++b) v[s] += out[s * nb + b];
    v[s] /= static_cast<double>(nb);
  }

  // weight[k] = k! (n - k - 1)! / n!
  std::vector<double> weight(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    weight[k] = std::exp(std::lgamma(static_cast<double>(k + 1)) +
                         std::lgamma(static_cast<double>(n - k)) -
                         std::lgamma(static_cast<double>(n + 1)));

  ShapleyResult result;
  result.values.assign(n, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    const auto k = static_cast<std::size_t>(std::popcount(s));
    for (std::size_t i = 0; i < n; ++i)
      if (!((s >> i) & 1)) result.values[i] += weight[k] * (v[s | (std::size_t{1} << i)] - v[s]);
  }
  result.value_function = nb == 1 ? ValueFunction::kFixedBaseline : ValueFunction::kMarginalExpectation;
  result.seed = config.seed;
  result.empty_value = v.front();
  result.full_value = v.back();
  return result;
}

ShapleyResult ExactShapley(const Model& model, const Tensor& x, const ShapleyConfig& config) {
  return ExactShapley(ModelOutputFunction(model, config.output), x, config);
}

double Pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

void CheckBatch(std::span<const Tensor> attributions, std::span<const Tensor> inputs,
                const MetricConfig& config) {
  if (attributions.size() != inputs.size())
    throw Error("metric: attribution and input counts differ");
  if (inputs.empty()) throw Error("metric: empty batch");
  if (config.background.empty()) throw Error("metric: background set is empty");
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    CheckSameShape(inputs[s], attributions[s], "metric attribution");
    CheckSameShape(inputs[s], config.background.front(), "metric background");
  }
}

// Mean model output over rows that share the explicand's features in `keep`
// and take each background sample elsewhere.
std::vector<double> OutputsOf(const Model& model, const Tensor& rows, std::size_t output) {
  return ModelOutputFunction(model, output)(rows);
}

double MeanOverBackground(const Model& model, const Tensor& x, const std::vector<bool>& keep,
                          const MetricConfig& config) {
  const std::size_t n = x.size();
  const std::size_t nb = config.background.size();
  Tensor rows({nb, n});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < n; ++i) rows[b * n + i] = keep[i] ? x[i] : config.background[b][i];
  const std::vector<double> out = OutputsOf(model, rows, config.output);
  return std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(nb);
}

double MeanPerSample(std::size_t count, const std::function<double(std::size_t)>& score) {
  std::vector<double> per(count);
  ParallelFor(count, [&](std::size_t s) { per[s] = score(s); });
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(count);
}

std::uint64_t HashValues(const Tensor& x, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (double v : x.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

std::vector<double> MarginalContributions(const Model& model, const Tensor& x,
                                          const MetricConfig& config) {
  const std::size_t n = x.size();
  const std::size_t nb = config.background.size();
  if (nb == 0) throw Error("marginal contributions need a background set");
  const double fx = ScalarValue(model, x, ScalarSelector::Output(config.output));
  Tensor rows({n * nb, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t r = i * nb + b;
      for (std::size_t j = 0; j < n; ++j) rows[r * n + j] = x[j];
      rows[r * n + i] = config.background[b][i];
    }
  const std::vector<double> out = OutputsOf(model, rows, config.output);
  std::vector<double> contrib(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t b = 0; b < nb; ++b) m += out[i * nb + b];
    contrib[i] = fx - m / static_cast<double>(nb);
  }
  return contrib;
}

double MetricFaithfulness(std::span<const Tensor> attributions, const Model& model,
                          std::span<const Tensor> inputs, const MetricConfig& config) {
  CheckBatch(attributions, inputs, config);
  return MeanPerSample(inputs.size(), [&](std::size_t s) {
    const std::vector<double> c = MarginalContributions(model, inputs[s], config);
    return Pearson(attributions[s].data(), c);
  });
}

std::vector<std::size_t> RankByMagnitude(const Tensor& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(scores[a]) > std::abs(scores[b]);
  });
  return order;
}

double MetricMonotonicity(std::span<const Tensor> attributions, const Model& model,
                          std::span<const Tensor> inputs, const MetricConfig& config) {
  CheckBatch(attributions, inputs, config);
  return MeanPerSample(inputs.size(), [&](std::size_t s) {
    const Tensor& x = inputs[s];
    const std::size_t n = x.size();
    if (n < 2) return 1.0;
    const std::vector<std::size_t> order = RankByMagnitude(attributions[s]);
    std::vector<bool> keep(n, false);
    double prev = MeanOverBackground(model, x, keep, config);
    std::vector<double> gain;
    for (std::size_t idx : order) {
      keep[idx] = true;
      const double cur = MeanOverBackground(model, x, keep, config);
      gain.push_back(std::abs(cur - prev));
      prev = cur;
    }
    std::size_t ok = 0;
    for (std::size_t r = 0; r + 1 < n; ++r)
      if (gain[r] >= gain[r + 1] - 1e-12 * std::max(1.0, gain[r])) ++ok;
    return static_cast<double>(ok) / static_cast<double>(n - 1);
  });
}

double MetricGtShapley(std::span<const Tensor> attributions, std::span<const ShapleyResult> shapley) {
  if (attributions.size() != shapley.size()) throw Error("gt-shapley: count mismatch");
  if (attributions.empty()) throw Error("gt-shapley: empty batch");
  double total = 0.0;
  for (std::size_t s = 0; s < attributions.size(); ++s)
    total += Pearson(attributions[s].data(), shapley[s].values);
  return total / static_cast<double>(attributions.size());
}

double MetricInfidelity(std::span<const Tensor> attributions, const Model& model,
                        std::span<const Tensor> inputs, const MetricConfig& config) {
  CheckBatch(attributions, inputs, config);
  if (config.infidelity_masks == 0) throw Error("infidelity needs at least one mask");
  if (!(config.inclusion_probability > 0.0 && config.inclusion_probability <= 1.0))
    throw Error("infidelity inclusion probability must lie in (0, 1]");
  return MeanPerSample(inputs.size(), [&](std::size_t s) {
    const Tensor& x = inputs[s];
    const Tensor& phi = attributions[s];
    const std::size_t n = x.size();
    const std::size_t m = config.infidelity_masks;
    std::mt19937_64 rng(HashValues(x, config.seed));
    std::bernoulli_distribution include(config.inclusion_probability);
    std::uniform_int_distribution<std::size_t> pick(0, config.background.size() - 1);
    Tensor rows({m, n});
    std::vector<double> predicted(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const Tensor& b = config.background[pick(rng)];
      for (std::size_t i = 0; i < n; ++i) {
        if (include(rng)) {
          rows[r * n + i] = b[i];
          predicted[r] += phi[i] * (x[i] - b[i]);
        } else {
          rows[r * n + i] = x[i];
        }
      }
    }
    const double fx = ScalarValue(model, x, ScalarSelector::Output(config.output));
    const std::vector<double> out = OutputsOf(model, rows, config.output);
    double err = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double d = predicted[r] - (fx - out[r]);
      err += d * d;
    }
    return err / static_cast<double>(m);
  });
}

namespace {

double TestAuc(const Model& model, const Dataset& test) {
  const Tensor out = EvaluateBatch(model, test.StackAll());
  const std::size_t stride = out.size() / test.size();
  std::vector<double> scores(test.size());
  for (std::size_t s = 0; s < test.size(); ++s)
    scores[s] = stride == 1 ? out[s] : out[s * stride + 1];
  std::vector<double> positive(test.size());
  for (std::size_t s = 0; s < test.size(); ++s) positive[s] = test.labels[s] > 0.5 ? 1.0 : 0.0;
  return RocAuc(scores, positive);
}

Model TrainFresh(const Dataset& train, const RoarConfig& config) {
  Model model = Model::Build(config.model_spec);
  const bool signed_targets = config.signed_targets && config.train.loss == Loss::kMeanSquaredError;
  TrainSgd(model, signed_targets ? SignedTargets(train) : train, config.train);
  return model;
}

Dataset RemoveTop(const Dataset& data, std::span<const Tensor> attributions, std::size_t count,
                  const Tensor& fill) {
  Dataset out = data;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::vector<std::size_t> order = RankByMagnitude(attributions[s]);
    for (std::size_t r = 0; r < count; ++r) out.inputs[s][order[r]] = fill[order[r]];
  }
  return out;
}

}  // namespace

RoarResult MetricRoar(std::span<const Tensor> train_attributions,
                      std::span<const Tensor> test_attributions, const Dataset& train,
                      const Dataset& test, const RoarConfig& config) {
  train.Validate();
  test.Validate();
  if (train.size() == 0 || test.size() == 0) throw Error("roar: empty split");
  if (train_attributions.size() != train.size() || test_attributions.size() != test.size())
    throw Error("roar: attribution counts must match the splits");
  for (double q : config.fractions)
    if (!(q >= 0.0 && q <= 1.0)) throw Error("roar fractions must lie in [0, 1]");
  const std::size_t n = train.inputs.front().size();
  Tensor fill(train.inputs.front().shape());
  for (const Tensor& x : train.inputs) AddInPlace(fill, x);
  fill = (1.0 / static_cast<double>(train.size())) * fill;

  RoarResult result;
  result.baseline_auc = TestAuc(TrainFresh(train, config), test);
  for (double q : config.fractions) {
    const auto count = static_cast<std::size_t>(std::llround(q * static_cast<double>(n)));
    double auc = result.baseline_auc;
    if (count > 0) {
      const Dataset tr = RemoveTop(train, train_attributions, count, fill);
      const Dataset te = RemoveTop(test, test_attributions, count, fill);
      auc = TestAuc(TrainFresh(tr, config), te);
    }
    result.retrained_auc.push_back(auc);
    result.degradation.push_back(result.baseline_auc - auc);
  }
  if (!result.degradation.empty())
    result.score = std::accumulate(result.degradation.begin(), result.degradation.end(), 0.0) /
                   static_cast<double>(result.degradation.size());
  return result;
}

}  // namespace pathgrad
