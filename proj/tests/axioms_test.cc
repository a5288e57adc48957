#include <cmath>

#include <gtest/gtest.h>

#include "pathgrad/axioms.h"
#include "support.h"

namespace pathgrad {
namespace {

MethodSetup SetupOf(Method m, std::vector<Tensor> refs = {}) {
  MethodSetup s;
  s.method = m;
  s.config.references = std::move(refs);
  return s;
}

std::vector<Tensor> Counterfactuals(const Tensor& x, std::size_t n) {
  const auto& t = testing::XaiMlp();
  std::vector<Tensor> out;
  for (const Tensor& r : t.Train(200))
    if (out.size() < n && PredictedClass(t.model, r) != PredictedClass(t.model, x)) out.push_back(r);
  return out;
}

TEST(Completeness, PathMethodsOnTrainedModel) {
  const auto& t = testing::XaiMlp();
  for (const Tensor& x : t.Heldout(5)) {
    for (Method m : {Method::kIntegratedGradients, Method::kGuidedIG, Method::kIG2}) {
      const AxiomReport r = CheckCompleteness(t.model, x, SetupOf(m, Counterfactuals(x, 1)));
      EXPECT_TRUE(r.pass) << r.method << " gap " << r.gap;
      EXPECT_EQ(r.tolerance, 1e-3 * std::max(1.0, std::abs(Evaluate(t.model, x).output[0])));
      EXPECT_EQ(r.pass, r.gap <= r.tolerance);
    }
  }
}

TEST(Completeness, ToyModel) {
  const Tensor x = Tensor::Vector({3, 3});
  EXPECT_TRUE(CheckCompleteness(ToyMaxModel(), x, SetupOf(Method::kIntegratedGradients)).pass);
  EXPECT_TRUE(CheckCompleteness(ToyMaxModel(), x, SetupOf(Method::kGuidedIG)).pass);
  // Gradient alone sums to 1 while the output moves by 3.
  const AxiomReport neg = CheckCompleteness(ToyMaxModel(), x, SetupOf(Method::kVanillaGradient));
  EXPECT_FALSE(neg.pass);
  EXPECT_NEAR(neg.gap, 2.0, 1e-12);
}

TEST(Completeness, LinearModelIsExact) {
  const AxiomReport r = CheckCompleteness(LinearModel({1, -2, 3}), Tensor::Vector({1, 1, 1}), SetupOf(Method::kIntegratedGradients));
  EXPECT_LE(r.gap, 1e-12);
}

TEST(Dummy, ExactZeroForCounterfactualMethods) {
  const auto& t = testing::XaiMlp();
  const Tensor x = t.Heldout(1)[0];
  for (Method m : {Method::kIG2, Method::kGradCFE, Method::kExpectedIG2, Method::kExpectedIG}) {
    const AxiomReport r = CheckDummy(t.model, x, SetupOf(m, Counterfactuals(x, 3)));
    EXPECT_EQ(r.gap, 0.0) << r.method;
    EXPECT_TRUE(r.pass);
  }
}

TEST(Symmetry, IG2AndSymmetricBaselinePass) {
  const Tensor x = Tensor::Vector({0.6, 0.6});
  const AxiomReport ig2 = CheckSymmetry(x, SetupOf(Method::kIG2, {Tensor::Vector({-1.0, -1.0})}));
  EXPECT_TRUE(ig2.pass);
  EXPECT_LE(ig2.gap, 1e-6);
  EXPECT_LE(ig2.witness.at("path_gap").get<double>(), 1e-9);
  EXPECT_TRUE(CheckSymmetry(x, SetupOf(Method::kIntegratedGradients)).pass);
}

TEST(Symmetry, AsymmetricBaselineFails) {
  MethodSetup s = SetupOf(Method::kIntegratedGradients);
  s.baseline = Tensor::Vector({1.0, 0.0});
  const AxiomReport r = CheckSymmetry(Tensor::Vector({0.6, 0.6}), s);
  EXPECT_FALSE(r.pass);
  // Brute-force the two path integrals with a fine midpoint rule.
  const Model m = SymmetricSumModel();
  const int n = 20000;
  double phi1 = 0.0, phi2 = 0.0;
  for (int j = 0; j < n; ++j) {
    const double a = (j + 0.5) / n;
    const Tensor p = Tensor::Vector({1.0 + a * (0.6 - 1.0), a * 0.6});
    const Tensor g = InputGradient(m, p, ScalarSelector::Output(0));
    phi1 += g[0] * (0.6 - 1.0) / n;
    phi2 += g[1] * 0.6 / n;
  }
  EXPECT_NEAR(r.gap, std::abs(phi1 - phi2), 1e-4);
}

TEST(Symmetry, RequiresEqualCoordinates) {
  EXPECT_THROW(CheckSymmetry(Tensor::Vector({0.5, 0.6}), SetupOf(Method::kIntegratedGradients)), Error);
}

TEST(ImplementationInvariance, PathMethodsInvariantWeightReaderNot) {
  const auto& t = testing::XaiMlp();
  const Tensor x = t.Heldout(1)[0];
  const AxiomReport ig = CheckImplementationInvariance(t.model, x, SetupOf(Method::kIntegratedGradients));
  const AxiomReport ig2 = CheckImplementationInvariance(t.model, x, SetupOf(Method::kIG2, Counterfactuals(x, 1)));
  EXPECT_TRUE(ig.pass) << ig.gap;
  EXPECT_TRUE(ig2.pass) << ig2.gap;
  const AxiomReport neg = CheckImplementationInvariance(t.model, x, "first-unit-weights", FirstUnitWeightAttribution);
  EXPECT_FALSE(neg.pass);
}

TEST(Reports, WitnessReplaysBitExactly) {
  const auto& t = testing::XaiMlp();
  const Tensor x = t.Heldout(2)[1];
  MethodSetup asym = SetupOf(Method::kIntegratedGradients);
  asym.baseline = Tensor::Vector({1.0, 0.0});
  const std::vector<AxiomReport> reports{
      CheckCompleteness(t.model, x, SetupOf(Method::kIG2, Counterfactuals(x, 1))),
      CheckCompleteness(t.model, x, SetupOf(Method::kGuidedIG)),
      CheckDummy(t.model, x, SetupOf(Method::kExpectedIG2, Counterfactuals(x, 2))),
      CheckSymmetry(Tensor::Vector({0.6, 0.6}), SetupOf(Method::kIG2, {Tensor::Vector({-1.0, -1.0})})),
      CheckSymmetry(Tensor::Vector({0.6, 0.6}), asym),
      CheckImplementationInvariance(t.model, x, SetupOf(Method::kIG2, Counterfactuals(x, 1))),
  };
  for (const AxiomReport& r : reports) {
    // Through text, as a report file would carry it.
    AxiomReport parsed = r;
    parsed.witness = nlohmann::json::parse(r.ToJson().dump()).at("witness");
    EXPECT_EQ(ReplayGap(parsed, t.model), r.gap) << AxiomName(r.axiom) << " " << r.method;
  }
}

TEST(Reports, JsonFields) {
  const AxiomReport r = CheckCompleteness(ToyMaxModel(), Tensor::Vector({3, 3}), SetupOf(Method::kIntegratedGradients));
  const nlohmann::json j = r.ToJson();
  EXPECT_EQ(j.at("axiom"), "completeness");
  EXPECT_EQ(j.at("method"), "ig");
  EXPECT_EQ(j.at("pass"), true);
  EXPECT_TRUE(j.contains("witness"));
}

}  // namespace
}  // namespace pathgrad
