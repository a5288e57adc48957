#include "support.h"

#include <algorithm>

#include "pathgrad/xai_bench.h"

namespace pathgrad::testing {

namespace {

std::vector<Tensor> Take(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t n) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < std::min(n, idx.size()); ++i) out.push_back(data.inputs[idx[i]]);
  return out;
}

}  // namespace

std::vector<Tensor> TrainedTabular::Heldout(std::size_t n) const { return Take(data, split.heldout, n); }
std::vector<Tensor> TrainedTabular::Train(std::size_t n) const { return Take(data, split.train, n); }

TrainedTabular TrainXaiMlp(std::uint64_t data_seed, std::uint64_t model_seed) {
  SyntheticSpec spec;
  spec.n_samples = 1000;
  spec.seed = data_seed;
  TrainedTabular t{GenXaiBench(spec), cli::SplitIndices(1000), Model::Build(ModelSpec::XaiBenchMlp(model_seed))};
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.epochs = 300;
  tc.momentum = 0.9;
  tc.batch_size = 64;
  tc.seed = model_seed;
  TrainSgd(t.model, SignedTargets(t.data.Subset(t.split.train)), tc);
  return t;
}

const TrainedTabular& XaiMlp() {
  static const TrainedTabular t = TrainXaiMlp(7, 1);
  return t;
}

const TrainedImages& ImageCnn() {
  static const TrainedImages t = [] {
    ImageSpec spec;
    spec.seed = 7;
    TrainedImages r{GenImages(spec), cli::SplitIndices(spec.n_samples),
                    Model::Build(ModelSpec::TinyCnn(spec.side, 2, 0))};
    TrainConfig tc;
    tc.loss = Loss::kCrossEntropy;
    tc.learning_rate = 0.05;
    tc.epochs = 60;
    tc.momentum = 0.9;
    tc.batch_size = 32;
    TrainSgd(r.model, r.images.data.Subset(r.split.train), tc);
    return r;
  }();
  return t;
}

Tensor UniformTensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace pathgrad::testing
