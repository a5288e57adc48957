#include "pathgrad/weights_io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace pathgrad {
namespace {

constexpr char kMagic[4] = {'P', 'G', 'R', 'D'};

class Writer {
 public:
  void Bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Record(const std::string& name, const Tensor& t) {
    U32(static_cast<std::uint32_t>(name.size()));
    Bytes(name.data(), name.size());
    U32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) U64(e);
    for (double v : t.data()) F64(v);
  }
  std::vector<std::uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  bool AtEnd() const { return pos_ == in_.size(); }
  std::size_t offset() const { return pos_; }
  void Need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n)
      throw Error(std::string("weight file truncated reading ") + what + " at byte offset " +
                  std::to_string(pos_));
  }
  std::uint32_t U32(const char* what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t U64(const char* what) {
    Need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string Str(std::size_t n, const char* what) {
    Need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

Tensor VectorOf(const std::vector<std::size_t>& v) {
  std::vector<double> d(v.begin(), v.end());
  return Tensor::Vector(std::move(d));
}

std::size_t AsExtent(double v, const std::string& what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e12)
    throw Error("weight file: invalid integer in " + what);
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::uint8_t> EncodeWeights(const Model& model, const WeightMetadata& metadata) {
  Writer w;
  w.Bytes(kMagic, 4);
  w.U32(kWeightFormatVersion);
  w.Record("model.input_shape", VectorOf(model.input_shape()));
  const std::size_t n = model.layers().size();
  Tensor layers({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& s = model.layers()[i].spec;
    layers[i * 4 + 0] = static_cast<double>(s.kind);
    layers[i * 4 + 1] = static_cast<double>(s.in);
    layers[i * 4 + 2] = static_cast<double>(s.out);
    layers[i * 4 + 3] = static_cast<double>(s.kernel);
  }
  w.Record("model.layers", layers);
  w.Record("model.tap", Tensor::Scalar(model.representation_tap()));
  for (const auto& [name, tensor] : model.NamedWeights()) w.Record(name, *tensor);
  for (const auto& [name, tensor] : metadata) {
    if (!name.starts_with("meta.")) throw Error("metadata record '" + name + "' must start with meta.");
    w.Record(name, tensor);
  }
  return w.Take();
}

Model DecodeWeights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.Str(4, "magic");
  if (magic != std::string(kMagic, 4)) throw Error("weight file: bad magic at byte offset 0");
  const std::size_t version_offset = r.offset();
  const std::uint32_t version = r.U32("version");
  if (version != kWeightFormatVersion)
    throw Error("weight file version " + std::to_string(version) + " at byte offset " +
                std::to_string(version_offset) + " is not supported (expected version " +
                std::to_string(kWeightFormatVersion) + ")");

  std::map<std::string, Tensor> records;
  std::vector<std::string> order;
  while (!r.AtEnd()) {
    const std::size_t start = r.offset();
    const std::uint32_t name_len = r.U32("name length");
    const std::string name = r.Str(name_len, "name");
    const std::uint32_t rank = r.U32("rank");
    if (rank > 8)
      throw Error("weight file: implausible rank " + std::to_string(rank) + " at byte offset " +
                  std::to_string(r.offset() - 4));
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.U64("extent"));
    const std::size_t count = ShapeSize(shape);
    r.Need(count * 8, "payload");
    std::vector<double> data(count);
    for (double& v : data) v = std::bit_cast<double>(r.U64("payload"));
    if (records.count(name))
      throw Error("weight file: duplicate record '" + name + "' at byte offset " +
                  std::to_string(start));
    Tensor t(std::move(shape), std::move(data));
    if (!t.AllFinite())
      throw Error("weight file: non-finite value in record '" + name + "' at byte offset " +
                  std::to_string(start));
    records.emplace(name, std::move(t));
    order.push_back(name);
  }

  auto take = [&](const std::string& name) -> Tensor {
    auto it = records.find(name);
    if (it == records.end()) throw Error("weight file: missing record '" + name + "'");
    return it->second;
  };
  const Tensor in_shape = take("model.input_shape");
  Shape input_shape;
  for (double v : in_shape.data()) input_shape.push_back(AsExtent(v, "model.input_shape"));
  const Tensor spec = take("model.layers");
  if (spec.rank() != 2 || spec.dim(1) != 4) throw Error("weight file: model.layers must be [L, 4]");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < spec.dim(0); ++i) {
    const std::size_t kind = AsExtent(spec[i * 4], "layer kind");
    if (kind > static_cast<std::size_t>(LayerKind::kMax))
      throw Error("weight file: unknown layer kind " + std::to_string(kind));
    Layer layer;
    layer.spec = {static_cast<LayerKind>(kind), AsExtent(spec[i * 4 + 1], "layer in"),
                  AsExtent(spec[i * 4 + 2], "layer out"), AsExtent(spec[i * 4 + 3], "layer kernel")};
    layers.push_back(std::move(layer));
  }
  const Tensor tap = take("model.tap");
  // Attach parameters by name: "<layer>.<param>" in the order NamedWeights emits.
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = std::to_string(i) + ".";
    const bool bn = layers[i].spec.kind == LayerKind::kBatchNorm;
    const bool parametric = layers[i].spec.kind == LayerKind::kDense ||
                            layers[i].spec.kind == LayerKind::kConv2d;
    if (bn) {
      for (const char* p : {"gamma", "beta", "running_mean", "running_var"})
        layers[i].params.push_back(take(prefix + p));
    } else if (parametric) {
      layers[i].params.push_back(take(prefix + "weight"));
      layers[i].params.push_back(take(prefix + "bias"));
    }
  }
  return Model::FromLayers(std::move(input_shape), std::move(layers),
                           static_cast<int>(tap[0]));
}

void SaveWeights(const Model& model, const std::filesystem::path& path,
                 const WeightMetadata& metadata) {
  const std::vector<std::uint8_t> bytes = EncodeWeights(model, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Model LoadWeights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return DecodeWeights(bytes);
}

}  // namespace pathgrad
