#include "pathgrad_cli/io.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pathgrad/pnm.h"
#include "pathgrad/version.h"

namespace pathgrad::cli {

std::uint64_t Fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string Provenance::ConfigHash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(config.dump())));
  return buf;
}

std::string Provenance::Line() const {
  return std::string("pathgrad ") + kVersion + " seed=" + std::to_string(seed) +
         " config=" + ConfigHash();
}

nlohmann::json Provenance::ToJson() const {
  return {{"version", kVersion}, {"seed", seed}, {"config_hash", ConfigHash()}, {"config", config}};
}

void PrepareOutputDir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw Error("output directory " + dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void EnsureDir(const fs::path& dir) { fs::create_directories(dir); }

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteJson(const fs::path& path, const nlohmann::json& j) { WriteText(path, j.dump(2) + "\n"); }

std::string FormatDouble(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

namespace {

double ParseNumber(const std::string& s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  return v;
}

std::string ImageName(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.pgm", i);
  return buf;
}

}  // namespace

void WriteTabular(const fs::path& path, const Dataset& data, const Provenance& prov) {
  data.Validate();
  std::string out = "# " + prov.Line() + "\n";
  for (const std::string& name : data.feature_names) out += name + ",";
  out += "label\n";
  for (std::size_t s = 0; s < data.size(); ++s) {
    for (double v : data.inputs[s].data()) out += FormatDouble(v) + ",";
    out += FormatDouble(data.labels[s]) + "\n";
  }
  WriteText(path, out);
}

Dataset ReadTabular(const fs::path& path) {
  std::istringstream in(ReadText(path));
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = SplitCsv(line);
    if (!header) {
      if (cells.size() < 2 || cells.back() != "label")
        throw Error(path.string() + ":" + std::to_string(lineno) +
                    ": header must list features followed by 'label'");
      cells.pop_back();
      data.feature_names = std::move(cells);
      header = true;
      continue;
    }
    if (cells.size() != data.feature_names.size() + 1)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(data.feature_names.size() + 1) + " columns, got " +
                  std::to_string(cells.size()));
    std::vector<double> v;
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) v.push_back(ParseNumber(cells[i], path, lineno));
    const std::size_t width = v.size();
    data.inputs.push_back(Tensor::FromExternal({width}, std::move(v)));
    data.labels.push_back(ParseNumber(cells.back(), path, lineno));
  }
  if (!header) throw Error(path.string() + ": missing header line");
  if (data.size() == 0) throw Error(path.string() + ": no samples");
  return data;
}

void WriteImageDataset(const fs::path& dir, const ImageDataset& data, const Provenance& prov) {
  EnsureDir(dir / "images");
  EnsureDir(dir / "masks");
  std::string labels = "# " + prov.Line() + "\nfile,label\n";
  for (std::size_t s = 0; s < data.data.size(); ++s) {
    const std::string name = ImageName(s);
    WritePnm(GrayFromTensor(data.data.inputs[s]), dir / "images" / name, {prov.Line()});
    WritePnm(GrayFromTensor(data.masks[s]), dir / "masks" / name, {prov.Line()});
    labels += name + "," + FormatDouble(data.data.labels[s]) + "\n";
  }
  WriteText(dir / "labels.csv", labels);
}

ImageDataset ReadImageDataset(const fs::path& dir) {
  const fs::path labels = dir / "labels.csv";
  std::istringstream in(ReadText(labels));
  ImageDataset out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> cells = SplitCsv(line);
    if (!header) {
      if (cells.size() != 2 || cells[0] != "file" || cells[1] != "label")
        throw Error(labels.string() + ":" + std::to_string(lineno) + ": header must be 'file,label'");
      header = true;
      continue;
    }
    if (cells.size() != 2)
      throw Error(labels.string() + ":" + std::to_string(lineno) + ": expected 2 columns");
    out.data.inputs.push_back(TensorFromGray(ReadPnm(dir / "images" / cells[0])));
    const fs::path mask = dir / "masks" / cells[0];
    out.masks.push_back(fs::exists(mask) ? MaskFromGray(ReadPnm(mask)) : Tensor());
    out.data.labels.push_back(ParseNumber(cells[1], labels, lineno));
  }
  if (out.data.size() == 0) throw Error(labels.string() + ": no samples");
  const Shape& shape = out.data.inputs.front().shape();
  for (std::size_t r = 0; r < shape[1]; ++r)
    for (std::size_t c = 0; c < shape[2]; ++c)
      out.data.feature_names.push_back("p" + std::to_string(r) + "_" + std::to_string(c));
  out.data.Validate();
  return out;
}

LoadedData LoadData(const fs::path& path) {
  if (!fs::exists(path)) throw Error("dataset " + path.string() + " does not exist");
  LoadedData d;
  if (fs::is_directory(path)) {
    d.images = ReadImageDataset(path);
    d.is_image = true;
  } else {
    d.images.data = ReadTabular(path);
  }
  return d;
}

Split SplitIndices(std::size_t n, double train_fraction) {
  Split s;
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) (i < cut ? s.train : s.heldout).push_back(i);
  return s;
}

}  // namespace pathgrad::cli
