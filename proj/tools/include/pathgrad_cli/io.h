#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrad/image_data.h"
#include "pathgrad/train.h"

namespace pathgrad::cli {

namespace fs = std::filesystem;

/// 64-bit FNV-1a.
std::uint64_t Fnv1a(std::string_view bytes);

/// Engine version, seed and a hash of the canonical run config. Every output
/// file carries one.
struct Provenance {
  std::uint64_t seed = 0;
  nlohmann::json config;

  std::string ConfigHash() const;  // 16 hex digits
  /// "pathgrad <version> seed=<seed> config=<hash>"
  std::string Line() const;
  nlohmann::json ToJson() const;
};

/// Creates dir. An existing non-empty dir is an error unless force is set.
void PrepareOutputDir(const fs::path& dir, bool force);
/// Creates dir if missing; existing contents are left alone.
void EnsureDir(const fs::path& dir);

void WriteText(const fs::path& path, const std::string& text);
std::string ReadText(const fs::path& path);
/// Pretty JSON with a trailing newline; keys are sorted.
void WriteJson(const fs::path& path, const nlohmann::json& j);

/// Shortest text that parses back to the same double.
std::string FormatDouble(double v);

/// Splits a CSV line on commas; no quoting.
std::vector<std::string> SplitCsv(const std::string& line);

/// Tabular dataset: optional '#' comment lines, a header of feature names and
/// a trailing "label" column.
void WriteTabular(const fs::path& path, const Dataset& data, const Provenance& prov);
Dataset ReadTabular(const fs::path& path);

/// Image dataset directory: images/NNNN.pgm, masks/NNNN.pgm and labels.csv
/// ("file,label").
void WriteImageDataset(const fs::path& dir, const ImageDataset& data, const Provenance& prov);
ImageDataset ReadImageDataset(const fs::path& dir);

/// A loaded dataset of either kind. Image datasets carry masks.
struct LoadedData {
  ImageDataset images;
  bool is_image = false;

  const Dataset& data() const { return images.data; }
};

/// Directories load as image datasets, files as tabular CSV.
LoadedData LoadData(const fs::path& path);

/// Fixed split: the first `train_fraction` of samples train, the rest are held out.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};
Split SplitIndices(std::size_t n, double train_fraction = 0.8);

}  // namespace pathgrad::cli
