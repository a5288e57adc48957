#include "pathgrad/pnm.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace pathgrad {

namespace {

std::size_t ImageArea(const Tensor& t) {
  if (t.rank() == 2) return t.dim(0) * t.dim(1);
  if (t.rank() == 3 && t.dim(0) == 1) return t.dim(1) * t.dim(2);
  throw Error("image tensors must be [H, W] or [1, H, W], got " + ShapeString(t.shape()));
}

std::pair<std::size_t, std::size_t> HeightWidth(const Tensor& t) {
  ImageArea(t);
  return t.rank() == 2 ? std::pair{t.dim(0), t.dim(1)} : std::pair{t.dim(1), t.dim(2)};
}

std::uint8_t ToByte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  std::size_t Number(const char* what) {
    SkipSpace();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1u << 20) throw Error(std::string("pnm: ") + what + " is too large");
      ++pos_;
    }
    if (pos_ == start)
      throw Error(std::string("pnm: expected ") + what + " at byte " + std::to_string(start));
    return v;
  }

  void SingleWhitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw Error("pnm: expected whitespace before pixel data at byte " + std::to_string(pos_));
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void Skip(std::size_t n) { pos_ += n; }

 private:
  void SkipSpace() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> EncodePnm(const Image& image, const std::vector<std::string>& comments) {
  if (image.channels != 1 && image.channels != 3) throw Error("pnm: channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw Error("pnm: pixel buffer does not match dimensions");
  std::string header = image.channels == 1 ? "P5\n" : "P6\n";
  for (const std::string& c : comments) {
    if (c.find('\n') != std::string::npos) throw Error("pnm: comments must be single lines");
    header += "# " + c + "\n";
  }
  header += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image DecodePnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw Error("pnm: expected P5 or P6 magic at byte 0");
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  Reader r(bytes);
  r.Skip(2);
  img.width = r.Number("width");
  img.height = r.Number("height");
  const std::size_t maxval = r.Number("maxval");
  if (maxval != 255) throw Error("pnm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (img.width == 0 || img.height == 0) throw Error("pnm: zero image dimension");
  r.SingleWhitespace();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - r.pos() < need)
    throw Error("pnm: truncated pixel data at byte " + std::to_string(r.pos()) + ", need " +
                std::to_string(need) + " bytes");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos() + need));
  return img;
}

void WritePnm(const Image& image, const std::filesystem::path& path,
              const std::vector<std::string>& comments) {
  const std::vector<std::uint8_t> bytes = EncodePnm(image, comments);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Image ReadPnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return DecodePnm(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Image GrayFromTensor(const Tensor& t) {
  const auto [h, w] = HeightWidth(t);
  Image img{w, h, 1, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = ToByte(t[i]);
  return img;
}

Tensor TensorFromGray(const Image& image) {
  if (image.channels != 1) throw Error("expected a grayscale (P5) image");
  Tensor t({1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
  return t;
}

Image MagnitudeHeatmap(const Tensor& scores) {
  const auto [h, w] = HeightWidth(scores);
  double peak = 0.0;
  for (double v : scores.data()) peak = std::max(peak, std::abs(v));
  Image img{w, h, 1, std::vector<std::uint8_t>(h * w, 0)};
  if (peak > 0.0)
    for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = ToByte(std::abs(scores[i]) / peak);
  return img;
}

Image SignedHeatmap(const Tensor& scores) {
  const auto [h, w] = HeightWidth(scores);
  double peak = 0.0;
  for (double v : scores.data()) peak = std::max(peak, std::abs(v));
  Image img{w, h, 3, std::vector<std::uint8_t>(h * w * 3, 0)};
  if (peak > 0.0)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = scores[i] / peak;
      img.pixels[3 * i + (v < 0.0 ? 0 : 1)] = ToByte(std::abs(v));
    }
  return img;
}

Tensor MaskFromGray(const Image& image) {
  Tensor t = TensorFromGray(image);
  for (double& v : t.data()) v = v > 0.0 ? 1.0 : 0.0;
  return t;
}

}  // namespace pathgrad
