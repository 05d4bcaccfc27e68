#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pigseg {

enum class LabelKind {
  binary,        // 0 background, 1 pig
  categorical3,  // 0 background, 1 outer edge, 2 inner core
  instance,      // 0 background, 1..K instance ids
  bodypart3,     // 0 background, 1 body, 2 head
};

/// Dense per-pixel label grid. Values are class ids or instance ids
/// depending on kind; immutable after construction by convention.
class LabelImage {
 public:
  LabelImage() = default;
  LabelImage(int width, int height, LabelKind kind, uint16_t fill = 0)
      : width_(width), height_(height), kind_(kind),
        pixels_(static_cast<std::size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("label image dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  LabelKind kind() const { return kind_; }

  uint16_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  uint16_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  const std::vector<uint16_t>& pixels() const { return pixels_; }
  uint16_t max_label() const;

  bool operator==(const LabelImage& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  LabelKind kind_ = LabelKind::binary;
  std::vector<uint16_t> pixels_;
};

/// Per-pixel real-valued channels (grayscale or color), values in [0, 1].
class FeatureImage {
 public:
  FeatureImage() = default;
  FeatureImage(int width, int height, int channels)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, 0.0) {
    if (width <= 0 || height <= 0 || channels <= 0)
      throw std::invalid_argument("feature image dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  double at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const std::vector<double>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Binary PGM (P5). Label values are written as pixel values; 16-bit
/// big-endian samples are used whenever a label exceeds 255.
void write_pgm(const std::string& path, const LabelImage& image);
LabelImage read_pgm(const std::string& path, LabelKind kind);

/// Grayscale feature image quantized to 8-bit.
void write_pgm(const std::string& path, const FeatureImage& image);
FeatureImage read_feature_pgm(const std::string& path);

}  // namespace pigseg
