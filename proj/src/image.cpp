#include "pigseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pigseg {

namespace {

void skip_pgm_whitespace(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
}

int read_pgm_int(std::istream& in) {
  skip_pgm_whitespace(in);
  int value = 0;
  if (!(in >> value)) throw std::runtime_error("malformed PGM header");
  return value;
}

}  // namespace

uint16_t LabelImage::max_label() const {
  uint16_t m = 0;
  for (uint16_t v : pixels_) m = std::max(m, v);
  return m;
}

void write_pgm(const std::string& path, const LabelImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int maxval = image.max_label() > 255 ? 65535 : 255;
  out << "P5\n" << image.width() << " " << image.height() << "\n" << maxval << "\n";
  if (maxval == 255) {
    std::vector<uint8_t> row(static_cast<std::size_t>(image.width()));
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) row[x] = static_cast<uint8_t>(image.at(x, y));
      out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
  } else {
    // 16-bit PGM samples are big-endian.
    std::vector<uint8_t> row(static_cast<std::size_t>(image.width()) * 2);
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const uint16_t v = image.at(x, y);
        row[2 * x] = static_cast<uint8_t>(v >> 8);
        row[2 * x + 1] = static_cast<uint8_t>(v & 0xff);
      }
      out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

LabelImage read_pgm(const std::string& path, LabelKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') throw std::runtime_error(path + " is not a binary PGM");
  const int width = read_pgm_int(in);
  const int height = read_pgm_int(in);
  const int maxval = read_pgm_int(in);
  in.get();  // single whitespace after maxval
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error("malformed PGM header in " + path);

  LabelImage image(width, height, kind);
  if (maxval <= 255) {
    std::vector<uint8_t> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
      in.read(reinterpret_cast<char*>(row.data()), row.size());
      if (!in) throw std::runtime_error("truncated PGM data in " + path);
      for (int x = 0; x < width; ++x) image.at(x, y) = row[x];
    }
  } else {
    std::vector<uint8_t> row(static_cast<std::size_t>(width) * 2);
    for (int y = 0; y < height; ++y) {
      in.read(reinterpret_cast<char*>(row.data()), row.size());
      if (!in) throw std::runtime_error("truncated PGM data in " + path);
      for (int x = 0; x < width; ++x)
        image.at(x, y) = static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  return image;
}

void write_pgm(const std::string& path, const FeatureImage& image) {
  if (image.channels() != 1)
    throw std::invalid_argument("feature PGM output supports single-channel images");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<uint8_t> row(static_cast<std::size_t>(image.width()));
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double v = std::clamp(image.at(x, y, 0), 0.0, 1.0);
      row[x] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

FeatureImage read_feature_pgm(const std::string& path) {
  LabelImage raw = read_pgm(path, LabelKind::binary);
  FeatureImage image(raw.width(), raw.height(), 1);
  for (int y = 0; y < raw.height(); ++y)
    for (int x = 0; x < raw.width(); ++x) image.at(x, y, 0) = raw.at(x, y) / 255.0;
  return image;
}

}  // namespace pigseg
