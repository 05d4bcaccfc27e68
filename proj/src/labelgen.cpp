#include "pigseg/labelgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

namespace pigseg {

namespace {

// Annotation indices (0-based) ordered by increasing depth rank, i.e.
// farthest animal first.
std::vector<std::size_t> paint_order(const Scene& s) {
  std::vector<std::size_t> order(s.ellipses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
    return s.ellipses[lhs].depth < s.ellipses[rhs].depth;
  });
  return order;
}

template <typename ClassOf>
LabelImage render_with(const Scene& s, LabelKind kind, ClassOf&& class_of) {
  require_valid(s);
  LabelImage image(s.width, s.height, kind);
  const GridSpec grid{s.width, s.height};
  for (std::size_t idx : paint_order(s)) {
    const Ellipse& e = s.ellipses[idx];
    for (const auto& [x, y] : raster_pixels(e, grid)) image.at(x, y) = class_of(idx, e, x, y);
  }
  return image;
}

}  // namespace

bool is_valid(const Scene& s) {
  if (s.width <= 0 || s.height <= 0) return false;
  std::set<int> depths;
  for (const Ellipse& e : s.ellipses) {
    if (!is_valid(e)) return false;
    if (e.cx < 0.0 || e.cx >= s.width || e.cy < 0.0 || e.cy >= s.height) return false;
    if (!depths.insert(e.depth).second) return false;
  }
  return true;
}

void require_valid(const Scene& s) {
  if (!is_valid(s))
    throw std::invalid_argument("scene requires positive dimensions, in-bounds centers and unique depths");
}

Scene read_scene_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  Scene s;
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  for (const auto& item : j.at("ellipses")) s.ellipses.push_back(item.get<Ellipse>());
  require_valid(s);
  return s;
}

void write_scene_json(const std::string& path, const Scene& s) {
  nlohmann::json j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["ellipses"] = nlohmann::json::array();
  for (const Ellipse& e : s.ellipses) j["ellipses"].push_back(e);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

LabelImage render_binary(const Scene& s) {
  return render_with(s, LabelKind::binary, [](std::size_t, const Ellipse&, int, int) -> uint16_t {
    return 1;
  });
}

LabelImage render_instance(const Scene& s) {
  return render_with(s, LabelKind::instance,
                     [](std::size_t idx, const Ellipse&, int, int) -> uint16_t {
                       return static_cast<uint16_t>(idx + 1);
                     });
}

LabelImage render_categorical(const Scene& s, double core_factor) {
  if (!(core_factor > 0.0 && core_factor < 1.0))
    throw std::invalid_argument("core_factor must lie in (0, 1)");
  return render_with(s, LabelKind::categorical3,
                     [&](std::size_t, const Ellipse& e, int x, int y) -> uint16_t {
                       return contains(scale(e, core_factor), x, y) ? 2 : 1;
                     });
}

LabelImage render_bodypart(const Scene& s, double head_fraction) {
  if (!(head_fraction > 0.0 && head_fraction < 1.0))
    throw std::invalid_argument("head_fraction must lie in (0, 1)");
  for (const Ellipse& e : s.ellipses)
    if (e.head_sign == HeadSign::unknown)
      throw std::invalid_argument("render_bodypart requires known head_sign on every ellipse");
  return render_with(s, LabelKind::bodypart3,
                     [&](std::size_t, const Ellipse& e, int x, int y) -> uint16_t {
                       const double phi = directed_angle(e);
                       const double proj =
                           (x - e.cx) * std::cos(phi) + (y - e.cy) * std::sin(phi);
                       return proj > (1.0 - 2.0 * head_fraction) * e.a ? 2 : 1;
                     });
}

std::vector<PixelSet> blob_search(const LabelImage& li, uint16_t target_class) {
  const int w = li.width();
  const int h = li.height();
  std::vector<uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
  std::vector<PixelSet> blobs;
  std::vector<std::pair<int, int>> stack;
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      if (visited[at] || li.at(x, y) != target_class) continue;
      PixelSet blob;
      stack.assign(1, {x, y});
      visited[at] = 1;
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        blob.emplace_back(px, py);
        for (int k = 0; k < 4; ++k) {
          const int nx = px + dx[k];
          const int ny = py + dy[k];
          if (!li.in_bounds(nx, ny)) continue;
          const std::size_t nat = static_cast<std::size_t>(ny) * w + nx;
          if (visited[nat] || li.at(nx, ny) != target_class) continue;
          visited[nat] = 1;
          stack.emplace_back(nx, ny);
        }
      }
      std::sort(blob.begin(), blob.end(), [](const auto& lhs, const auto& rhs) {
        return lhs.second != rhs.second ? lhs.second < rhs.second : lhs.first < rhs.first;
      });
      blobs.push_back(std::move(blob));
    }
  }
  return blobs;
}

std::vector<std::pair<double, double>> region_boundary_points(const PixelSet& region,
                                                              int width, int height) {
  std::vector<uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  for (const auto& [x, y] : region) mask[static_cast<std::size_t>(y) * width + x] = 1;
  static constexpr int dx[4] = {1, -1, 0, 0};
  static constexpr int dy[4] = {0, 0, 1, -1};
  std::vector<std::pair<double, double>> points;
  for (const auto& [x, y] : region) {
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      const bool outside = nx < 0 || nx >= width || ny < 0 || ny >= height ||
                           mask[static_cast<std::size_t>(ny) * width + nx] == 0;
      if (outside) points.emplace_back((x + nx) / 2.0, (y + ny) / 2.0);
    }
  }
  return points;
}

namespace {

GtExtraction extract_gt_impl(const LabelImage& instance_image, const Scene* source,
                             int min_pixels) {
  if (instance_image.kind() != LabelKind::instance)
    throw std::invalid_argument("extract_gt_ellipses expects an instance label image");
  std::map<uint16_t, PixelSet> regions;
  for (int y = 0; y < instance_image.height(); ++y)
    for (int x = 0; x < instance_image.width(); ++x)
      if (const uint16_t id = instance_image.at(x, y); id != 0) regions[id].emplace_back(x, y);

  GtExtraction out;
  for (const auto& [id, region] : regions) {
    if (static_cast<int>(region.size()) < min_pixels) {
      out.skipped_ids.push_back(id);
      continue;
    }
    try {
      const auto boundary =
          region_boundary_points(region, instance_image.width(), instance_image.height());
      Ellipse fitted = fit_ellipse(boundary);
      if (source != nullptr && id >= 1 &&
          static_cast<std::size_t>(id) <= source->ellipses.size()) {
        const Ellipse& annotated = source->ellipses[id - 1];
        fitted.depth = annotated.depth;
        if (annotated.head_sign != HeadSign::unknown) {
          // Pick the fitted-axis end closest to the annotated direction.
          const double target = directed_angle(annotated);
          const double diff = std::remainder(target - fitted.theta, 2.0 * M_PI);
          fitted.head_sign =
              std::abs(diff) <= M_PI / 2.0 ? HeadSign::positive : HeadSign::negative;
        }
      }
      out.ellipses.push_back({id, fitted});
    } catch (const fit_error&) {
      out.skipped_ids.push_back(id);
    }
  }
  return out;
}

}  // namespace

GtExtraction extract_gt_ellipses(const LabelImage& instance_image, int min_pixels) {
  return extract_gt_impl(instance_image, nullptr, min_pixels);
}

GtExtraction extract_gt_ellipses(const LabelImage& instance_image, const Scene& source,
                                 int min_pixels) {
  return extract_gt_impl(instance_image, &source, min_pixels);
}

CategoricalExtraction ellipses_from_categorical(const LabelImage& categorical,
                                                double core_factor, int min_pixels) {
  if (categorical.kind() != LabelKind::categorical3)
    throw std::invalid_argument("ellipses_from_categorical expects a categorical3 image");
  if (!(core_factor > 0.0 && core_factor < 1.0))
    throw std::invalid_argument("core_factor must lie in (0, 1)");

  CategoricalExtraction out;
  for (const PixelSet& blob : blob_search(categorical, 2)) {
    if (static_cast<int>(blob.size()) < min_pixels) {
      ++out.skipped_blobs;
      continue;
    }
    try {
      const auto boundary = region_boundary_points(blob, categorical.width(), categorical.height());
      out.ellipses.push_back(scale(fit_ellipse(boundary), 1.0 / core_factor));
    } catch (const fit_error&) {
      ++out.skipped_blobs;
    }
  }
  return out;
}

}  // namespace pigseg
