#include "pigseg/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

namespace pigseg {

namespace {

constexpr int kAttemptsPerEllipse = 1000;

// Hand-rolled draws keep the stream layout independent of library
// distribution internals.
struct Rng {
  std::mt19937_64 engine;

  explicit Rng(uint64_t seed) : engine(seed) {}

  double uniform01() { return (engine() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double gaussian() {
    const double u1 = std::max(uniform01(), 1e-300);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(engine() % static_cast<uint64_t>(hi - lo + 1));
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(engine() % i)]);
  }
};

double overlap_fraction(const std::vector<std::pair<int, int>>& a,
                        const std::vector<std::pair<int, int>>& b) {
  if (a.empty() || b.empty()) return 0.0;
  // Raster pixel lists are row-major sorted.
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  auto key = [](const std::pair<int, int>& p) { return std::pair<int, int>(p.second, p.first); };
  while (ia != a.end() && ib != b.end()) {
    if (key(*ia) < key(*ib)) {
      ++ia;
    } else if (key(*ib) < key(*ia)) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(std::min(a.size(), b.size()));
}

bool fully_inside(const Ellipse& e, int width, int height) {
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double ex = std::sqrt(e.a * e.a * ct * ct + e.b * e.b * st * st);
  const double ey = std::sqrt(e.a * e.a * st * st + e.b * e.b * ct * ct);
  return e.cx - ex >= 0.0 && e.cx + ex <= width - 1.0 && e.cy - ey >= 0.0 &&
         e.cy + ey <= height - 1.0;
}

}  // namespace

bool is_valid(const SceneSpec& spec) {
  return spec.width > 0 && spec.height > 0 && spec.n_animals >= 0 && spec.a_min > 0.0 &&
         spec.a_max >= spec.a_min && spec.b_min > 0.0 && spec.b_max >= spec.b_min &&
         spec.a_min >= spec.b_min && spec.max_overlap >= 0.0 && spec.max_overlap < 1.0 &&
         spec.noise_sigma >= 0.0 && spec.texture_amplitude >= 0.0;
}

void require_valid(const SceneSpec& spec) {
  if (!is_valid(spec)) throw data_error("scene spec violates its field constraints");
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.width = j.at("width").get<int>();
  spec.height = j.at("height").get<int>();
  spec.n_animals = j.at("n_animals").get<int>();
  spec.a_min = j.at("a_min").get<double>();
  spec.a_max = j.at("a_max").get<double>();
  spec.b_min = j.at("b_min").get<double>();
  spec.b_max = j.at("b_max").get<double>();
  spec.max_overlap = j.at("max_overlap").get<double>();
  spec.seed = j.at("seed").get<uint64_t>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  spec.texture_amplitude = j.at("texture_amplitude").get<double>();
  require_valid(spec);
  return spec;
}

nlohmann::json scene_spec_to_json(const SceneSpec& spec) {
  return nlohmann::json{{"width", spec.width},
                        {"height", spec.height},
                        {"n_animals", spec.n_animals},
                        {"a_min", spec.a_min},
                        {"a_max", spec.a_max},
                        {"b_min", spec.b_min},
                        {"b_max", spec.b_max},
                        {"max_overlap", spec.max_overlap},
                        {"seed", spec.seed},
                        {"noise_sigma", spec.noise_sigma},
                        {"texture_amplitude", spec.texture_amplitude}};
}

GeneratedScene generate_scene(const SceneSpec& spec) {
  require_valid(spec);
  Rng rng(spec.seed);

  Scene scene;
  scene.width = spec.width;
  scene.height = spec.height;
  const GridSpec grid{spec.width, spec.height};
  std::vector<std::vector<std::pair<int, int>>> rasters;

  for (int k = 0; k < spec.n_animals; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttemptsPerEllipse && !placed; ++attempt) {
      Ellipse e;
      e.cx = rng.uniform(0.0, spec.width - 1.0);
      e.cy = rng.uniform(0.0, spec.height - 1.0);
      e.a = rng.uniform(spec.a_min, spec.a_max);
      e.b = rng.uniform(spec.b_min, std::min(spec.b_max, e.a));
      e.theta = rng.uniform(0.0, M_PI);
      e.head_sign = rng.uniform01() < 0.5 ? HeadSign::positive : HeadSign::negative;
      if (!fully_inside(e, spec.width, spec.height)) continue;

      auto raster = raster_pixels(e, grid);
      bool ok = !raster.empty();
      for (const auto& other : rasters) {
        if (overlap_fraction(raster, other) > spec.max_overlap) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      scene.ellipses.push_back(e);
      rasters.push_back(std::move(raster));
      placed = true;
    }
    if (!placed)
      throw data_error("placement budget exhausted for animal " + std::to_string(k) +
                       ": cannot satisfy max_overlap " + std::to_string(spec.max_overlap) +
                       " inside " + std::to_string(spec.width) + "x" + std::to_string(spec.height));
  }

  // Random unique depth ranks.
  std::vector<int> ranks(scene.ellipses.size());
  std::iota(ranks.begin(), ranks.end(), 1);
  rng.shuffle(ranks);
  for (std::size_t i = 0; i < scene.ellipses.size(); ++i) scene.ellipses[i].depth = ranks[i];

  // Distinct mean intensities keep the animals separable in feature space.
  std::vector<double> intensities(scene.ellipses.size());
  for (std::size_t i = 0; i < intensities.size(); ++i)
    intensities[i] = intensities.size() == 1
                         ? 0.7
                         : 0.45 + 0.5 * static_cast<double>(i) / (intensities.size() - 1.0);
  rng.shuffle(intensities);

  const double fx = rng.uniform(1.0, 3.0);
  const double fy = rng.uniform(1.0, 3.0);
  const double phase_x = rng.uniform(0.0, 2.0 * M_PI);
  const double phase_y = rng.uniform(0.0, 2.0 * M_PI);

  GeneratedScene out;
  out.scene = std::move(scene);
  out.features = FeatureImage(spec.width, spec.height, 1);
  const LabelImage instances = render_instance(out.scene);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const uint16_t id = instances.at(x, y);
      double base;
      if (id == 0) {
        base = 0.18 + spec.texture_amplitude *
                          (std::sin(2.0 * M_PI * fx * x / spec.width + phase_x) +
                           std::sin(2.0 * M_PI * fy * y / spec.height + phase_y)) / 2.0;
      } else {
        base = intensities[id - 1];
      }
      out.features.at(x, y, 0) = std::clamp(base + spec.noise_sigma * rng.gaussian(), 0.0, 1.0);
    }
  }
  return out;
}

std::vector<std::string> generate_suite(const std::vector<SceneSpec>& specs,
                                        const std::string& directory, double core_factor,
                                        double head_fraction) {
  if (specs.empty()) throw data_error("suite needs at least one scene spec");
  namespace fs = std::filesystem;
  fs::create_directories(directory);

  Manifest manifest;
  manifest.specs = specs;
  manifest.core_factor = core_factor;
  manifest.head_fraction = head_fraction;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::string name = "scene_" + std::to_string(k);
    const fs::path scene_dir = fs::path(directory) / name;
    fs::create_directories(scene_dir);

    const GeneratedScene generated = generate_scene(specs[k]);
    write_scene_json((scene_dir / "annotations.json").string(), generated.scene);
    write_pgm((scene_dir / "features.pgm").string(), generated.features);
    write_pgm((scene_dir / "binary.pgm").string(), render_binary(generated.scene));
    write_pgm((scene_dir / "categorical.pgm").string(),
              render_categorical(generated.scene, core_factor));
    write_pgm((scene_dir / "instance.pgm").string(), render_instance(generated.scene));
    write_pgm((scene_dir / "bodypart.pgm").string(),
              render_bodypart(generated.scene, head_fraction));
    manifest.scene_dirs.push_back(name);
  }

  nlohmann::json j;
  j["scenes"] = manifest.scene_dirs;
  j["core_factor"] = core_factor;
  j["head_fraction"] = head_fraction;
  j["specs"] = nlohmann::json::array();
  for (const SceneSpec& spec : specs) j["specs"].push_back(scene_spec_to_json(spec));
  std::ofstream out(fs::path(directory) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + directory);
  out << j.dump(2) << "\n";
  return manifest.scene_dirs;
}

Manifest read_manifest(const std::string& directory) {
  const std::string path = (std::filesystem::path(directory) / "manifest.json").string();
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error(std::string("malformed manifest: ") + e.what());
  }
  Manifest manifest;
  manifest.scene_dirs = j.at("scenes").get<std::vector<std::string>>();
  manifest.core_factor = j.at("core_factor").get<double>();
  manifest.head_fraction = j.at("head_fraction").get<double>();
  for (const auto& item : j.at("specs")) manifest.specs.push_back(scene_spec_from_json(item));
  return manifest;
}

}  // namespace pigseg
