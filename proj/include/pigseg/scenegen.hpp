#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pigseg/labelgen.hpp"

namespace pigseg {

/// Thrown on unusable inputs: malformed files, infeasible generation
/// constraints, mismatched manifests.
struct data_error : std::runtime_error {
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  int n_animals = 4;
  double a_min = 14.0;
  double a_max = 20.0;
  double b_min = 7.0;
  double b_max = 10.0;
  double max_overlap = 0.15;  // pairwise raster intersection over smaller raster
  uint64_t seed = 0;
  double noise_sigma = 0.02;
  double texture_amplitude = 0.05;
};

bool is_valid(const SceneSpec& spec);
void require_valid(const SceneSpec& spec);

SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json scene_spec_to_json(const SceneSpec& spec);

struct GeneratedScene {
  Scene scene;
  FeatureImage features;
};

/// Seeded rejection-sampled placement: ellipses lie fully inside the
/// image, pairwise raster overlap stays below max_overlap, depth ranks
/// and head signs are randomized. Each animal gets a distinct mean
/// intensity over a textured background plus Gaussian pixel noise.
/// Throws data_error naming the constraint when the attempt budget
/// (1000 per ellipse) runs out.
GeneratedScene generate_scene(const SceneSpec& spec);

/// Writes scene_<k>/{annotations.json, features.pgm, binary.pgm,
/// categorical.pgm, instance.pgm, bodypart.pgm} per spec plus a
/// manifest.json; returns the scene directory names.
std::vector<std::string> generate_suite(const std::vector<SceneSpec>& specs,
                                        const std::string& directory, double core_factor,
                                        double head_fraction);

struct Manifest {
  std::vector<std::string> scene_dirs;
  std::vector<SceneSpec> specs;
  double core_factor = 0.5;
  double head_fraction = 0.3;
};

Manifest read_manifest(const std::string& directory);

}  // namespace pigseg
