#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pigseg/clustering.hpp"
#include "pigseg/metrics.hpp"
#include "pigseg/scenegen.hpp"

namespace pigseg {

enum class SegmentMode {
  categorical,
  combined,
  bodypart,
};

SegmentMode segment_mode_from_string(const std::string& name);
std::string to_string(SegmentMode mode);

/// All tunables of the pipeline; defaults follow the reference setup
/// (8-dim embedding, delta_v 0.1, delta_d 1.5, alpha = beta = 1, gamma
/// 0.001, min cluster size 100, core factor 0.5, binary threshold 0.5).
struct PipelineConfig {
  int embedding_dim = 8;
  double delta_v = 0.1;
  double delta_d = 1.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.001;
  int min_cluster_size = 100;
  int min_samples = 25;
  double core_factor = 0.5;
  double head_fraction = 0.3;
  double binary_threshold = 0.5;
  int optimizer_steps = 500;
  double learning_rate = 0.02;
  uint64_t seed = 0;
  DistanceMetric clustering_metric = DistanceMetric::euclidean;
  AveragingMode averaging = AveragingMode::micro;
  bool include_background = true;
  int min_pixels = 10;
  double label_flip_rate = 0.0;   // categorical-mode corruption
  int erosion_iterations = 0;     // categorical-mode core erosion
  int jobs = 1;

  DiscriminativeParams discriminative() const {
    return {delta_v, delta_d, alpha, beta, gamma};
  }
  ClusterParams cluster() const {
    return {min_cluster_size, min_samples, clustering_metric};
  }
  OptimizerSettings optimizer(uint64_t scene_seed) const {
    OptimizerSettings s;
    s.steps = optimizer_steps;
    s.learning_rate = learning_rate;
    s.seed = scene_seed;
    s.include_background = include_background;
    return s;
  }
};

nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);
void write_effective_config(const std::string& directory, const PipelineConfig& config);

/// Thresholds per-pixel foreground probabilities into a binary label
/// image (probability > threshold means foreground).
LabelImage threshold_probabilities(const std::vector<double>& probabilities, int width,
                                   int height, double threshold);

/// Generation spec file: {"scenes": [SceneSpec...]} or
/// {"count": n, "base": SceneSpec} (seeds base.seed .. base.seed+n-1),
/// optionally with "core_factor" and "head_fraction".
void run_generate(const std::string& spec_path, const std::string& output_dir);

struct SegmentSummary {
  int scenes_total = 0;
  int scenes_failed = 0;
  std::vector<std::string> failures;  // "scene_k: message"
};

/// Per scene: derives the predicted ellipses and instance image for the
/// chosen mode and writes them into output_dir/scene_<k>/. Per-scene
/// failures are collected, not fatal.
SegmentSummary run_segment(const std::string& dataset_dir, const std::string& output_dir,
                           SegmentMode mode, const PipelineConfig& config);

struct EvaluationSummary {
  std::vector<EvalReport> per_scene;
  EvalReport aggregate;
};

/// Compares predicted ellipses against occlusion-adjusted ground-truth
/// ellipses (PQ, F1, precision, recall), plus Jaccard accuracy of the
/// pixel output and orientation accuracy where head signs are available.
/// Writes one report JSON per scene, an aggregate JSON, and a CSV summary.
EvaluationSummary run_evaluate(const std::string& pred_dir, const std::string& dataset_dir,
                               const std::string& output_dir, const PipelineConfig& config);

struct EmbedDemoSnapshot {
  int step = 0;
  double loss = 0.0;
  double mean_spread = 0.0;  // within-cluster mean L1 distance to the mean
};

/// Reproduces the optimizer-progress figure: embedding scatter plots and
/// cluster-assignment images after the requested gradient steps (first
/// two embedding axes are plotted when dim > 2).
std::vector<EmbedDemoSnapshot> run_embed_demo(const std::string& dataset_dir, int scene_index,
                                              const std::vector<int>& steps,
                                              const std::string& output_dir,
                                              const PipelineConfig& config);

}  // namespace pigseg
