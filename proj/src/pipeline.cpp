#include "pigseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

namespace pigseg {

namespace fs = std::filesystem;

namespace {

std::string metric_name(DistanceMetric metric) {
  return metric == DistanceMetric::euclidean ? "euclidean" : "manhattan";
}

DistanceMetric metric_from_name(const std::string& name) {
  if (name == "euclidean") return DistanceMetric::euclidean;
  if (name == "manhattan") return DistanceMetric::manhattan;
  throw data_error("unknown clustering metric: " + name);
}

std::string averaging_name(AveragingMode mode) {
  return mode == AveragingMode::micro ? "micro" : "per-image-macro";
}

AveragingMode averaging_from_name(const std::string& name) {
  if (name == "micro") return AveragingMode::micro;
  if (name == "per-image-macro") return AveragingMode::per_image_macro;
  throw data_error("unknown averaging mode: " + name);
}

// Bounded worker pool over scene indices; each task is independent.
template <typename Task>
void for_each_scene(int count, int jobs, Task&& task) {
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  const int n_workers = std::min(jobs, count);
  workers.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) task(i);
    });
  }
  for (std::thread& t : workers) t.join();
}

struct SceneData {
  Scene scene;
  FeatureImage features;
  LabelImage binary;
  LabelImage categorical;
  LabelImage instances;
  LabelImage bodypart;
};

SceneData load_scene(const fs::path& scene_dir) {
  SceneData data;
  data.scene = read_scene_json((scene_dir / "annotations.json").string());
  data.features = read_feature_pgm((scene_dir / "features.pgm").string());
  data.binary = read_pgm((scene_dir / "binary.pgm").string(), LabelKind::binary);
  data.categorical = read_pgm((scene_dir / "categorical.pgm").string(), LabelKind::categorical3);
  data.instances = read_pgm((scene_dir / "instance.pgm").string(), LabelKind::instance);
  data.bodypart = read_pgm((scene_dir / "bodypart.pgm").string(), LabelKind::bodypart3);
  return data;
}

LabelImage corrupt_categorical(const LabelImage& gt, double flip_rate, int erosion_iterations,
                               uint64_t seed) {
  LabelImage out = gt;
  for (int it = 0; it < erosion_iterations; ++it) {
    LabelImage eroded = out;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        if (out.at(x, y) != 2) continue;
        const bool edge = !out.in_bounds(x + 1, y) || out.at(x + 1, y) != 2 ||
                          !out.in_bounds(x - 1, y) || out.at(x - 1, y) != 2 ||
                          !out.in_bounds(x, y + 1) || out.at(x, y + 1) != 2 ||
                          !out.in_bounds(x, y - 1) || out.at(x, y - 1) != 2;
        if (edge) eroded.at(x, y) = 1;
      }
    }
    out = eroded;
  }
  if (flip_rate > 0.0) {
    std::mt19937_64 rng(seed);
    auto uniform01 = [&rng]() { return (rng() >> 11) * 0x1.0p-53; };
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        if (uniform01() < flip_rate)
          out.at(x, y) = static_cast<uint16_t>(rng() % 3);
  }
  return out;
}

// Instance image from a list of ellipses, painted in list order.
LabelImage paint_ellipses(const std::vector<Ellipse>& ellipses, int width, int height) {
  LabelImage image(width, height, LabelKind::instance);
  const GridSpec grid{width, height};
  for (std::size_t k = 0; k < ellipses.size(); ++k)
    for (const auto& [x, y] : raster_pixels(ellipses[k], grid))
      image.at(x, y) = static_cast<uint16_t>(k + 1);
  return image;
}

// Head side of a fitted cluster ellipse: sign of the mean projection of
// the body-part head pixels onto the fitted major axis.
HeadSign resolve_head_sign(const Ellipse& fitted, const PixelSet& cluster_pixels,
                           const LabelImage& bodypart) {
  double proj_sum = 0.0;
  int head_pixels = 0;
  for (const auto& [x, y] : cluster_pixels) {
    if (bodypart.at(x, y) != 2) continue;
    proj_sum += (x - fitted.cx) * std::cos(fitted.theta) + (y - fitted.cy) * std::sin(fitted.theta);
    ++head_pixels;
  }
  if (head_pixels == 0) return HeadSign::unknown;
  return proj_sum >= 0.0 ? HeadSign::positive : HeadSign::negative;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

SegmentMode segment_mode_from_string(const std::string& name) {
  if (name == "categorical") return SegmentMode::categorical;
  if (name == "combined") return SegmentMode::combined;
  if (name == "bodypart") return SegmentMode::bodypart;
  throw data_error("unknown segment mode: " + name);
}

std::string to_string(SegmentMode mode) {
  switch (mode) {
    case SegmentMode::categorical: return "categorical";
    case SegmentMode::combined: return "combined";
    case SegmentMode::bodypart: return "bodypart";
  }
  return "?";
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  return nlohmann::json{{"embedding_dim", c.embedding_dim},
                        {"delta_v", c.delta_v},
                        {"delta_d", c.delta_d},
                        {"alpha", c.alpha},
                        {"beta", c.beta},
                        {"gamma", c.gamma},
                        {"min_cluster_size", c.min_cluster_size},
                        {"min_samples", c.min_samples},
                        {"core_factor", c.core_factor},
                        {"head_fraction", c.head_fraction},
                        {"binary_threshold", c.binary_threshold},
                        {"optimizer_steps", c.optimizer_steps},
                        {"learning_rate", c.learning_rate},
                        {"seed", c.seed},
                        {"clustering_metric", metric_name(c.clustering_metric)},
                        {"averaging", averaging_name(c.averaging)},
                        {"include_background", c.include_background},
                        {"min_pixels", c.min_pixels},
                        {"label_flip_rate", c.label_flip_rate},
                        {"erosion_iterations", c.erosion_iterations},
                        {"jobs", c.jobs}};
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("embedding_dim", c.embedding_dim);
  get("delta_v", c.delta_v);
  get("delta_d", c.delta_d);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("gamma", c.gamma);
  get("min_cluster_size", c.min_cluster_size);
  get("min_samples", c.min_samples);
  get("core_factor", c.core_factor);
  get("head_fraction", c.head_fraction);
  get("binary_threshold", c.binary_threshold);
  get("optimizer_steps", c.optimizer_steps);
  get("learning_rate", c.learning_rate);
  get("seed", c.seed);
  if (j.contains("clustering_metric"))
    c.clustering_metric = metric_from_name(j.at("clustering_metric").get<std::string>());
  if (j.contains("averaging")) c.averaging = averaging_from_name(j.at("averaging").get<std::string>());
  get("include_background", c.include_background);
  get("min_pixels", c.min_pixels);
  get("label_flip_rate", c.label_flip_rate);
  get("erosion_iterations", c.erosion_iterations);
  get("jobs", c.jobs);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error(std::string("malformed config: ") + e.what());
  }
}

void write_effective_config(const std::string& directory, const PipelineConfig& config) {
  write_json_file(fs::path(directory) / "effective-config.json", config_to_json(config));
}

LabelImage threshold_probabilities(const std::vector<double>& probabilities, int width,
                                   int height, double threshold) {
  if (probabilities.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("probability buffer does not match dimensions");
  LabelImage out(width, height, LabelKind::binary);
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    if (probabilities[i] > threshold)
      out.at(static_cast<int>(i) % width, static_cast<int>(i) / width) = 1;
  return out;
}

void run_generate(const std::string& spec_path, const std::string& output_dir) {
  std::ifstream in(spec_path);
  if (!in) throw data_error("cannot open spec file " + spec_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error(std::string("malformed spec file: ") + e.what());
  }

  std::vector<SceneSpec> specs;
  if (j.contains("scenes")) {
    for (const auto& item : j.at("scenes")) specs.push_back(scene_spec_from_json(item));
  } else if (j.contains("count") && j.contains("base")) {
    const SceneSpec base = scene_spec_from_json(j.at("base"));
    const int count = j.at("count").get<int>();
    if (count <= 0) throw data_error("count must be positive");
    for (int k = 0; k < count; ++k) {
      SceneSpec spec = base;
      spec.seed = base.seed + static_cast<uint64_t>(k);
      specs.push_back(spec);
    }
  } else {
    throw data_error("spec file needs either \"scenes\" or \"count\"+\"base\"");
  }
  const double core_factor = j.value("core_factor", 0.5);
  const double head_fraction = j.value("head_fraction", 0.3);
  generate_suite(specs, output_dir, core_factor, head_fraction);
}

SegmentSummary run_segment(const std::string& dataset_dir, const std::string& output_dir,
                           SegmentMode mode, const PipelineConfig& config) {
  const Manifest manifest = read_manifest(dataset_dir);
  fs::create_directories(output_dir);

  SegmentSummary summary;
  summary.scenes_total = static_cast<int>(manifest.scene_dirs.size());
  std::vector<std::string> errors(manifest.scene_dirs.size());

  for_each_scene(summary.scenes_total, config.jobs, [&](int k) {
    const std::string& name = manifest.scene_dirs[k];
    try {
      const SceneData data = load_scene(fs::path(dataset_dir) / name);
      const fs::path out_scene = fs::path(output_dir) / name;
      fs::create_directories(out_scene);

      std::vector<Ellipse> predicted;
      LabelImage pred_instances;

      if (mode == SegmentMode::categorical) {
        const LabelImage prediction =
            corrupt_categorical(data.categorical, config.label_flip_rate,
                                config.erosion_iterations, config.seed + k);
        write_pgm((out_scene / "predicted_categorical.pgm").string(), prediction);
        predicted = ellipses_from_categorical(prediction, manifest.core_factor,
                                              config.min_pixels).ellipses;
        pred_instances = paint_ellipses(predicted, data.scene.width, data.scene.height);
      } else {
        // Masking: binary labels directly, or body+head collapsed; a
        // probability map, when present, is thresholded instead.
        LabelImage mask(data.scene.width, data.scene.height, LabelKind::binary);
        const fs::path prob_path = fs::path(dataset_dir) / name / "binary_prob.pgm";
        if (fs::exists(prob_path)) {
          const FeatureImage prob = read_feature_pgm(prob_path.string());
          mask = threshold_probabilities(prob.data(), prob.width(), prob.height(),
                                         config.binary_threshold);
        } else if (mode == SegmentMode::combined) {
          mask = data.binary;
        } else {
          for (int y = 0; y < data.bodypart.height(); ++y)
            for (int x = 0; x < data.bodypart.width(); ++x)
              mask.at(x, y) = data.bodypart.at(x, y) != 0 ? 1 : 0;
        }

        const OptimizationResult optimized =
            optimize_embedding(data.features, data.instances, config.discriminative(),
                               config.embedding_dim, config.optimizer(config.seed + k));
        const MaskedClustering clustering =
            cluster_masked_embedding(optimized.field, mask, config.cluster());
        pred_instances = clustering.instances;
        write_cluster_csv((out_scene / "clusters.csv").string(), clustering, config.cluster());

        // One ellipse per cluster, fitted through the cluster outline.
        std::vector<PixelSet> cluster_pixels(clustering.assignment.n_clusters);
        for (std::size_t i = 0; i < clustering.pixels.size(); ++i) {
          const int label = clustering.assignment.labels[i];
          if (label >= 0) cluster_pixels[label].push_back(clustering.pixels[i]);
        }
        for (const PixelSet& pixels : cluster_pixels) {
          if (static_cast<int>(pixels.size()) < config.min_pixels) continue;
          try {
            Ellipse fitted = fit_ellipse(
                region_boundary_points(pixels, data.scene.width, data.scene.height));
            if (mode == SegmentMode::bodypart)
              fitted.head_sign = resolve_head_sign(fitted, pixels, data.bodypart);
            predicted.push_back(fitted);
          } catch (const fit_error&) {
            // skipped cluster, counted below via ellipse count
          }
        }
      }

      write_ellipses_json((out_scene / "predicted_ellipses.json").string(), predicted);
      write_pgm((out_scene / "predicted_instance.pgm").string(), pred_instances);
    } catch (const std::exception& e) {
      errors[k] = name + ": " + e.what();
    }
  });

  for (const std::string& err : errors) {
    if (!err.empty()) {
      ++summary.scenes_failed;
      summary.failures.push_back(err);
    }
  }

  nlohmann::json pred_manifest{{"scenes", manifest.scene_dirs},
                               {"mode", to_string(mode)},
                               {"dataset", dataset_dir},
                               {"core_factor", manifest.core_factor},
                               {"head_fraction", manifest.head_fraction}};
  write_json_file(fs::path(output_dir) / "manifest.json", pred_manifest);
  write_effective_config(output_dir, config);
  return summary;
}

EvaluationSummary run_evaluate(const std::string& pred_dir, const std::string& dataset_dir,
                               const std::string& output_dir, const PipelineConfig& config) {
  const Manifest manifest = read_manifest(dataset_dir);

  std::ifstream pm(fs::path(pred_dir) / "manifest.json");
  if (!pm) throw data_error("prediction directory has no manifest.json");
  nlohmann::json pred_manifest;
  try {
    pred_manifest = nlohmann::json::parse(pm);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error(std::string("malformed prediction manifest: ") + e.what());
  }
  if (pred_manifest.at("scenes").get<std::vector<std::string>>() != manifest.scene_dirs)
    throw data_error("prediction and dataset manifests list different scenes");

  fs::create_directories(output_dir);
  const int n_scenes = static_cast<int>(manifest.scene_dirs.size());
  std::vector<EvalStats> stats(n_scenes);
  std::vector<EvalReport> reports(n_scenes);
  std::vector<std::string> errors(n_scenes);

  for_each_scene(n_scenes, config.jobs, [&](int k) {
    const std::string& name = manifest.scene_dirs[k];
    const fs::path scene_dir = fs::path(dataset_dir) / name;
    const fs::path pred_scene = fs::path(pred_dir) / name;
    try {
      const Scene scene = read_scene_json((scene_dir / "annotations.json").string());
      const LabelImage gt_instances = read_pgm((scene_dir / "instance.pgm").string(), LabelKind::instance);
      const GtExtraction gt = extract_gt_ellipses(gt_instances, scene, config.min_pixels);
      std::vector<Ellipse> gt_ellipses;
      for (const ExtractedEllipse& e : gt.ellipses) gt_ellipses.push_back(e.ellipse);

      const std::vector<Ellipse> predicted =
          read_ellipses_json((pred_scene / "predicted_ellipses.json").string());

      const GridSpec grid{scene.width, scene.height};
      const MatchResult match = ellipse_match(predicted, gt_ellipses, grid);

      EvalStats& s = stats[k];
      s.tp = match.tp();
      s.fp = match.fp();
      s.fn = match.fn();
      s.iou_sum = match.iou_sum();

      // Pixel accuracy: categorical Jaccard when a categorical prediction
      // exists, else binary Jaccard of the predicted instance foreground.
      if (fs::exists(pred_scene / "predicted_categorical.pgm")) {
        const LabelImage pred_cat =
            read_pgm((pred_scene / "predicted_categorical.pgm").string(), LabelKind::categorical3);
        const LabelImage gt_cat =
            read_pgm((scene_dir / "categorical.pgm").string(), LabelKind::categorical3);
        const int max_class = std::max(pred_cat.max_label(), gt_cat.max_label());
        for (int cls = 1; cls <= max_class; ++cls) {
          std::size_t inter = 0, uni = 0;
          for (std::size_t i = 0; i < pred_cat.pixels().size(); ++i) {
            const bool p = pred_cat.pixels()[i] == cls;
            const bool g = gt_cat.pixels()[i] == cls;
            if (p && g) ++inter;
            if (p || g) ++uni;
          }
          s.jaccard_intersection += static_cast<double>(inter);
          s.jaccard_union += static_cast<double>(uni);
        }
        s.has_jaccard = true;
      } else {
        const LabelImage pred_instances =
            read_pgm((pred_scene / "predicted_instance.pgm").string(), LabelKind::instance);
        const LabelImage gt_binary = read_pgm((scene_dir / "binary.pgm").string(), LabelKind::binary);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < pred_instances.pixels().size(); ++i) {
          const bool p = pred_instances.pixels()[i] != 0;
          const bool g = gt_binary.pixels()[i] != 0;
          if (p && g) ++inter;
          if (p || g) ++uni;
        }
        s.jaccard_intersection += static_cast<double>(inter);
        s.jaccard_union += static_cast<double>(uni);
        s.has_jaccard = true;
      }

      // Orientation over true positives, when both sides carry head signs.
      bool orientation_applicable = match.tp() > 0;
      for (const TpPair& pair : match.tp_pairs) {
        if (predicted[pair.pred_id].head_sign == HeadSign::unknown ||
            gt_ellipses[pair.gt_id].head_sign == HeadSign::unknown) {
          orientation_applicable = false;
          break;
        }
      }
      if (orientation_applicable) {
        const double acc = *orientation_accuracy(predicted, gt_ellipses, match);
        s.orientation_total = match.tp();
        s.orientation_correct = static_cast<int>(std::lround(acc * match.tp()));
      }

      reports[k] = report_from_stats(s);
    } catch (const std::exception& e) {
      errors[k] = name + ": " + e.what();
    }
  });

  std::string failed;
  for (const std::string& err : errors)
    if (!err.empty()) failed += (failed.empty() ? "" : "; ") + err;
  if (!failed.empty()) throw data_error("evaluation failed for " + failed);

  EvaluationSummary summary;
  summary.per_scene = reports;
  if (config.averaging == AveragingMode::micro) {
    EvalStats pooled;
    for (const EvalStats& s : stats) pooled.add(s);
    summary.aggregate = report_from_stats(pooled);
  } else {
    summary.aggregate = macro_aggregate(reports);
  }

  for (int k = 0; k < n_scenes; ++k) {
    nlohmann::json j = report_to_json(reports[k]);
    j["scene"] = manifest.scene_dirs[k];
    write_json_file(fs::path(output_dir) / (manifest.scene_dirs[k] + "_report.json"), j);
  }
  nlohmann::json agg = report_to_json(summary.aggregate);
  agg["averaging"] = averaging_name(config.averaging);
  agg["scenes"] = n_scenes;
  write_json_file(fs::path(output_dir) / "aggregate.json", agg);

  std::ofstream csv(fs::path(output_dir) / "summary.csv");
  if (!csv) throw std::runtime_error("cannot write summary.csv");
  csv << "scene,pq,f1,precision,recall,jaccard_accuracy,orientation_accuracy,tp,fp,fn\n";
  auto csv_row = [&](const std::string& name, const EvalReport& r) {
    csv << name << "," << format_metric(r.pq) << "," << format_metric(r.f1) << ","
        << format_metric(r.precision) << "," << format_metric(r.recall) << ","
        << format_metric(r.jaccard) << "," << format_metric(r.orientation) << "," << r.tp << ","
        << r.fp << "," << r.fn << "\n";
  };
  for (int k = 0; k < n_scenes; ++k) csv_row(manifest.scene_dirs[k], reports[k]);
  csv_row("aggregate", summary.aggregate);

  write_effective_config(output_dir, config);
  return summary;
}

namespace {

void write_scatter_pgm(const fs::path& path, const EmbeddingField& field) {
  constexpr int kSize = 256;
  double min0 = 1e300, max0 = -1e300, min1 = 1e300, max1 = -1e300;
  for (std::size_t p = 0; p < field.pixel_count(); ++p) {
    const double* v = field.vec(p);
    min0 = std::min(min0, v[0]);
    max0 = std::max(max0, v[0]);
    min1 = std::min(min1, v[1]);
    max1 = std::max(max1, v[1]);
  }
  const double span0 = std::max(max0 - min0, 1e-9);
  const double span1 = std::max(max1 - min1, 1e-9);
  std::vector<int> counts(kSize * kSize, 0);
  int peak = 1;
  for (std::size_t p = 0; p < field.pixel_count(); ++p) {
    const double* v = field.vec(p);
    const int gx = std::min(kSize - 1, static_cast<int>((v[0] - min0) / span0 * kSize));
    const int gy = std::min(kSize - 1, static_cast<int>((v[1] - min1) / span1 * kSize));
    peak = std::max(peak, ++counts[gy * kSize + gx]);
  }
  LabelImage img(kSize, kSize, LabelKind::binary);
  const double log_peak = std::log1p(static_cast<double>(peak));
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
      img.at(x, y) = static_cast<uint16_t>(
          std::lround(255.0 * std::log1p(static_cast<double>(counts[y * kSize + x])) / log_peak));
  write_pgm(path.string(), img);
}

double within_cluster_spread(const EmbeddingField& field, const LabelImage& instances) {
  const int dim = field.dim();
  const int n_inst = instances.max_label();
  if (n_inst == 0) return 0.0;
  std::vector<std::vector<double>> means(n_inst, std::vector<double>(dim, 0.0));
  std::vector<int> counts(n_inst, 0);
  for (int y = 0; y < instances.height(); ++y) {
    for (int x = 0; x < instances.width(); ++x) {
      const int id = instances.at(x, y);
      if (id == 0) continue;
      const double* v = field.vec(x, y);
      for (int d = 0; d < dim; ++d) means[id - 1][d] += v[d];
      ++counts[id - 1];
    }
  }
  for (int i = 0; i < n_inst; ++i)
    if (counts[i] > 0)
      for (int d = 0; d < dim; ++d) means[i][d] /= counts[i];
  std::vector<double> spread(n_inst, 0.0);
  for (int y = 0; y < instances.height(); ++y) {
    for (int x = 0; x < instances.width(); ++x) {
      const int id = instances.at(x, y);
      if (id == 0) continue;
      const double* v = field.vec(x, y);
      double l1 = 0.0;
      for (int d = 0; d < dim; ++d) l1 += std::abs(means[id - 1][d] - v[d]);
      spread[id - 1] += l1;
    }
  }
  double total = 0.0;
  int used = 0;
  for (int i = 0; i < n_inst; ++i) {
    if (counts[i] == 0) continue;
    total += spread[i] / counts[i];
    ++used;
  }
  return used > 0 ? total / used : 0.0;
}

}  // namespace

std::vector<EmbedDemoSnapshot> run_embed_demo(const std::string& dataset_dir, int scene_index,
                                              const std::vector<int>& steps,
                                              const std::string& output_dir,
                                              const PipelineConfig& config) {
  const Manifest manifest = read_manifest(dataset_dir);
  if (scene_index < 0 || scene_index >= static_cast<int>(manifest.scene_dirs.size()))
    throw data_error("scene index out of range");
  const SceneData data = load_scene(fs::path(dataset_dir) / manifest.scene_dirs[scene_index]);
  fs::create_directories(output_dir);

  std::vector<int> wanted = steps;
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  if (wanted.empty()) throw data_error("embed-demo needs at least one snapshot step");
  const int max_step = wanted.back();

  std::vector<EmbedDemoSnapshot> snapshots;
  auto on_snapshot = [&](int step, const EmbeddingField& field, double loss) {
    if (!std::binary_search(wanted.begin(), wanted.end(), step)) return;
    write_scatter_pgm(fs::path(output_dir) / ("embedding_" + std::to_string(step) + ".pgm"), field);
    const MaskedClustering clustering =
        cluster_masked_embedding(field, data.binary, config.cluster());
    LabelImage view = clustering.instances;
    const int max_id = std::max<int>(1, view.max_label());
    for (int y = 0; y < view.height(); ++y)
      for (int x = 0; x < view.width(); ++x)
        if (view.at(x, y) != 0)
          view.at(x, y) = static_cast<uint16_t>(view.at(x, y) * 255 / max_id);
    write_pgm((fs::path(output_dir) / ("clusters_" + std::to_string(step) + ".pgm")).string(), view);
    snapshots.push_back({step, loss, within_cluster_spread(field, data.instances)});
  };

  OptimizerSettings settings = config.optimizer(config.seed + scene_index);
  settings.steps = max_step;
  const OptimizationResult result =
      optimize_embedding(data.features, data.instances, config.discriminative(),
                         config.embedding_dim, settings, on_snapshot);

  nlohmann::json j;
  j["snapshots"] = nlohmann::json::array();
  for (const EmbedDemoSnapshot& s : snapshots)
    j["snapshots"].push_back({{"step", s.step}, {"loss", s.loss}, {"mean_spread", s.mean_spread}});
  j["window_regressions"] = result.window_regressions;
  write_json_file(fs::path(output_dir) / "demo_metrics.json", j);
  write_effective_config(output_dir, config);
  return snapshots;
}

}  // namespace pigseg
