// Acceptance suite: one pass/fail line per criterion, nonzero exit when
// any criterion fails. Reference values come from the independent
// oracles in support/oracles.hpp, never from the code under test.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "pigseg/pipeline.hpp"
#include "support/oracles.hpp"

using namespace pigseg;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void run_criterion(int number, const char* name, double budget_seconds,
                   const std::function<bool(std::string&)>& body) {
  std::string detail;
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (elapsed >= budget_seconds) {
    ok = false;
    detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
  }
  if (!ok) ++failures;
  std::printf("%s  criterion %2d: %s (%.2fs < %.0fs)%s%s\n", ok ? "PASS" : "FAIL", number, name,
              elapsed, budget_seconds, detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

SceneSpec benchmark_spec(uint64_t seed, int n_animals) {
  SceneSpec spec;
  spec.width = 128;
  spec.height = 128;
  spec.n_animals = n_animals;
  spec.a_min = 14.0;
  spec.a_max = 20.0;
  spec.b_min = 7.0;
  spec.b_max = 10.0;
  spec.max_overlap = 0.15;
  spec.seed = seed;
  spec.noise_sigma = 0.02;
  spec.texture_amplitude = 0.05;
  return spec;
}

PipelineConfig benchmark_config() {
  PipelineConfig config;
  config.min_cluster_size = 30;  // scaled to the 128x128 resolution
  config.jobs = 4;
  return config;
}

bool criterion_loss_oracle(std::string& detail) {
  std::mt19937 rng(101);
  const DiscriminativeParams params{0.1, 1.5, 1.0, 1.0, 0.001};
  for (int trial = 0; trial < 100; ++trial) {
    const oracles::LossFixture f = oracles::random_loss_fixture(rng, 20, 4, 4, trial % 3 == 0);
    auto [field, inst] = oracles::to_library(f);
    const LossValue got = discriminative_loss(field, inst, params, false);
    const LossValue want = oracles::discriminative(f, params);
    const double scale = std::max(1.0, std::abs(want.total));
    if (std::abs(got.total - want.total) > 1e-12 * scale ||
        std::abs(got.variance_term - want.variance_term) > 1e-12 * scale ||
        std::abs(got.distance_term - want.distance_term) > 1e-12 * scale ||
        std::abs(got.regularization_term - want.regularization_term) > 1e-12 * scale) {
      detail = "fixture " + std::to_string(trial) + " deviates from the double-loop reference";
      return false;
    }
  }
  return true;
}

bool criterion_gradient(std::string& detail) {
  std::mt19937 rng(202);
  const DiscriminativeParams params{0.1, 1.5, 1.0, 1.0, 0.001};
  const double h = 1e-5;
  int tested = 0;
  while (tested < 50) {
    const oracles::LossFixture f = oracles::random_loss_fixture(rng, 12, 3, 3, false);
    if (oracles::kink_margin(f, params) < 1e-3) continue;
    ++tested;
    auto [field, inst] = oracles::to_library(f);
    const std::vector<double> grad = discriminative_gradient(field, inst, params, false);
    for (std::size_t i = 0; i < field.data().size(); ++i) {
      EmbeddingField plus = field;
      EmbeddingField minus = field;
      plus.data()[i] += h;
      minus.data()[i] -= h;
      const double fd = (discriminative_loss(plus, inst, params, false).total -
                         discriminative_loss(minus, inst, params, false).total) /
                        (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      if (std::abs(grad[i] - fd) / denom > 1e-5) {
        detail = "coordinate " + std::to_string(i) + " off by more than 1e-5 relative";
        return false;
      }
    }
  }
  return true;
}

bool criterion_pq_identities(std::string& detail) {
  // Hand fixture: 1 TP at IoU 0.8, 1 FP, 1 FN -> PQ exactly 0.4.
  MatchResult hand;
  hand.tp_pairs.push_back({1, 1, 0.8});
  hand.fp_ids.push_back(2);
  hand.fn_ids.push_back(2);
  if (*panoptic_quality(hand) != 0.8 / 2.0) {
    detail = "hand fixture PQ differs from 0.4";
    return false;
  }

  // Strict inequality: IoU exactly 0.5 is not a match.
  LabelImage gt(8, 4, LabelKind::instance);
  LabelImage pred(8, 4, LabelKind::instance);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) gt.at(x, y) = 1;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) pred.at(x, y) = 1;
  const MatchResult strict = match_segments(pred, gt);
  if (strict.tp() != 0 || strict.fp() != 1 || strict.fn() != 1) {
    detail = "IoU == 0.5 was treated as a match";
    return false;
  }

  // PQ = F1 x mean matched IoU on randomized evaluations.
  std::mt19937 rng(303);
  for (int trial = 0; trial < 300; ++trial) {
    const LabelImage p = oracles::random_partition(rng, 8, 8, 3);
    const LabelImage g = oracles::random_partition(rng, 8, 8, 3);
    const MatchResult m = match_segments(p, g);
    const auto pq = panoptic_quality(m);
    if (!pq) continue;
    const DetectionScores s = detection_scores(m);
    const double mean_iou = m.tp() > 0 ? m.iou_sum() / m.tp() : 0.0;
    if (std::abs(*pq - *s.f1 * mean_iou) > 1e-12) {
      detail = "PQ != F1 x mean IoU on trial " + std::to_string(trial);
      return false;
    }
  }
  return true;
}

bool criterion_uniqueness(std::string& detail) {
  std::mt19937 rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const LabelImage pred = oracles::random_partition(rng, 8, 8, 3);
    const LabelImage gt = oracles::random_partition(rng, 8, 8, 3);

    // Independent count of >0.5 partners per ground-truth segment.
    std::map<int, std::map<int, int>> inter;
    std::map<int, int> pred_area, gt_area;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        if (pred.at(x, y) != 0) ++pred_area[pred.at(x, y)];
        if (gt.at(x, y) != 0) ++gt_area[gt.at(x, y)];
        if (pred.at(x, y) != 0 && gt.at(x, y) != 0) ++inter[gt.at(x, y)][pred.at(x, y)];
      }
    }
    for (const auto& [g, partners] : inter) {
      int matches = 0;
      for (const auto& [p, count] : partners) {
        const double iou =
            static_cast<double>(count) / (pred_area[p] + gt_area[g] - count);
        if (iou > 0.5) ++matches;
      }
      if (matches > 1) {
        detail = "gt segment with two >0.5 partners in trial " + std::to_string(trial);
        return false;
      }
    }
    match_segments(pred, gt);  // internal double-match assertion must hold too
  }
  return true;
}

bool criterion_fit_recovery(std::string& detail) {
  std::mt19937 rng(505);
  std::uniform_real_distribution<double> center(30.0, 90.0);
  std::uniform_real_distribution<double> major(10.0, 22.0);
  std::uniform_real_distribution<double> ratio(0.35, 0.95);
  std::uniform_real_distribution<double> angle(0.0, M_PI);

  // Exact boundary samples recovered to 1e-6 relative.
  for (int trial = 0; trial < 25; ++trial) {
    Ellipse truth;
    truth.cx = center(rng);
    truth.cy = center(rng);
    truth.a = major(rng);
    truth.b = truth.a * ratio(rng);
    truth.theta = angle(rng);
    std::vector<std::pair<double, double>> points;
    for (int i = 0; i < 100; ++i) {
      const double t = 2.0 * M_PI * i / 100.0;
      const double u = truth.a * std::cos(t);
      const double v = truth.b * std::sin(t);
      points.emplace_back(truth.cx + u * std::cos(truth.theta) - v * std::sin(truth.theta),
                          truth.cy + u * std::sin(truth.theta) + v * std::cos(truth.theta));
    }
    const Ellipse fit = fit_ellipse(points);
    double angle_diff = std::fmod(std::abs(fit.theta - truth.theta), M_PI);
    angle_diff = std::min(angle_diff, M_PI - angle_diff);
    if (std::abs(fit.cx - truth.cx) / truth.cx > 1e-6 ||
        std::abs(fit.cy - truth.cy) / truth.cy > 1e-6 ||
        std::abs(fit.a - truth.a) / truth.a > 1e-6 ||
        std::abs(fit.b - truth.b) / truth.b > 1e-6 || angle_diff > 1e-6) {
      detail = "exact-sample fit off beyond 1e-6 in trial " + std::to_string(trial);
      return false;
    }
  }

  // Raster round trip on 100 random non-overlapping scenes.
  for (int trial = 0; trial < 100; ++trial) {
    Scene s;
    s.width = 200;
    s.height = 200;
    const double anchors[3][2] = {{52.0, 52.0}, {148.0, 60.0}, {72.0, 148.0}};
    std::uniform_real_distribution<double> jitter(-8.0, 8.0);
    for (int k = 0; k < 3; ++k) {
      Ellipse e;
      e.cx = anchors[k][0] + jitter(rng);
      e.cy = anchors[k][1] + jitter(rng);
      e.a = 12.0 + 7.0 * ratio(rng);
      e.b = e.a * (0.45 + 0.4 * ratio(rng));
      e.theta = angle(rng);
      e.head_sign = HeadSign::positive;
      e.depth = k + 1;
      s.ellipses.push_back(e);
    }
    const GtExtraction gt = extract_gt_ellipses(render_instance(s), s);
    if (gt.ellipses.size() != 3) {
      detail = "round trip lost an instance in trial " + std::to_string(trial);
      return false;
    }
    for (const ExtractedEllipse& ex : gt.ellipses) {
      const Ellipse& truth = s.ellipses[ex.instance_id - 1];
      if (std::abs(ex.ellipse.cx - truth.cx) > 1.0 || std::abs(ex.ellipse.cy - truth.cy) > 1.0 ||
          std::abs(ex.ellipse.a - truth.a) > 0.02 * truth.a ||
          std::abs(ex.ellipse.b - truth.b) > 0.02 * truth.b) {
        detail = "round trip outside 2% axes / 1 px center in trial " + std::to_string(trial);
        return false;
      }
    }
  }
  return true;
}

bool criterion_clustering_oracle(std::string& detail) {
  std::mt19937 rng(606);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  std::uniform_int_distribution<int> n_points(8, 40);
  std::uniform_int_distribution<int> mcs(3, 8);
  std::uniform_int_distribution<int> ms(2, 5);
  std::normal_distribution<double> jitter(0.0, 0.4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = n_points(rng);
    std::vector<double> pts;
    if (trial % 2 == 0) {
      for (int i = 0; i < 2 * n; ++i) pts.push_back(coord(rng));
    } else {
      for (int i = 0; i < n; ++i) {
        const int blob = i % 3;
        pts.push_back(blob * 6.0 + jitter(rng));
        pts.push_back(blob * 2.0 + jitter(rng));
      }
    }
    ClusterParams params;
    params.min_cluster_size = mcs(rng);
    params.min_samples = ms(rng);
    if (!oracles::same_partition(oracles::hdbscan(pts, 2, params),
                                 oracles::to_partition(hdbscan(pts, 2, params)))) {
      detail = "flat clusters differ from the dendrogram oracle in trial " + std::to_string(trial);
      return false;
    }
  }

  // Two-blob generative fixture: exact recovery with at most 1% noise.
  std::normal_distribution<double> blob_noise(0.0, 0.5);
  std::vector<double> pts;
  for (int blob = 0; blob < 2; ++blob)
    for (int i = 0; i < 200; ++i) {
      pts.push_back(blob * 5.0 + blob_noise(rng));
      pts.push_back(blob_noise(rng));
    }
  ClusterParams params;
  params.min_cluster_size = 50;
  const ClusterAssignment got = hdbscan(pts, 2, params);
  if (got.n_clusters != 2) {
    detail = "two-blob fixture produced " + std::to_string(got.n_clusters) + " clusters";
    return false;
  }
  int noise = 0;
  std::map<int, std::set<int>> blob_of_cluster;
  for (int i = 0; i < 400; ++i) {
    if (got.labels[i] < 0)
      ++noise;
    else
      blob_of_cluster[got.labels[i]].insert(i / 200);
  }
  if (noise > 4) {
    detail = "two-blob fixture has more than 1% noise";
    return false;
  }
  for (const auto& [cluster, blobs] : blob_of_cluster)
    if (blobs.size() != 1) {
      detail = "a cluster mixes points from both blobs";
      return false;
    }
  return true;
}

bool criterion_end_to_end(std::string& detail) {
  const std::string root = "acceptance_tmp/benchmark";
  fs::remove_all(root);
  std::vector<SceneSpec> specs;
  for (int k = 0; k < 20; ++k) specs.push_back(benchmark_spec(9000 + k, 3 + k % 4));
  generate_suite(specs, root + "/data", 0.5, 0.3);

  const PipelineConfig config = benchmark_config();
  const SegmentSummary seg = run_segment(root + "/data", root + "/pred", SegmentMode::combined, config);
  if (seg.scenes_failed != 0) {
    detail = std::to_string(seg.scenes_failed) + " scene(s) failed to segment";
    return false;
  }
  const EvaluationSummary eval = run_evaluate(root + "/pred", root + "/data", root + "/eval", config);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "PQ=%.4f F1=%.4f (tp=%d fp=%d fn=%d)",
                eval.aggregate.pq.value_or(-1.0), eval.aggregate.f1.value_or(-1.0),
                eval.aggregate.tp, eval.aggregate.fp, eval.aggregate.fn);
  detail = buf;
  return eval.aggregate.pq.value_or(0.0) >= 0.80 && eval.aggregate.f1.value_or(0.0) >= 0.95;
}

bool criterion_orientation(std::string& detail) {
  const std::string root = "acceptance_tmp/orientation";
  fs::remove_all(root);
  std::vector<SceneSpec> specs;
  for (int k = 0; k < 6; ++k) {
    SceneSpec spec = benchmark_spec(9500 + k, 4);
    spec.noise_sigma = 0.0;  // noiseless bodypart suite
    specs.push_back(spec);
  }
  generate_suite(specs, root + "/data", 0.5, 0.3);
  const PipelineConfig config = benchmark_config();
  run_segment(root + "/data", root + "/pred", SegmentMode::bodypart, config);

  const EvaluationSummary clean = run_evaluate(root + "/pred", root + "/data", root + "/eval", config);
  if (!clean.aggregate.orientation || *clean.aggregate.orientation != 1.0) {
    detail = "noiseless orientation accuracy is not 1.0";
    return false;
  }

  // Flip every second predicted head sign.
  const Manifest manifest = read_manifest(root + "/data");
  int running = 0;
  for (const std::string& name : manifest.scene_dirs) {
    const std::string path = root + "/pred/" + name + "/predicted_ellipses.json";
    std::vector<Ellipse> predicted = read_ellipses_json(path);
    for (Ellipse& e : predicted) {
      if (running++ % 2 == 1)
        e.head_sign = e.head_sign == HeadSign::positive ? HeadSign::negative : HeadSign::positive;
    }
    write_ellipses_json(path, predicted);
  }
  const EvaluationSummary flipped =
      run_evaluate(root + "/pred", root + "/data", root + "/eval_flipped", config);
  const int tp = flipped.aggregate.tp;
  if (!flipped.aggregate.orientation || tp == 0) {
    detail = "flipped evaluation lost its true positives";
    return false;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "flipped accuracy %.4f over %d TPs",
                *flipped.aggregate.orientation, tp);
  detail = buf;
  return std::abs(*flipped.aggregate.orientation - 0.5) <= 1.0 / (2.0 * tp) + 1e-12;
}

bool criterion_label_consistency(std::string& detail) {
  for (int trial = 0; trial < 100; ++trial) {
    SceneSpec spec = benchmark_spec(7000 + trial, 2 + trial % 5);
    spec.max_overlap = trial % 3 == 0 ? 0.4 : 0.15;
    const GeneratedScene g = generate_scene(spec);
    const LabelImage binary = render_binary(g.scene);
    const LabelImage inst = render_instance(g.scene);
    const LabelImage cat = render_categorical(g.scene, 0.5);
    const LabelImage bp = render_bodypart(g.scene, 0.3);
    for (std::size_t i = 0; i < binary.pixels().size(); ++i) {
      const bool fg = binary.pixels()[i] != 0;
      if (fg != (inst.pixels()[i] != 0) || fg != (cat.pixels()[i] != 0) ||
          fg != (bp.pixels()[i] != 0)) {
        detail = "variant disagreement in scene " + std::to_string(trial);
        return false;
      }
    }
  }
  return true;
}

bool criterion_determinism(std::string& detail) {
  const std::string root = "acceptance_tmp/determinism";
  fs::remove_all(root);
  PipelineConfig config = benchmark_config();
  config.seed = 12345;

  for (const char* run : {"a", "b"}) {
    const std::string base = root + "/" + run;
    std::vector<SceneSpec> specs{benchmark_spec(31, 3), benchmark_spec(32, 4)};
    generate_suite(specs, base + "/data", 0.5, 0.3);
    run_segment(base + "/data", base + "/pred", SegmentMode::combined, config);
    run_evaluate(base + "/pred", base + "/data", base + "/eval", config);
  }
  for (const char* file :
       {"eval/aggregate.json", "eval/summary.csv", "eval/scene_0_report.json",
        "eval/scene_1_report.json", "pred/scene_0/predicted_ellipses.json",
        "pred/scene_0/predicted_instance.pgm", "pred/scene_0/clusters.csv",
        "data/scene_0/features.pgm", "data/scene_1/instance.pgm"}) {
    if (slurp(root + "/a/" + file) != slurp(root + "/b/" + file)) {
      detail = std::string("artifact differs between runs: ") + file;
      return false;
    }
  }
  return true;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "discriminative loss matches the double-loop oracle", 1.0, criterion_loss_oracle);
  run_criterion(2, "analytic gradients match central finite differences", 10.0, criterion_gradient);
  run_criterion(3, "panoptic-quality identities", 1.0, criterion_pq_identities);
  run_criterion(4, "matching uniqueness over pixel partitions", 30.0, criterion_uniqueness);
  run_criterion(5, "ellipse-fit recovery", 30.0, criterion_fit_recovery);
  run_criterion(6, "hdbscan equals the brute-force dendrogram oracle", 60.0, criterion_clustering_oracle);
  run_criterion(7, "end-to-end synthetic benchmark", 600.0, criterion_end_to_end);
  run_criterion(8, "orientation recognition", 120.0, criterion_orientation);
  run_criterion(9, "label-image cross-consistency", 10.0, criterion_label_consistency);
  run_criterion(10, "byte-identical repeated pipeline runs", 120.0, criterion_determinism);
  if (failures == 0)
    std::printf("all criteria passed\n");
  else
    std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
