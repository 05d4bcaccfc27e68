#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pigseg/pipeline.hpp"

namespace {

pigseg::PipelineConfig make_config(const std::string& config_path, bool seed_set, uint64_t seed,
                                   bool jobs_set, int jobs) {
  pigseg::PipelineConfig config;
  if (!config_path.empty()) config = pigseg::load_config(config_path);
  if (seed_set) config.seed = seed;
  if (jobs_set) config.jobs = jobs;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ellipse-based pig segmentation pipeline: synthetic scene generation, "
               "embedding-based instance segmentation, ellipse extraction and "
               "panoptic-quality evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  uint64_t seed = 0;
  int jobs = 1;
  std::string output;
  app.add_option("--config", config_path, "JSON pipeline configuration");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  CLI::Option* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for batch commands");
  app.add_option("--output", output, "Output directory");

  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset from a spec file");
  std::string spec_path;
  generate->add_option("--spec", spec_path, "Generation spec JSON")->required();

  auto* segment = app.add_subcommand("segment", "Run a segmentation mode over a dataset");
  std::string dataset;
  std::string mode_name = "combined";
  segment->add_option("--dataset", dataset, "Dataset directory")->required();
  segment->add_option("--mode", mode_name, "categorical | combined | bodypart");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate predictions against a dataset");
  std::string pred_dir;
  std::string eval_dataset;
  evaluate->add_option("--pred", pred_dir, "Prediction directory")->required();
  evaluate->add_option("--dataset", eval_dataset, "Dataset directory")->required();

  auto* demo = app.add_subcommand("embed-demo", "Emit embedding-space snapshots while optimizing");
  std::string demo_dataset;
  int scene_index = 0;
  std::vector<int> steps{1, 2, 3, 10, 80};
  demo->add_option("--dataset", demo_dataset, "Dataset directory")->required();
  demo->add_option("--scene", scene_index, "Scene index within the dataset");
  demo->add_option("--steps", steps, "Gradient steps to snapshot")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const pigseg::PipelineConfig config =
        make_config(config_path, seed_opt->count() > 0, seed, jobs_opt->count() > 0, jobs);

    if (generate->parsed()) {
      if (output.empty()) throw pigseg::data_error("generate requires --output");
      pigseg::run_generate(spec_path, output);
      std::printf("dataset written to %s\n", output.c_str());
    } else if (segment->parsed()) {
      if (output.empty()) throw pigseg::data_error("segment requires --output");
      const pigseg::SegmentSummary summary =
          pigseg::run_segment(dataset, output, pigseg::segment_mode_from_string(mode_name), config);
      std::printf("segmented %d scenes, %d failed\n", summary.scenes_total, summary.scenes_failed);
      for (const std::string& failure : summary.failures)
        std::fprintf(stderr, "failed %s\n", failure.c_str());
      if (summary.scenes_failed > 0) return 3;
    } else if (evaluate->parsed()) {
      const std::string out = output.empty() ? pred_dir + "/eval" : output;
      const pigseg::EvaluationSummary summary =
          pigseg::run_evaluate(pred_dir, eval_dataset, out, config);
      const auto show = [](const std::optional<double>& v) { return v ? *v : -1.0; };
      std::printf("aggregate: pq=%.4f f1=%.4f precision=%.4f recall=%.4f (tp=%d fp=%d fn=%d)\n",
                  show(summary.aggregate.pq), show(summary.aggregate.f1),
                  show(summary.aggregate.precision), show(summary.aggregate.recall),
                  summary.aggregate.tp, summary.aggregate.fp, summary.aggregate.fn);
    } else if (demo->parsed()) {
      if (output.empty()) throw pigseg::data_error("embed-demo requires --output");
      const auto snapshots = pigseg::run_embed_demo(demo_dataset, scene_index, steps, output, config);
      for (const auto& s : snapshots)
        std::printf("step %d: loss=%.6f mean_spread=%.6f\n", s.step, s.loss, s.mean_spread);
    }
  } catch (const pigseg::numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const pigseg::fit_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const pigseg::data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
