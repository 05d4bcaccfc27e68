#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pigseg/image.hpp"

namespace pigseg {

/// Thrown when an optimization produces non-finite values.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// Per-pixel D-dimensional embedding vectors.
class EmbeddingField {
 public:
  EmbeddingField() = default;
  EmbeddingField(int width, int height, int dim)
      : width_(width), height_(height), dim_(dim),
        data_(static_cast<std::size_t>(width) * height * dim, 0.0) {
    if (width <= 0 || height <= 0 || dim < 2)
      throw std::invalid_argument("embedding field needs positive dimensions and dim >= 2");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int dim() const { return dim_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  double* vec(std::size_t pixel) { return data_.data() + pixel * dim_; }
  const double* vec(std::size_t pixel) const { return data_.data() + pixel * dim_; }
  double* vec(int x, int y) { return vec(static_cast<std::size_t>(y) * width_ + x); }
  const double* vec(int x, int y) const { return vec(static_cast<std::size_t>(y) * width_ + x); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

/// Margins and weights of the discriminative loss.
struct DiscriminativeParams {
  double delta_v = 0.1;
  double delta_d = 1.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.001;
};

bool is_valid(const DiscriminativeParams& p);
void require_valid(const DiscriminativeParams& p);

struct LossValue {
  double total = 0.0;
  double variance_term = 0.0;
  double distance_term = 0.0;
  double regularization_term = 0.0;
};

/// Mean binary cross-entropy; probabilities are clamped away from {0, 1}
/// by 1e-12 before the logs.
double binary_ce(const std::vector<double>& probabilities, const LabelImage& truth);

/// Mean categorical cross-entropy over N pixels and C classes; each
/// pixel's class distribution must sum to 1 within 1e-6.
double categorical_ce(const std::vector<double>& class_probabilities, int n_classes,
                      const LabelImage& truth);

/// Discriminative loss of the embedding field against instance labels:
/// L1-norm variance/distance/regularization terms hinged by delta_v and
/// 2*delta_d. include_background adds label 0 as its own cluster. A lone
/// cluster has distance term 0; no clusters at all is an error.
LossValue discriminative_loss(const EmbeddingField& field, const LabelImage& instances,
                              const DiscriminativeParams& params, bool include_background);

/// Exact subgradient of the total discriminative loss with respect to
/// every embedding vector (chain through the cluster means included).
/// Sign of 0 is taken as 0; pixels outside all clusters get zero.
std::vector<double> discriminative_gradient(const EmbeddingField& field,
                                            const LabelImage& instances,
                                            const DiscriminativeParams& params,
                                            bool include_background);

struct OptimizerSettings {
  int steps = 500;
  double learning_rate = 0.02;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool include_background = true;
};

struct OptimizationResult {
  EmbeddingField field;
  std::vector<double> loss_trajectory;  // one entry per gradient step
  // Soft sanity signal, reported rather than enforced: number of steps
  // past warmup whose loss exceeds the value 10 steps earlier.
  int window_regressions = 0;
};

/// Snapshot callback: (completed steps, field, last loss). Invoked once
/// after initialization (step 0, loss of the initial field) and after
/// every gradient step.
using SnapshotFn = std::function<void(int, const EmbeddingField&, double)>;

/// Direct per-image gradient descent on the discriminative loss. Pixels
/// are projected into dim dimensions by a seeded random affine map over
/// (feature channels, x/width, y/height) and optimized with Adam under a
/// linearly decayed step size. Throws numerical_error naming the step on
/// divergence.
OptimizationResult optimize_embedding(const FeatureImage& features, const LabelImage& instances,
                                      const DiscriminativeParams& params, int dim,
                                      const OptimizerSettings& settings,
                                      const SnapshotFn& snapshot = nullptr);

/// Flat little-endian float32 file, row-major, pixel-major then channel,
/// with a JSON sidecar {width, height, dim} at path + ".json".
void write_embedding(const std::string& path, const EmbeddingField& field);
EmbeddingField read_embedding(const std::string& path);

}  // namespace pigseg
