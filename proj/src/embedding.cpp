#include "pigseg/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace pigseg {

namespace {

constexpr double kProbEpsilon = 1e-12;

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Clusters {
  std::vector<std::vector<std::size_t>> members;  // pixel indices per cluster
  std::vector<double> means;                      // cluster-major, dim entries each
  std::vector<int> cluster_of;                    // per pixel, -1 when unassigned
};

Clusters gather_clusters(const EmbeddingField& field, const LabelImage& instances,
                         bool include_background) {
  if (field.width() != instances.width() || field.height() != instances.height())
    throw std::invalid_argument("embedding field and instance image dimensions differ");

  const std::size_t n = field.pixel_count();
  std::vector<int> index_of_label(static_cast<std::size_t>(instances.max_label()) + 1, -1);
  Clusters out;
  out.cluster_of.assign(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const uint16_t label = instances.pixels()[p];
    if (label == 0 && !include_background) continue;
    int& idx = index_of_label[label];
    if (idx < 0) {
      idx = static_cast<int>(out.members.size());
      out.members.emplace_back();
    }
    out.members[idx].push_back(p);
    out.cluster_of[p] = idx;
  }
  if (out.members.empty()) throw std::invalid_argument("no clusters present in instance image");

  const int dim = field.dim();
  out.means.assign(out.members.size() * dim, 0.0);
  for (std::size_t c = 0; c < out.members.size(); ++c) {
    double* mean = out.means.data() + c * dim;
    for (std::size_t p : out.members[c]) {
      const double* v = field.vec(p);
      for (int d = 0; d < dim; ++d) mean[d] += v[d];
    }
    for (int d = 0; d < dim; ++d) mean[d] /= static_cast<double>(out.members[c].size());
  }
  return out;
}

double l1_distance(const double* a, const double* b, int dim) {
  double sum = 0.0;
  for (int d = 0; d < dim; ++d) sum += std::abs(a[d] - b[d]);
  return sum;
}

}  // namespace

bool is_valid(const DiscriminativeParams& p) {
  return p.delta_v > 0.0 && p.delta_d > 0.0 && 2.0 * p.delta_d > p.delta_v;
}

void require_valid(const DiscriminativeParams& p) {
  if (!is_valid(p))
    throw std::invalid_argument("discriminative params require delta_v > 0, delta_d > 0, 2*delta_d > delta_v");
}

double binary_ce(const std::vector<double>& probabilities, const LabelImage& truth) {
  const std::size_t n = static_cast<std::size_t>(truth.width()) * truth.height();
  if (probabilities.size() != n)
    throw std::invalid_argument("probability buffer does not match label image size");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(probabilities[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double y = truth.pixels()[i] != 0 ? 1.0 : 0.0;
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(n);
}

double categorical_ce(const std::vector<double>& class_probabilities, int n_classes,
                      const LabelImage& truth) {
  if (n_classes < 2) throw std::invalid_argument("categorical_ce needs at least 2 classes");
  const std::size_t n = static_cast<std::size_t>(truth.width()) * truth.height();
  if (class_probabilities.size() != n * static_cast<std::size_t>(n_classes))
    throw std::invalid_argument("probability buffer does not match label image size");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* probs = class_probabilities.data() + i * n_classes;
    double mass = 0.0;
    for (int j = 0; j < n_classes; ++j) mass += probs[j];
    if (std::abs(mass - 1.0) > 1e-6)
      throw std::invalid_argument("per-pixel class distribution does not sum to 1");
    const uint16_t label = truth.pixels()[i];
    if (label >= n_classes) throw std::invalid_argument("label exceeds class count");
    sum += std::log(std::max(probs[label], kProbEpsilon));
  }
  return -sum / static_cast<double>(n);
}

LossValue discriminative_loss(const EmbeddingField& field, const LabelImage& instances,
                              const DiscriminativeParams& params, bool include_background) {
  require_valid(params);
  const Clusters cl = gather_clusters(field, instances, include_background);
  const int dim = field.dim();
  const std::size_t c_count = cl.members.size();

  LossValue loss;
  for (std::size_t c = 0; c < c_count; ++c) {
    const double* mean = cl.means.data() + c * dim;
    double norm = 0.0;
    for (int d = 0; d < dim; ++d) norm += std::abs(mean[d]);
    loss.regularization_term += norm;

    double var = 0.0;
    for (std::size_t p : cl.members[c]) {
      const double hinge = std::max(0.0, l1_distance(mean, field.vec(p), dim) - params.delta_v);
      var += hinge * hinge;
    }
    loss.variance_term += var / static_cast<double>(cl.members[c].size());
  }
  loss.regularization_term /= static_cast<double>(c_count);
  loss.variance_term /= static_cast<double>(c_count);

  if (c_count > 1) {
    double dist = 0.0;
    for (std::size_t ca = 0; ca < c_count; ++ca) {
      for (std::size_t cb = ca + 1; cb < c_count; ++cb) {
        const double gap =
            l1_distance(cl.means.data() + ca * dim, cl.means.data() + cb * dim, dim);
        const double hinge = std::max(0.0, 2.0 * params.delta_d - gap);
        dist += 2.0 * hinge * hinge;  // both ordered pairs
      }
    }
    loss.distance_term = dist / (static_cast<double>(c_count) * (c_count - 1.0));
  }

  loss.total = params.alpha * loss.variance_term + params.beta * loss.distance_term +
               params.gamma * loss.regularization_term;
  return loss;
}

std::vector<double> discriminative_gradient(const EmbeddingField& field,
                                            const LabelImage& instances,
                                            const DiscriminativeParams& params,
                                            bool include_background) {
  require_valid(params);
  const Clusters cl = gather_clusters(field, instances, include_background);
  const int dim = field.dim();
  const std::size_t c_count = cl.members.size();
  const double c_f = static_cast<double>(c_count);

  std::vector<double> grad(field.pixel_count() * dim, 0.0);
  std::vector<double> hinge_sign_sum(dim);

  for (std::size_t c = 0; c < c_count; ++c) {
    const double* mean = cl.means.data() + c * dim;
    const double n_c = static_cast<double>(cl.members[c].size());

    // Variance term: both the direct path and the path through the mean.
    std::fill(hinge_sign_sum.begin(), hinge_sign_sum.end(), 0.0);
    std::vector<double> member_hinge(cl.members[c].size());
    for (std::size_t k = 0; k < cl.members[c].size(); ++k) {
      const double* v = field.vec(cl.members[c][k]);
      const double hinge = std::max(0.0, l1_distance(mean, v, dim) - params.delta_v);
      member_hinge[k] = hinge;
      if (hinge > 0.0)
        for (int d = 0; d < dim; ++d) hinge_sign_sum[d] += hinge * sign0(mean[d] - v[d]);
    }
    for (std::size_t k = 0; k < cl.members[c].size(); ++k) {
      const std::size_t p = cl.members[c][k];
      const double* v = field.vec(p);
      double* g = grad.data() + p * dim;
      const double coeff = 2.0 * params.alpha / (c_f * n_c);
      for (int d = 0; d < dim; ++d) {
        const double own = member_hinge[k] > 0.0 ? member_hinge[k] * sign0(mean[d] - v[d]) : 0.0;
        g[d] += coeff * (hinge_sign_sum[d] / n_c - own);
      }
    }

    // Distance term: accumulated per cluster, spread over its members.
    if (c_count > 1) {
      std::vector<double> push(dim, 0.0);
      for (std::size_t cb = 0; cb < c_count; ++cb) {
        if (cb == c) continue;
        const double* other = cl.means.data() + cb * dim;
        const double gap = l1_distance(mean, other, dim);
        const double hinge = 2.0 * params.delta_d - gap;
        if (hinge > 0.0)
          for (int d = 0; d < dim; ++d) push[d] += hinge * sign0(mean[d] - other[d]);
      }
      const double coeff = -4.0 * params.beta / (c_f * (c_f - 1.0) * n_c);
      for (std::size_t p : cl.members[c]) {
        double* g = grad.data() + p * dim;
        for (int d = 0; d < dim; ++d) g[d] += coeff * push[d];
      }
    }

    // Regularization term.
    const double reg_coeff = params.gamma / (c_f * n_c);
    for (std::size_t p : cl.members[c]) {
      double* g = grad.data() + p * dim;
      for (int d = 0; d < dim; ++d) g[d] += reg_coeff * sign0(mean[d]);
    }
  }
  return grad;
}

OptimizationResult optimize_embedding(const FeatureImage& features, const LabelImage& instances,
                                      const DiscriminativeParams& params, int dim,
                                      const OptimizerSettings& settings,
                                      const SnapshotFn& snapshot) {
  require_valid(params);
  if (features.width() != instances.width() || features.height() != instances.height())
    throw std::invalid_argument("feature image and instance image dimensions differ");
  if (settings.steps < 0) throw std::invalid_argument("step count must be non-negative");
  for (double v : features.data())
    if (!std::isfinite(v)) throw std::invalid_argument("features must be finite");

  const int w = features.width();
  const int h = features.height();
  const int in_dim = features.channels() + 2;

  // Seeded affine projection of (features, x/w, y/h) into the embedding
  // space; coordinates give the optimizer the spatial signal a network
  // would have.
  std::mt19937_64 rng(settings.seed);
  auto uniform01 = [&rng]() { return (rng() >> 11) * 0x1.0p-53; };
  auto gaussian = [&]() {
    const double u1 = std::max(uniform01(), 1e-300);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  std::vector<double> weight(static_cast<std::size_t>(dim) * in_dim);
  std::vector<double> bias(dim);
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& v : weight) v = gaussian() * w_scale;
  for (double& v : bias) v = gaussian() * 0.1;

  OptimizationResult result;
  result.field = EmbeddingField(w, h, dim);
  std::vector<double> input(in_dim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < features.channels(); ++c) input[c] = features.at(x, y, c);
      input[features.channels()] = static_cast<double>(x) / w;
      input[features.channels() + 1] = static_cast<double>(y) / h;
      double* v = result.field.vec(x, y);
      for (int d = 0; d < dim; ++d) {
        double acc = bias[d];
        const double* row = weight.data() + static_cast<std::size_t>(d) * in_dim;
        for (int k = 0; k < in_dim; ++k) acc += row[k] * input[k];
        v[d] = acc;
      }
    }
  }

  if (snapshot) {
    const LossValue initial =
        discriminative_loss(result.field, instances, params, settings.include_background);
    snapshot(0, result.field, initial.total);
  }

  const std::size_t n_params = result.field.data().size();
  std::vector<double> m(n_params, 0.0);
  std::vector<double> v2(n_params, 0.0);
  result.loss_trajectory.reserve(settings.steps);
  for (int step = 1; step <= settings.steps; ++step) {
    const LossValue loss =
        discriminative_loss(result.field, instances, params, settings.include_background);
    if (!std::isfinite(loss.total))
      throw numerical_error("embedding optimization diverged at step " + std::to_string(step));
    const std::vector<double> grad =
        discriminative_gradient(result.field, instances, params, settings.include_background);

    const double corr1 = 1.0 - std::pow(settings.beta1, step);
    const double corr2 = 1.0 - std::pow(settings.beta2, step);
    // Linear decay: large early steps close the margin gaps, a gentle
    // landing keeps the final field smooth for the density clustering.
    const double lr = settings.learning_rate *
                      (1.0 - static_cast<double>(step - 1) / settings.steps);
    double* x = result.field.data().data();
    for (std::size_t i = 0; i < n_params; ++i) {
      m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * grad[i];
      v2[i] = settings.beta2 * v2[i] + (1.0 - settings.beta2) * grad[i] * grad[i];
      x[i] -= lr * (m[i] / corr1) / (std::sqrt(v2[i] / corr2) + settings.epsilon);
    }
    result.loss_trajectory.push_back(loss.total);
    if (snapshot) {
      const LossValue after =
          discriminative_loss(result.field, instances, params, settings.include_background);
      snapshot(step, result.field, after.total);
    }
  }

  constexpr std::size_t kWarmup = 20;
  for (std::size_t t = std::max<std::size_t>(kWarmup, 10); t < result.loss_trajectory.size(); ++t)
    if (result.loss_trajectory[t] > result.loss_trajectory[t - 10]) ++result.window_regressions;
  return result;
}

void write_embedding(const std::string& path, const EmbeddingField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::vector<float> row(static_cast<std::size_t>(field.width()) * field.dim());
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      const double* v = field.vec(x, y);
      for (int d = 0; d < field.dim(); ++d)
        row[static_cast<std::size_t>(x) * field.dim() + d] = static_cast<float>(v[d]);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  nlohmann::json sidecar{{"width", field.width()}, {"height", field.height()}, {"dim", field.dim()}};
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot write " + path + ".json");
  meta << sidecar.dump(2) << "\n";
}

EmbeddingField read_embedding(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot open " + path + ".json");
  nlohmann::json sidecar = nlohmann::json::parse(meta);
  EmbeddingField field(sidecar.at("width").get<int>(), sidecar.at("height").get<int>(),
                       sidecar.at("dim").get<int>());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<float> buf(field.data().size());
  in.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
  if (!in) throw std::runtime_error("truncated embedding file " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) field.data()[i] = buf[i];
  return field;
}

}  // namespace pigseg
