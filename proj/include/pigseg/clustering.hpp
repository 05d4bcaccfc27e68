#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pigseg/embedding.hpp"
#include "pigseg/image.hpp"

namespace pigseg {

enum class DistanceMetric {
  euclidean,
  manhattan,
};

struct ClusterParams {
  int min_cluster_size = 100;
  int min_samples = 25;
  DistanceMetric metric = DistanceMetric::euclidean;
};

/// Flat clustering result: labels are -1 for noise, 0..n_clusters-1
/// otherwise, ordered by decreasing member count.
struct ClusterAssignment {
  std::vector<int> labels;
  int n_clusters = 0;
};

/// Distance to the k-th nearest other point, k = min(min_samples, n-1).
std::vector<double> core_distances(const std::vector<double>& points, int dim, int min_samples,
                                   DistanceMetric metric);

struct MstEdge {
  int u = 0;
  int v = 0;  // u < v
  double weight = 0.0;
};

/// Minimum spanning tree of the complete mutual-reachability graph
/// (Prim), edges sorted by (weight, u, v). Ties during construction are
/// broken toward the smaller (u, v) pair.
std::vector<MstEdge> mutual_reachability_mst(const std::vector<double>& points, int dim,
                                             const std::vector<double>& core, DistanceMetric metric);

/// HDBSCAN: core distances, mutual reachability, MST single-linkage
/// hierarchy, condensation by min_cluster_size, excess-of-mass flat
/// extraction. Deterministic given input order. Fewer points than
/// min_cluster_size yields all noise; if the condensed tree never splits,
/// the root itself becomes the single cluster.
ClusterAssignment hdbscan(const std::vector<double>& points, int dim, const ClusterParams& params);

struct MaskedClustering {
  LabelImage instances;                      // noise and background mapped to 0
  std::vector<std::pair<int, int>> pixels;   // foreground pixels, row-major
  ClusterAssignment assignment;              // labels parallel to pixels
};

/// Clusters the embedding vectors of mask-foreground pixels and scatters
/// the labels back into an instance image; instance ids follow decreasing
/// cluster size. An empty mask produces an all-background image.
MaskedClustering cluster_masked_embedding(const EmbeddingField& field, const LabelImage& mask,
                                          const ClusterParams& params);

/// CSV of (pixel_x, pixel_y, label) plus a JSON summary next to it.
void write_cluster_csv(const std::string& path, const MaskedClustering& clustering,
                       const ClusterParams& params);

}  // namespace pigseg
