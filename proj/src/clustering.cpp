#include "pigseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace pigseg {

namespace {

// Finite stand-in for 1/0 so that stability sums stay well ordered when
// merges happen at distance zero.
constexpr double kLambdaMax = 1e300;

inline double lambda_of(double dist) { return dist > 0.0 ? 1.0 / dist : kLambdaMax; }

double point_distance(const double* a, const double* b, int dim, DistanceMetric metric) {
  double acc = 0.0;
  if (metric == DistanceMetric::euclidean) {
    for (int d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  }
  for (int d = 0; d < dim; ++d) acc += std::abs(a[d] - b[d]);
  return acc;
}

struct DendroNode {
  int left = -1;
  int right = -1;
  double dist = 0.0;
  int size = 1;
};

// Single-linkage dendrogram from sorted MST edges; leaves are 0..n-1,
// internal nodes n..2n-2.
std::vector<DendroNode> build_dendrogram(int n, const std::vector<MstEdge>& edges) {
  std::vector<DendroNode> nodes(static_cast<std::size_t>(2 * n - 1));
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> current(static_cast<std::size_t>(n));  // component -> dendro node
  std::iota(current.begin(), current.end(), 0);

  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  int next = n;
  for (const MstEdge& e : edges) {
    const int ru = find(e.u);
    const int rv = find(e.v);
    DendroNode& node = nodes[next];
    node.left = current[ru];
    node.right = current[rv];
    node.dist = e.weight;
    node.size = nodes[node.left].size + nodes[node.right].size;
    parent[rv] = ru;
    current[ru] = next;
    ++next;
  }
  return nodes;
}

struct CondensedRow {
  int parent = 0;
  int child = 0;  // cluster id or point id, per child_is_cluster
  bool child_is_cluster = false;
  double lambda = 0.0;
  int size = 1;
};

struct CondensedTree {
  std::vector<CondensedRow> rows;
  std::vector<double> birth_lambda;           // per cluster
  std::vector<int> parent_cluster;            // per cluster, -1 for root
  std::vector<std::vector<int>> child_clusters;
  std::vector<int> cluster_size;              // member count at birth
};

void collect_leaves(const std::vector<DendroNode>& nodes, int n, int node,
                    std::vector<int>& out) {
  std::vector<int> stack{node};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    if (cur < n) {
      out.push_back(cur);
    } else {
      stack.push_back(nodes[cur].left);
      stack.push_back(nodes[cur].right);
    }
  }
}

CondensedTree condense(const std::vector<DendroNode>& nodes, int n, int min_cluster_size) {
  CondensedTree tree;
  auto new_cluster = [&](double birth, int parent, int size) {
    tree.birth_lambda.push_back(birth);
    tree.parent_cluster.push_back(parent);
    tree.child_clusters.emplace_back();
    tree.cluster_size.push_back(size);
    if (parent >= 0) tree.child_clusters[parent].push_back(static_cast<int>(tree.birth_lambda.size()) - 1);
    return static_cast<int>(tree.birth_lambda.size()) - 1;
  };

  const int root_node = 2 * n - 2;
  const int root_cluster = new_cluster(0.0, -1, nodes[root_node].size);

  std::vector<int> leaves;
  std::vector<std::pair<int, int>> queue{{root_node, root_cluster}};  // (dendro node, cluster)
  std::size_t head = 0;
  while (head < queue.size()) {
    const auto [node, cluster] = queue[head++];
    const int left = nodes[node].left;
    const int right = nodes[node].right;
    const double lam = lambda_of(nodes[node].dist);
    const int left_size = nodes[left].size;
    const int right_size = nodes[right].size;

    auto spill_points = [&](int sub) {
      leaves.clear();
      collect_leaves(nodes, n, sub, leaves);
      for (int p : leaves) tree.rows.push_back({cluster, p, false, lam, 1});
    };

    if (left_size >= min_cluster_size && right_size >= min_cluster_size) {
      const int cl = new_cluster(lam, cluster, left_size);
      tree.rows.push_back({cluster, cl, true, lam, left_size});
      const int cr = new_cluster(lam, cluster, right_size);
      tree.rows.push_back({cluster, cr, true, lam, right_size});
      queue.emplace_back(left, cl);
      queue.emplace_back(right, cr);
    } else if (left_size < min_cluster_size && right_size < min_cluster_size) {
      spill_points(left);
      spill_points(right);
    } else if (left_size >= min_cluster_size) {
      spill_points(right);
      queue.emplace_back(left, cluster);
    } else {
      spill_points(left);
      queue.emplace_back(right, cluster);
    }
  }
  return tree;
}

// Excess-of-mass selection: a cluster keeps itself when its stability is
// at least the sum over its selected subtrees, otherwise it passes the
// subtree sum upward. The root competes only when no other condensed
// cluster exists.
std::vector<bool> select_clusters_eom(const CondensedTree& tree, int n, int min_cluster_size) {
  const int n_clusters = static_cast<int>(tree.birth_lambda.size());
  std::vector<double> stability(n_clusters, 0.0);
  for (const CondensedRow& row : tree.rows)
    stability[row.parent] += (row.lambda - tree.birth_lambda[row.parent]) * row.size;

  std::vector<bool> selected(n_clusters, false);
  if (n_clusters == 1) {
    if (n >= min_cluster_size) selected[0] = true;
    return selected;
  }

  // Cluster ids are assigned top-down, so reverse order visits children
  // before parents.
  for (int c = n_clusters - 1; c >= 1; --c) {
    double subtree = 0.0;
    for (int ch : tree.child_clusters[c]) subtree += stability[ch];
    if (!tree.child_clusters[c].empty() && subtree > stability[c]) {
      stability[c] = subtree;
      selected[c] = false;
    } else {
      selected[c] = true;
      // Deselect all descendants.
      std::vector<int> stack(tree.child_clusters[c]);
      while (!stack.empty()) {
        const int d = stack.back();
        stack.pop_back();
        selected[d] = false;
        stack.insert(stack.end(), tree.child_clusters[d].begin(), tree.child_clusters[d].end());
      }
    }
  }
  return selected;
}

}  // namespace

std::vector<double> core_distances(const std::vector<double>& points, int dim, int min_samples,
                                   DistanceMetric metric) {
  if (dim <= 0 || points.size() % dim != 0)
    throw std::invalid_argument("point buffer does not match dimension");
  const int n = static_cast<int>(points.size()) / dim;
  if (min_samples < 1) throw std::invalid_argument("min_samples must be >= 1");
  std::vector<double> core(n, 0.0);
  if (n <= 1) return core;
  const int k = std::min(min_samples, n - 1);
  std::vector<double> row(n - 1);
  for (int i = 0; i < n; ++i) {
    int out = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      row[out++] = point_distance(points.data() + static_cast<std::size_t>(i) * dim,
                                  points.data() + static_cast<std::size_t>(j) * dim, dim, metric);
    }
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    core[i] = row[k - 1];
  }
  return core;
}

std::vector<MstEdge> mutual_reachability_mst(const std::vector<double>& points, int dim,
                                             const std::vector<double>& core,
                                             DistanceMetric metric) {
  const int n = static_cast<int>(core.size());
  std::vector<MstEdge> edges;
  if (n <= 1) return edges;

  std::vector<uint8_t> in_tree(n, 0);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<int> best_from(n, 0);
  in_tree[0] = 1;
  int last = 0;
  for (int added = 1; added < n; ++added) {
    // Relax edges from the most recently added vertex.
    const double* lp = points.data() + static_cast<std::size_t>(last) * dim;
    for (int j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = point_distance(lp, points.data() + static_cast<std::size_t>(j) * dim, dim, metric);
      const double w = std::max({core[last], core[j], d});
      if (w < best[j]) {
        best[j] = w;
        best_from[j] = last;
      } else if (w == best[j]) {
        const auto cand = std::minmax(last, j);
        const auto have = std::minmax(best_from[j], j);
        if (cand < have) best_from[j] = last;
      }
    }
    int pick = -1;
    for (int j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      if (pick < 0 || best[j] < best[pick]) {
        pick = j;
      } else if (best[j] == best[pick]) {
        const auto cand = std::minmax(best_from[j], j);
        const auto have = std::minmax(best_from[pick], pick);
        if (cand < have) pick = j;
      }
    }
    edges.push_back({std::min(best_from[pick], pick), std::max(best_from[pick], pick), best[pick]});
    in_tree[pick] = 1;
    last = pick;
  }
  std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
    if (a.weight != b.weight) return a.weight < b.weight;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  return edges;
}

ClusterAssignment hdbscan(const std::vector<double>& points, int dim, const ClusterParams& params) {
  if (dim <= 0 || points.size() % dim != 0)
    throw std::invalid_argument("point buffer does not match dimension");
  if (params.min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
  for (double v : points)
    if (!std::isfinite(v)) throw std::invalid_argument("points must be finite");
  const int n = static_cast<int>(points.size()) / dim;

  ClusterAssignment result;
  result.labels.assign(n, -1);
  if (n == 0 || n < params.min_cluster_size) return result;

  const std::vector<double> core = core_distances(points, dim, params.min_samples, params.metric);
  const std::vector<MstEdge> edges = mutual_reachability_mst(points, dim, core, params.metric);
  const std::vector<DendroNode> nodes = build_dendrogram(n, edges);
  const CondensedTree tree = condense(nodes, n, params.min_cluster_size);
  const std::vector<bool> selected = select_clusters_eom(tree, n, params.min_cluster_size);

  // Each point falls out of exactly one condensed cluster; its label is
  // the deepest selected cluster on the chain to the root.
  std::vector<int> point_parent(n, -1);
  for (const CondensedRow& row : tree.rows)
    if (!row.child_is_cluster) point_parent[row.child] = row.parent;

  std::vector<int> raw_label(n, -1);
  for (int p = 0; p < n; ++p) {
    int c = point_parent[p];
    while (c >= 0 && !selected[c]) c = tree.parent_cluster[c];
    raw_label[p] = c;
  }

  // Final ids ordered by decreasing member count, then first appearance.
  struct ClusterStat {
    int cluster = 0;
    int count = 0;
    int first_point = 0;
  };
  std::vector<ClusterStat> stats;
  std::vector<int> stat_of(tree.birth_lambda.size(), -1);
  for (int p = 0; p < n; ++p) {
    const int c = raw_label[p];
    if (c < 0) continue;
    if (stat_of[c] < 0) {
      stat_of[c] = static_cast<int>(stats.size());
      stats.push_back({c, 0, p});
    }
    ++stats[stat_of[c]].count;
  }
  std::sort(stats.begin(), stats.end(), [](const ClusterStat& a, const ClusterStat& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.first_point < b.first_point;
  });
  std::vector<int> final_label(tree.birth_lambda.size(), -1);
  for (std::size_t i = 0; i < stats.size(); ++i) final_label[stats[i].cluster] = static_cast<int>(i);

  for (int p = 0; p < n; ++p)
    if (raw_label[p] >= 0) result.labels[p] = final_label[raw_label[p]];
  result.n_clusters = static_cast<int>(stats.size());
  return result;
}

MaskedClustering cluster_masked_embedding(const EmbeddingField& field, const LabelImage& mask,
                                          const ClusterParams& params) {
  if (field.width() != mask.width() || field.height() != mask.height())
    throw std::invalid_argument("embedding field and mask dimensions differ");

  MaskedClustering out;
  out.instances = LabelImage(mask.width(), mask.height(), LabelKind::instance);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y) != 0) out.pixels.emplace_back(x, y);
  if (out.pixels.empty()) return out;

  std::vector<double> points;
  points.reserve(out.pixels.size() * field.dim());
  for (const auto& [x, y] : out.pixels) {
    const double* v = field.vec(x, y);
    points.insert(points.end(), v, v + field.dim());
  }
  out.assignment = hdbscan(points, field.dim(), params);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const int label = out.assignment.labels[i];
    if (label >= 0)
      out.instances.at(out.pixels[i].first, out.pixels[i].second) = static_cast<uint16_t>(label + 1);
  }
  return out;
}

void write_cluster_csv(const std::string& path, const MaskedClustering& clustering,
                       const ClusterParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "pixel_x,pixel_y,label\n";
  for (std::size_t i = 0; i < clustering.pixels.size(); ++i)
    out << clustering.pixels[i].first << "," << clustering.pixels[i].second << ","
        << clustering.assignment.labels[i] << "\n";

  int n_noise = 0;
  for (int label : clustering.assignment.labels)
    if (label < 0) ++n_noise;
  nlohmann::json summary{{"n_clusters", clustering.assignment.n_clusters},
                         {"n_noise", n_noise},
                         {"min_cluster_size", params.min_cluster_size}};
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot write " + path + ".json");
  meta << summary.dump(2) << "\n";
}

}  // namespace pigseg
