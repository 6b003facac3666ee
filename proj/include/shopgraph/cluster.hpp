// Copyright 2026 The shopgraph Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Hierarchical density clustering with a noise label: core distances,
// mutual-reachability minimum spanning tree, condensed cluster tree and
// excess-of-mass cluster selection.

#ifndef SHOPGRAPH_CLUSTER_HPP
#define SHOPGRAPH_CLUSTER_HPP

#include <Eigen/Dense>
#include <map>
#include <numeric>

#include "shopgraph/common.hpp"

namespace shopgraph {

inline constexpr int kNoise = -1;

struct DensityParams {
  int min_cluster_size = 5;
  int min_samples = 5;  // neighbour rank used for the core distance
  /// Let the root compete in the excess-of-mass selection.
  bool allow_single_cluster = false;

  void validate() const {
    if (min_cluster_size < 2) throw Error("DensityParams: min_cluster_size must be >= 2");
    if (min_samples < 1) throw Error("DensityParams: min_samples must be >= 1");
    if (min_samples > min_cluster_size) throw Error("DensityParams: min_samples must be <= min_cluster_size");
  }
};

struct MstEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;
};

struct ClusterLabeling {
  std::vector<int> labels;  // kNoise or 0..n_clusters-1
  int n_clusters = 0;
  std::map<int, std::size_t> sizes;  // cluster id -> members (noise not included)
  std::size_t noise = 0;
};

struct ClusterProfile {
  int cluster_id = 0;
  std::size_t size = 0;
  Eigen::VectorXd centroid;
  Eigen::VectorXd normalized_centroid;
  bool zero_centroid = false;
};

/// Condensed tree record: `child` is a cluster id (>= n) or a point index (< n).
struct CondensedRecord {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

/// Distance to the min_samples-th nearest other point (Euclidean).
inline Eigen::VectorXd core_distances(const Eigen::MatrixXd& points, int min_samples) {
  const Eigen::Index n = points.rows();
  if (min_samples < 1) throw Error("core_distances: min_samples must be >= 1");
  if (n <= min_samples) throw Error("core_distances: need more points than min_samples");
  Eigen::VectorXd core(n);
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d[t++] = (points.row(i) - points.row(j)).norm();
    auto kth = d.begin() + (min_samples - 1);
    std::nth_element(d.begin(), kth, d.end());
    core(i) = *kth;
  }
  return core;
}

inline double mutual_reachability(const Eigen::MatrixXd& points, const Eigen::VectorXd& core, Eigen::Index a,
                                  Eigen::Index b) {
  return std::max({core(a), core(b), (points.row(a) - points.row(b)).norm()});
}

/// Prim's algorithm on the dense mutual-reachability graph. Ties go to the lower
/// index, both when choosing the next vertex and when keeping a parent.
inline std::vector<MstEdge> mutual_reachability_mst(const Eigen::MatrixXd& points, const Eigen::VectorXd& core) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) throw Error("mutual_reachability_mst: need at least 2 points");
  if (static_cast<std::size_t>(core.size()) != n) throw Error("mutual_reachability_mst: core size mismatch");
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(n, 0);
  std::vector<MstEdge> edges;
  edges.reserve(n - 1);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double d = mutual_reachability(points, core, static_cast<Eigen::Index>(current),
                                           static_cast<Eigen::Index>(j));
      if (d < best[j]) {
        best[j] = d;
        parent[j] = current;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({std::min(parent[next], next), std::max(parent[next], next), best[next]});
    current = next;
  }
  return edges;
}

namespace detail {

inline double lambda_of(double distance) { return 1.0 / std::max(distance, 1e-300); }

struct LinkageNode {
  std::size_t left = 0, right = 0;
  double distance = 0.0;
  std::size_t size = 1;
};

}  // namespace detail

/// Condensed cluster tree from an MST over n = edges + 1 points. Cluster ids
/// start at n (the root); point records have child < n.
inline std::vector<CondensedRecord> condense_tree(const std::vector<MstEdge>& mst, int min_cluster_size) {
  const std::size_t n = mst.size() + 1;
  std::vector<MstEdge> edges = mst;
  std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
    if (a.weight != b.weight) return a.weight < b.weight;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  // single-linkage dendrogram: nodes [0, n) are points, [n, 2n-1) merges
  std::vector<detail::LinkageNode> nodes(2 * n - 1);
  std::vector<std::size_t> uf(2 * n - 1);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].u >= n || edges[e].v >= n) throw Error("condense_tree: edge endpoint out of range");
    const std::size_t a = find(edges[e].u), b = find(edges[e].v);
    if (a == b) throw Error("condense_tree: edge list is not a tree");
    const std::size_t id = n + e;
    nodes[id] = {a, b, edges[e].weight, nodes[a].size + nodes[b].size};
    uf[a] = id;
    uf[b] = id;
  }

  const auto mcs = static_cast<std::size_t>(min_cluster_size);
  std::vector<CondensedRecord> out;
  if (n == 1) return out;
  const std::size_t root = 2 * n - 2;
  std::size_t next_label = n + 1;
  std::vector<std::size_t> label(2 * n - 1, 0);
  label[root] = n;

  auto leaves = [&](std::size_t node, std::vector<std::size_t>& acc) {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      if (x < n) acc.push_back(x);
      else {
        stack.push_back(nodes[x].right);
        stack.push_back(nodes[x].left);
      }
    }
  };

  // Dendrogram nodes merged at the same distance are one multi-way split, so
  // the result does not depend on the order equal-weight edges were merged.
  auto parts_at = [&](std::size_t node, std::vector<std::size_t>& parts) {
    const double d = nodes[node].distance;
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      if (x >= n && nodes[x].distance == d) {
        stack.push_back(nodes[x].right);
        stack.push_back(nodes[x].left);
      } else {
        parts.push_back(x);
      }
    }
  };

  std::vector<std::size_t> queue{root}, parts, pts;
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const std::size_t node = queue[qi];
    if (node < n) continue;
    const double lam = detail::lambda_of(nodes[node].distance);
    const std::size_t here = label[node];
    parts.clear();
    parts_at(node, parts);
    const auto big = static_cast<std::size_t>(
        std::count_if(parts.begin(), parts.end(), [&](std::size_t x) { return nodes[x].size >= mcs; }));
    for (const std::size_t part : parts) {
      if (nodes[part].size < mcs) {
        pts.clear();
        leaves(part, pts);
        for (auto p : pts) out.push_back({here, p, lam, 1});
      } else if (big >= 2) {
        label[part] = next_label++;
        out.push_back({here, label[part], lam, nodes[part].size});
        queue.push_back(part);
      } else {
        label[part] = here;
        queue.push_back(part);
      }
    }
  }
  return out;
}

/// Excess-of-mass selection over the condensed tree. Points that fall out of a
/// selected cluster (or any of its descendants) take its label; the rest are
/// noise. When no cluster would be selected and n >= min_cluster_size, the root
/// becomes the single cluster.
inline ClusterLabeling extract_clusters(const std::vector<MstEdge>& mst, const DensityParams& params) {
  params.validate();
  const std::size_t n = mst.size() + 1;
  ClusterLabeling res;
  res.labels.assign(n, kNoise);
  const auto tree = condense_tree(mst, params.min_cluster_size);
  const std::size_t root = n;
  std::size_t max_cluster = root;
  for (const auto& r : tree)
    if (r.child >= n) max_cluster = std::max(max_cluster, r.child);
  const std::size_t n_clusters_total = max_cluster - n + 1;

  std::vector<double> birth(n_clusters_total, 0.0), stability(n_clusters_total, 0.0);
  std::vector<std::size_t> cluster_parent(n_clusters_total, 0);
  std::vector<std::vector<std::size_t>> children(n_clusters_total);
  std::vector<std::size_t> point_parent(n, root);
  for (const auto& r : tree) {
    if (r.child >= n) {
      birth[r.child - n] = r.lambda;
      cluster_parent[r.child - n] = r.parent;
      children[r.parent - n].push_back(r.child);
    } else {
      point_parent[r.child] = r.parent;
    }
  }
  for (const auto& r : tree)
    stability[r.parent - n] += (r.lambda - birth[r.parent - n]) * static_cast<double>(r.child_size);

  // children always carry larger ids than their parent: descending order is bottom-up
  std::vector<bool> selected(n_clusters_total, false);
  std::vector<double> subtree(stability);
  const std::size_t first = params.allow_single_cluster ? root : root + 1;
  for (std::size_t c = max_cluster + 1; c-- > first;) {
    const std::size_t ci = c - n;
    double child_sum = 0.0;
    for (auto ch : children[ci]) child_sum += subtree[ch - n];
    if (!children[ci].empty() && child_sum > stability[ci]) {
      subtree[ci] = child_sum;
    } else {
      selected[ci] = true;
      subtree[ci] = stability[ci];
      std::vector<std::size_t> stack(children[ci].begin(), children[ci].end());
      while (!stack.empty()) {
        const std::size_t d = stack.back();
        stack.pop_back();
        selected[d - n] = false;
        for (auto g : children[d - n]) stack.push_back(g);
      }
    }
  }
  if (std::none_of(selected.begin(), selected.end(), [](bool b) { return b; }) &&
      n >= static_cast<std::size_t>(params.min_cluster_size))
    selected[0] = true;

  // label points, naming clusters by their smallest member index
  std::vector<std::ptrdiff_t> owner(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t c = point_parent[p];
    while (true) {
      if (selected[c - n]) {
        owner[p] = static_cast<std::ptrdiff_t>(c);
        break;
      }
      if (c == root) break;
      c = cluster_parent[c - n];
    }
  }
  std::map<std::ptrdiff_t, int> rename;
  for (std::size_t p = 0; p < n; ++p) {
    if (owner[p] < 0) {
      ++res.noise;
      continue;
    }
    auto [it, inserted] = rename.emplace(owner[p], static_cast<int>(rename.size()));
    res.labels[p] = it->second;
    ++res.sizes[it->second];
  }
  res.n_clusters = static_cast<int>(rename.size());
  return res;
}

/// Core distances, MST and extraction in one call.
inline ClusterLabeling cluster_points(const Eigen::MatrixXd& points, const DensityParams& params) {
  params.validate();
  const Eigen::VectorXd core = core_distances(points, params.min_samples);
  return extract_clusters(mutual_reachability_mst(points, core), params);
}

inline Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double nrm = y.row(i).norm();
    if (nrm > 0) y.row(i) /= nrm;
  }
  return y;
}

/// Mean member row per cluster, then scaled to unit length.
inline std::vector<ClusterProfile> profile_clusters(const ClusterLabeling& labels, const Eigen::MatrixXd& w) {
  if (static_cast<Eigen::Index>(labels.labels.size()) != w.rows())
    throw Error("profile_clusters: label count does not match rows");
  std::vector<ClusterProfile> out(static_cast<std::size_t>(labels.n_clusters));
  for (int c = 0; c < labels.n_clusters; ++c) {
    out[static_cast<std::size_t>(c)].cluster_id = c;
    out[static_cast<std::size_t>(c)].centroid = Eigen::VectorXd::Zero(w.cols());
  }
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const int l = labels.labels[i];
    if (l == kNoise) continue;
    auto& p = out[static_cast<std::size_t>(l)];
    p.centroid += w.row(static_cast<Eigen::Index>(i)).transpose();
    ++p.size;
  }
  for (auto& p : out) {
    if (p.size > 0) p.centroid /= static_cast<double>(p.size);
    const double nrm = p.centroid.norm();
    p.zero_centroid = !(nrm > 0.0);
    p.normalized_centroid = p.zero_centroid ? p.centroid : Eigen::VectorXd(p.centroid / nrm);
  }
  return out;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_CLUSTER_HPP
