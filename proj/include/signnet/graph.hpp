#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace signnet {

using NodeId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;
/// One byte per node, nonzero = selected.
using NodeMask = std::vector<std::uint8_t>;

/// Immutable simple undirected graph with node features and labels.
///
/// Construction symmetrizes the edge list, drops self-loops and removes
/// duplicates. Edges are stored once as (u, v) with u < v, sorted.
class Graph {
 public:
  Graph() = default;

  /// Throws ValidationError on out-of-range ids, shape mismatches or labels
  /// outside [0, num_classes).
  Graph(NodeId num_nodes, std::span<const Edge> edges, Eigen::MatrixXd features,
        std::vector<int> labels, int num_classes);

  NodeId num_nodes() const { return n_; }
  Eigen::Index feature_dim() const { return features_.cols(); }
  int num_classes() const { return num_classes_; }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<Edge>& edges() const { return edges_; }
  /// Sorted neighbor list of v.
  std::span<const NodeId> neighbors(NodeId v) const {
    return {adj_.data() + offsets_[v], adj_.data() + offsets_[v + 1]};
  }
  NodeId degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  /// Same features and labels, different edge set.
  Graph with_edges(std::span<const Edge> edges) const;

 private:
  NodeId n_ = 0;
  int num_classes_ = 0;
  std::vector<Edge> edges_;
  std::vector<NodeId> offsets_{0};
  std::vector<NodeId> adj_;
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
};

/// Row sums of A.
std::vector<NodeId> degree_vector(const Graph& g);

/// Â = D^{-1/2}(A + I)D^{-1/2}, D the degree matrix of A + I.
template <typename Scalar = double>
Eigen::SparseMatrix<Scalar> sym_norm_adjacency(const Graph& g) {
  const NodeId n = g.num_nodes();
  std::vector<Scalar> inv_sqrt(n);
  for (NodeId v = 0; v < n; ++v) inv_sqrt[v] = Scalar(1) / std::sqrt(Scalar(g.degree(v) + 1));
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(n + 2 * g.num_edges());
  for (NodeId v = 0; v < n; ++v) triplets.emplace_back(v, v, inv_sqrt[v] * inv_sqrt[v]);
  for (const auto& [a, b] : g.edges()) {
    const Scalar w = inv_sqrt[a] * inv_sqrt[b];
    triplets.emplace_back(a, b, w);
    triplets.emplace_back(b, a, w);
  }
  Eigen::SparseMatrix<Scalar> out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

/// Ã = D^{-1}(A + I), row-stochastic.
template <typename Scalar = double>
Eigen::SparseMatrix<Scalar, Eigen::RowMajor> rw_norm_adjacency(const Graph& g) {
  const NodeId n = g.num_nodes();
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(n + 2 * g.num_edges());
  for (NodeId v = 0; v < n; ++v) {
    const Scalar w = Scalar(1) / Scalar(g.degree(v) + 1);
    triplets.emplace_back(v, v, w);
    for (NodeId u : g.neighbors(v)) triplets.emplace_back(v, u, w);
  }
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

/// a·b / (|a||b|), or 0 when either norm is 0. Throws std::invalid_argument
/// on length mismatch.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
  return a.derived().reshaped().dot(b.derived().reshaped()) / (na * nb);
}

/// Binary feature-similarity graph: C(i) = { j != i : cos(X_i, X_j) > tau }.
class CompatibilityMatrix {
 public:
  CompatibilityMatrix(std::vector<std::vector<NodeId>> neighbors, double tau)
      : neighbors_(std::move(neighbors)), tau_(tau) {}

  NodeId num_nodes() const { return static_cast<NodeId>(neighbors_.size()); }
  double tau() const { return tau_; }
  /// Sorted, excludes i itself.
  const std::vector<NodeId>& neighbors(NodeId i) const { return neighbors_[i]; }
  bool contains(NodeId i, NodeId j) const;
  std::size_t num_pairs() const;

  /// Ĉ = D_c^{-1/2}(C + I)D_c^{-1/2} with D_c = diag(|C(i)| + 1).
  Eigen::SparseMatrix<double, Eigen::RowMajor> normalized_with_self() const;

 private:
  std::vector<std::vector<NodeId>> neighbors_;
  double tau_;
};

CompatibilityMatrix compatibility_matrix(const Graph& g, double tau = 0.5);

struct DatasetMetrics {
  double avg_degree = 0;
  double clustering = 0;
  double triangles_per_node = 0;
  double mean_pagerank = 0;
  double homophily = 0;
};

/// Per-node triangle counts.
std::vector<std::int64_t> triangle_counts(const Graph& g);

/// Standard PageRank with uniform teleport; dangling mass is redistributed
/// uniformly so the result sums to 1.
Eigen::VectorXd pagerank(const Graph& g, double damping = 0.85, double tol = 1e-10,
                         int max_iter = 10000);

DatasetMetrics dataset_metrics(const Graph& g);

}  // namespace signnet
