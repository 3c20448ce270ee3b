#include "signnet/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "signnet/errors.hpp"

namespace signnet {

Graph::Graph(NodeId num_nodes, std::span<const Edge> edges, Eigen::MatrixXd features,
             std::vector<int> labels, int num_classes)
    : n_(num_nodes),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  if (n_ < 0) throw ValidationError("graph: negative node count");
  if (features_.rows() != n_) {
    throw ValidationError("graph: feature matrix has " + std::to_string(features_.rows()) +
                          " rows, expected " + std::to_string(n_));
  }
  if (static_cast<NodeId>(labels_.size()) != n_) {
    throw ValidationError("graph: " + std::to_string(labels_.size()) + " labels, expected " +
                          std::to_string(n_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) {
      throw ValidationError("graph: label " + std::to_string(labels_[i]) + " of node " +
                            std::to_string(i) + " outside [0, " + std::to_string(num_classes_) +
                            ")");
    }
  }

  edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a < 0 || a >= n_ || b < 0 || b >= n_) {
      throw ValidationError("graph: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") out of range for n = " + std::to_string(n_));
    }
    if (a == b) continue;
    edges_.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  std::vector<NodeId> deg(n_, 0);
  for (auto [a, b] : edges_) {
    ++deg[a];
    ++deg[b];
  }
  offsets_.assign(n_ + 1, 0);
  std::partial_sum(deg.begin(), deg.end(), offsets_.begin() + 1);
  adj_.resize(offsets_.back());
  std::vector<NodeId> cursor(offsets_.begin(), offsets_.end() - 1);
  for (auto [a, b] : edges_) {
    adj_[cursor[a]++] = b;
    adj_[cursor[b]++] = a;
  }
  for (NodeId v = 0; v < n_; ++v) {
    std::sort(adj_.begin() + offsets_[v], adj_.begin() + offsets_[v + 1]);
  }
}

Graph Graph::with_edges(std::span<const Edge> edges) const {
  return Graph(n_, edges, features_, labels_, num_classes_);
}

std::vector<NodeId> degree_vector(const Graph& g) {
  std::vector<NodeId> deg(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) deg[v] = g.degree(v);
  return deg;
}

bool CompatibilityMatrix::contains(NodeId i, NodeId j) const {
  const auto& row = neighbors_[i];
  return std::binary_search(row.begin(), row.end(), j);
}

std::size_t CompatibilityMatrix::num_pairs() const {
  std::size_t total = 0;
  for (const auto& row : neighbors_) total += row.size();
  return total / 2;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> CompatibilityMatrix::normalized_with_self() const {
  const NodeId n = num_nodes();
  std::vector<double> inv_sqrt(n);
  std::size_t nnz = n;
  for (NodeId i = 0; i < n; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(neighbors_[i].size() + 1));
    nnz += neighbors_[i].size();
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(nnz);
  for (NodeId i = 0; i < n; ++i) {
    triplets.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (NodeId j : neighbors_[i]) triplets.emplace_back(i, j, inv_sqrt[i] * inv_sqrt[j]);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

CompatibilityMatrix compatibility_matrix(const Graph& g, double tau) {
  const NodeId n = g.num_nodes();
  const Eigen::MatrixXd& x = g.features();

  // Unit rows; featureless nodes stay zero and are never compatible.
  Eigen::MatrixXd unit = x;
  std::vector<bool> has_norm(n);
  for (NodeId i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    has_norm[i] = norm > 0.0;
    if (has_norm[i]) unit.row(i) /= norm;
  }

  std::vector<std::vector<NodeId>> rows(n);
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < n; start += kBlock) {
    const Eigen::Index len = std::min<Eigen::Index>(kBlock, n - start);
    const Eigen::Index tail = n - start;
    const Eigen::MatrixXd sims =
        unit.middleRows(start, len) * unit.bottomRows(tail).transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      const auto i = static_cast<NodeId>(start + r);
      if (!has_norm[i]) continue;
      for (Eigen::Index c = r + 1; c < tail; ++c) {
        const auto j = static_cast<NodeId>(start + c);
        if (has_norm[j] && sims(r, c) > tau) {
          rows[i].push_back(j);
          rows[j].push_back(i);
        }
      }
    }
  }
  for (auto& row : rows) std::sort(row.begin(), row.end());
  return CompatibilityMatrix(std::move(rows), tau);
}

std::vector<std::int64_t> triangle_counts(const Graph& g) {
  const NodeId n = g.num_nodes();
  std::vector<std::int64_t> tri(n, 0);
  std::vector<char> mark(n, 0);
  for (NodeId u = 0; u < n; ++u) {
    const auto nu = g.neighbors(u);
    for (NodeId v : nu) mark[v] = 1;
    for (NodeId v : nu) {
      if (v <= u) continue;
      for (NodeId w : g.neighbors(v)) {
        if (w <= v || !mark[w]) continue;
        ++tri[u];
        ++tri[v];
        ++tri[w];
      }
    }
    for (NodeId v : nu) mark[v] = 0;
  }
  return tri;
}

Eigen::VectorXd pagerank(const Graph& g, double damping, double tol, int max_iter) {
  const NodeId n = g.num_nodes();
  if (n == 0) return {};
  Eigen::VectorXd rank = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd next(n);
  for (int it = 0; it < max_iter; ++it) {
    double dangling = 0.0;
    next.setZero();
    for (NodeId v = 0; v < n; ++v) {
      const NodeId d = g.degree(v);
      if (d == 0) {
        dangling += rank[v];
        continue;
      }
      const double share = rank[v] / d;
      for (NodeId u : g.neighbors(v)) next[u] += share;
    }
    next = damping * (next.array() + dangling / n) + (1.0 - damping) / n;
    const double delta = (next - rank).lpNorm<1>();
    rank.swap(next);
    if (delta < tol) break;
  }
  return rank;
}

DatasetMetrics dataset_metrics(const Graph& g) {
  DatasetMetrics m;
  const NodeId n = g.num_nodes();
  if (n == 0) return m;

  m.avg_degree = 2.0 * static_cast<double>(g.num_edges()) / n;

  const auto tri = triangle_counts(g);
  double cc_sum = 0.0;
  std::int64_t tri_sum = 0;
  for (NodeId v = 0; v < n; ++v) {
    tri_sum += tri[v];
    const double d = g.degree(v);
    if (d >= 2) cc_sum += 2.0 * static_cast<double>(tri[v]) / (d * (d - 1.0));
  }
  m.clustering = cc_sum / n;
  // Each triangle is counted once at each of its three corners.
  m.triangles_per_node = static_cast<double>(tri_sum) / n;

  m.mean_pagerank = pagerank(g).mean();

  if (g.num_edges() > 0) {
    std::size_t same = 0;
    for (auto [a, b] : g.edges()) same += g.labels()[a] == g.labels()[b];
    m.homophily = static_cast<double>(same) / static_cast<double>(g.num_edges());
  } else {
    m.homophily = 1.0;
  }
  return m;
}

}  // namespace signnet
