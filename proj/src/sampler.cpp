#include "signnet/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "signnet/rng.hpp"

namespace signnet {

const char* to_string(Propagation p) {
  switch (p) {
    case Propagation::kRandomWalk:
      return "random_walk";
    case Propagation::kSymmetric:
      return "symmetric";
  }
  return "unknown";
}

Propagation propagation_from_string(const std::string& s) {
  if (s == "random_walk") return Propagation::kRandomWalk;
  if (s == "symmetric") return Propagation::kSymmetric;
  throw ValidationError("unknown propagation '" + s + "' (expected random_walk or symmetric)");
}

Eigen::SparseMatrix<double, Eigen::RowMajor> propagation_matrix(const Graph& g, Propagation kind) {
  if (kind == Propagation::kSymmetric) {
    return Eigen::SparseMatrix<double, Eigen::RowMajor>(sym_norm_adjacency<double>(g));
  }
  return Eigen::SparseMatrix<double, Eigen::RowMajor>(rw_norm_adjacency<double>(g).transpose());
}

Eigen::MatrixXd ppr_dense(const Eigen::MatrixXd& m, double c) {
  if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("ppr_dense: c must lie in (0, 1]");
  const Eigen::Index n = m.rows();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - (1.0 - c) * m;
  // Column v of the inverse is the PPR vector personalized at v; return them
  // as rows.
  const Eigen::MatrixXd inv = system.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
  return c * inv.transpose();
}

SamplingMatrix sampling_matrix(const Graph& g, double c, Propagation kind,
                               const PprSolverOptions& options) {
  SamplingMatrix out;
  out.c = c;
  out.propagation = kind;
  const auto m = propagation_matrix(g, kind);
  const NodeId n = g.num_nodes();
  out.scores.resize(n, n);
  for (NodeId v = 0; v < n; ++v) out.scores.row(v) = ppr_row<double>(m, v, c, options).transpose();
  return out;
}

std::vector<SubgraphSequence> sample_node(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
                                          NodeId v, int k1, int q, std::uint64_t seed) {
  const auto n = static_cast<NodeId>(scores.size());
  if (k1 < 0 || k1 >= n) {
    throw ValidationError("sample_subgraphs: k1 = " + std::to_string(k1) +
                                " must satisfy 0 <= k1 < n = " + std::to_string(n));
  }
  if (q < 1) throw std::invalid_argument("sample_subgraphs: q must be at least 1");

  // Top-k1 other nodes by score; ties resolved toward the smaller id.
  std::vector<NodeId> order;
  order.reserve(n - 1);
  for (NodeId u = 0; u < n; ++u) {
    if (u != v) order.push_back(u);
  }
  std::partial_sort(order.begin(), order.begin() + k1, order.end(), [&](NodeId a, NodeId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  const std::vector<NodeId> top(order.begin(), order.begin() + k1);

  // Positive off-target scores define the sampling distribution.
  std::vector<NodeId> candidates;
  std::vector<double> weights;
  for (NodeId u = 0; u < n; ++u) {
    if (u == v) continue;
    const double s = std::max(scores[u], 0.0);
    if (s > 0.0) {
      candidates.push_back(u);
      weights.push_back(s);
    }
  }
  const int r = std::min(static_cast<int>(candidates.size()), k1);

  CounterRng rng(seed, static_cast<std::uint64_t>(v));
  std::vector<SubgraphSequence> out;
  out.reserve(q);
  std::vector<double> w;
  std::vector<char> used(n, 0);
  for (int m = 0; m < q; ++m) {
    SubgraphSequence seq;
    seq.target = v;
    seq.nodes.reserve(k1 + 1);
    seq.nodes.push_back(v);

    // Successive weighted draws without replacement.
    w = weights;
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (int drawn = 0; drawn < r; ++drawn) {
      double target = rng.uniform() * total;
      std::size_t pick = 0;
      double acc = 0.0;
      std::size_t last_live = 0;
      for (; pick < w.size(); ++pick) {
        if (w[pick] == 0.0) continue;
        last_live = pick;
        acc += w[pick];
        if (target < acc) break;
      }
      if (pick == w.size()) pick = last_live;  // rounding at the upper end
      seq.nodes.push_back(candidates[pick]);
      total -= w[pick];
      w[pick] = 0.0;
      if (drawn + 1 < r && total <= 0.0) {
        total = std::accumulate(w.begin(), w.end(), 0.0);
      }
    }

    // Uniform fill from unused top nodes. The pool has k1 entries and at most
    // r of them are already taken, so it always holds k1 − r candidates.
    for (std::size_t i = 1; i < seq.nodes.size(); ++i) used[seq.nodes[i]] = 1;
    std::vector<NodeId> pool;
    pool.reserve(top.size());
    for (NodeId u : top) {
      if (!used[u]) pool.push_back(u);
    }
    for (int slot = 0; slot < k1 - r; ++slot) {
      const auto j = static_cast<std::size_t>(rng.below(pool.size() - slot));
      std::swap(pool[slot], pool[slot + j]);
      seq.nodes.push_back(pool[slot]);
    }
    for (std::size_t i = 1; i < seq.nodes.size(); ++i) used[seq.nodes[i]] = 0;
    out.push_back(std::move(seq));
  }
  return out;
}

SubgraphSet sample_subgraphs(const SamplingMatrix& s, int k1, int q, std::uint64_t seed) {
  const auto n = static_cast<NodeId>(s.scores.rows());
  if (k1 < 0 || k1 >= n) {
    throw ValidationError("sample_subgraphs: k1 = " + std::to_string(k1) +
                                " must satisfy 0 <= k1 < n = " + std::to_string(n));
  }
  SubgraphSet out(n);
  for (NodeId v = 0; v < n; ++v) out[v] = sample_node(s.scores.row(v), v, k1, q, seed);
  return out;
}

}  // namespace signnet
