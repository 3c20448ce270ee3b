#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "signnet/errors.hpp"
#include "signnet/graph.hpp"

namespace signnet {

/// Which matrix the PPR recursion r ← c·e_v + (1−c)·M·r propagates with.
enum class Propagation {
  /// M = (A + I)D^{-1}, column-stochastic: rows of S are probability vectors.
  kRandomWalk,
  /// M = D^{-1/2}(A + I)D^{-1/2}, the symmetric normalization; rows of S are
  /// nonnegative but do not sum to 1 in general.
  kSymmetric,
};

const char* to_string(Propagation p);
Propagation propagation_from_string(const std::string& s);

/// Propagation matrix M for the chosen normalization.
Eigen::SparseMatrix<double, Eigen::RowMajor> propagation_matrix(const Graph& g, Propagation kind);

struct PprSolverOptions {
  double tol = 1e-8;  // on the L1 error bound (1−c)/c · ‖Δr‖₁
  int max_iter = 1000;
};

/// r = c (I − (1−c)M)^{-1} e_v by power iteration. Stops once
/// (1−c)/c · ‖r_k − r_{k−1}‖₁, which bounds ‖r_k − r‖₁ when M is
/// column-stochastic, drops below options.tol.
/// Throws RuntimeFailure (with the last residual) on non-convergence and
/// std::invalid_argument when c is outside (0, 1] or v is out of range.
template <typename Scalar = double, typename SparseType>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ppr_row(const SparseType& m, Eigen::Index v, Scalar c,
                                                 const PprSolverOptions& options = {});

/// Dense direct solve of the same system; the reference backend (n ≤ 2000).
Eigen::MatrixXd ppr_dense(const Eigen::MatrixXd& m, double c);

struct SamplingMatrix {
  Eigen::MatrixXd scores;  // row v = PPR vector personalized at v
  double c = 0.15;
  Propagation propagation = Propagation::kRandomWalk;
};

SamplingMatrix sampling_matrix(const Graph& g, double c,
                               Propagation kind = Propagation::kRandomWalk,
                               const PprSolverOptions& options = {});

/// Target node followed by k1 context nodes.
struct SubgraphSequence {
  NodeId target = 0;
  std::vector<NodeId> nodes;  // nodes[0] == target
};

/// q sequences per node, grouped by node: result[v][m].
using SubgraphSet = std::vector<std::vector<SubgraphSequence>>;

/// Ensemble sampling. Per node v: the k1 top-scoring other nodes form the
/// fallback pool; r = min(#positive off-target scores, k1) nodes are drawn
/// without replacement with probability proportional to score, and the
/// remaining k1 − r slots are filled uniformly from the unused pool nodes.
/// Node v's randomness is keyed by (seed, v).
SubgraphSet sample_subgraphs(const SamplingMatrix& s, int k1, int q, std::uint64_t seed);

/// Sampling for a single node; exposed for statistical tests.
std::vector<SubgraphSequence> sample_node(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
                                          NodeId v, int k1, int q, std::uint64_t seed);

// ---------------------------------------------------------------------------

template <typename Scalar, typename SparseType>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ppr_row(const SparseType& m, Eigen::Index v, Scalar c,
                                                 const PprSolverOptions& options) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = m.rows();
  if (!(c > Scalar(0) && c <= Scalar(1))) {
    throw std::invalid_argument("ppr_row: damping factor must lie in (0, 1]");
  }
  if (v < 0 || v >= n) throw std::invalid_argument("ppr_row: node out of range");

  Vector r = Vector::Zero(n);
  r[v] = c;
  Vector next(n);
  const Scalar bound = (Scalar(1) - c) / c;
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  for (int it = 0; it < options.max_iter; ++it) {
    next.noalias() = (Scalar(1) - c) * (m * r);
    next[v] += c;
    residual = bound * (next - r).template lpNorm<1>();
    r.swap(next);
    if (residual < Scalar(options.tol)) return r;
  }
  throw RuntimeFailure("ppr_row: no convergence for node " + std::to_string(v) + " after " +
                       std::to_string(options.max_iter) + " iterations (residual " +
                       std::to_string(static_cast<double>(residual)) + ")");
}

}  // namespace signnet
