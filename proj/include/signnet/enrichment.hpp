#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "signnet/graph.hpp"

namespace signnet {

/// Weights of the compatibility-graph GCN, one matrix per layer (no bias).
struct GcnParams {
  std::vector<Eigen::MatrixXd> weights;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
};

/// Output of the feature enrichment stage.
struct EnrichedFeatures {
  Eigen::MatrixXd x_deg;       // n × d
  Eigen::MatrixXd x_sim;       // n × 2d
  Eigen::MatrixXd x_final;     // n × 3d
  Eigen::MatrixXd class_reps;  // u × d
  std::vector<int> nearest_class;
};

/// Runs `layers` rounds of h ← σ(Ĉ h W) over the compatibility graph, where
/// Ĉ weights each pair (i, j) in C(i) ∪ {i} by 1/√(d_i d_j) with
/// d_i = |C(i)| + 1. σ is the logistic sigmoid. Returns the last layer (P).
Eigen::MatrixXd gcn_amplify(const Graph& g, const CompatibilityMatrix& comp,
                            const GcnParams& params, int layers);

/// X_deg[i] = P[i] + score[i], the scalar broadcast over every column.
Eigen::MatrixXd connection_aware(const Eigen::MatrixXd& p, std::span<const double> score);
Eigen::MatrixXd connection_aware(const Eigen::MatrixXd& p, std::span<const NodeId> degree);

/// Mean raw feature row per class over the nodes selected by `mask`.
/// Throws ValidationError naming the first class with no selected node.
Eigen::MatrixXd class_representatives(const Graph& g, std::span<const std::uint8_t> mask);

/// Index of the most cosine-similar representative (lowest index on ties).
int nearest_representative(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const Eigen::MatrixXd& class_reps);

/// X_sim[i] = [X[i] ‖ class_reps[k*]] with k* the nearest representative.
/// Writes k* per node into `chosen` when non-null.
Eigen::MatrixXd class_centric_concat(const Graph& g, const Eigen::MatrixXd& class_reps,
                                     std::vector<int>* chosen = nullptr);

/// [X_deg ‖ X_sim]. Throws std::invalid_argument when row counts differ.
Eigen::MatrixXd fuse(const Eigen::MatrixXd& x_deg, const Eigen::MatrixXd& x_sim);

struct EnrichOptions {
  /// false: literal score (default); true: divide by the maximum degree.
  bool deg_norm = false;
};

/// Composes the connection score, class-centric concatenation and fusion
/// given the amplified features P and a representative-selection mask.
EnrichedFeatures enrich(const Graph& g, const Eigen::MatrixXd& p,
                        std::span<const std::uint8_t> rep_mask, const EnrichOptions& options = {});

}  // namespace signnet
