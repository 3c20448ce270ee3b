#include "signnet/enrichment.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "signnet/errors.hpp"

namespace signnet {

namespace {

Eigen::MatrixXd logistic(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

}  // namespace

Eigen::MatrixXd gcn_amplify(const Graph& g, const CompatibilityMatrix& comp,
                            const GcnParams& params, int layers) {
  if (layers < 1 || static_cast<int>(params.weights.size()) != layers) {
    throw std::invalid_argument("gcn_amplify: expected " + std::to_string(layers) +
                                " weight matrices, got " +
                                std::to_string(params.weights.size()));
  }
  if (comp.num_nodes() != g.num_nodes()) {
    throw std::invalid_argument("gcn_amplify: compatibility matrix size differs from graph");
  }
  Eigen::Index width = g.feature_dim();
  for (int l = 0; l < layers; ++l) {
    if (params.weights[l].rows() != width) {
      throw std::invalid_argument("gcn_amplify: layer " + std::to_string(l) + " expects " +
                                  std::to_string(params.weights[l].rows()) +
                                  " inputs, previous width is " + std::to_string(width));
    }
    width = params.weights[l].cols();
  }
  if (width != g.feature_dim()) {
    throw std::invalid_argument("gcn_amplify: final width " + std::to_string(width) +
                                " differs from feature dimension " +
                                std::to_string(g.feature_dim()));
  }

  const auto norm = comp.normalized_with_self();
  Eigen::MatrixXd h = g.features();
  for (int l = 0; l < layers; ++l) {
    const Eigen::MatrixXd hw = h * params.weights[l];
    h = logistic(norm * hw);
  }
  return h;
}

Eigen::MatrixXd connection_aware(const Eigen::MatrixXd& p, std::span<const double> score) {
  if (static_cast<Eigen::Index>(score.size()) != p.rows()) {
    throw std::invalid_argument("connection_aware: " + std::to_string(score.size()) +
                                " scores for " + std::to_string(p.rows()) + " rows");
  }
  Eigen::MatrixXd out = p;
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i).array() += score[i];
  return out;
}

Eigen::MatrixXd connection_aware(const Eigen::MatrixXd& p, std::span<const NodeId> degree) {
  std::vector<double> score(degree.begin(), degree.end());
  return connection_aware(p, score);
}

Eigen::MatrixXd class_representatives(const Graph& g, std::span<const std::uint8_t> mask) {
  if (static_cast<NodeId>(mask.size()) != g.num_nodes()) {
    throw std::invalid_argument("class_representatives: mask size differs from node count");
  }
  const int u = g.num_classes();
  Eigen::MatrixXd reps = Eigen::MatrixXd::Zero(u, g.feature_dim());
  std::vector<int> counts(u, 0);
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    if (!mask[i]) continue;
    const int k = g.labels()[i];
    reps.row(k) += g.features().row(i);
    ++counts[k];
  }
  for (int k = 0; k < u; ++k) {
    if (counts[k] == 0) {
      throw ValidationError("class_representatives: class " + std::to_string(k) +
                            " has no selected node");
    }
    reps.row(k) /= counts[k];
  }
  return reps;
}

int nearest_representative(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const Eigen::MatrixXd& class_reps) {
  int best = 0;
  double best_sim = -2.0;
  for (Eigen::Index k = 0; k < class_reps.rows(); ++k) {
    const double s = cosine_similarity(x, class_reps.row(k));
    if (s > best_sim) {
      best_sim = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Eigen::MatrixXd class_centric_concat(const Graph& g, const Eigen::MatrixXd& class_reps,
                                     std::vector<int>* chosen) {
  if (class_reps.rows() == 0 || class_reps.cols() != g.feature_dim()) {
    throw std::invalid_argument("class_centric_concat: representatives must be u x d");
  }
  const Eigen::Index d = g.feature_dim();
  Eigen::MatrixXd out(g.num_nodes(), 2 * d);
  if (chosen) chosen->assign(g.num_nodes(), 0);
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    const int k = nearest_representative(g.features().row(i), class_reps);
    out.row(i).head(d) = g.features().row(i);
    out.row(i).tail(d) = class_reps.row(k);
    if (chosen) (*chosen)[i] = k;
  }
  return out;
}

Eigen::MatrixXd fuse(const Eigen::MatrixXd& x_deg, const Eigen::MatrixXd& x_sim) {
  if (x_deg.rows() != x_sim.rows()) {
    throw std::invalid_argument("fuse: row counts differ (" + std::to_string(x_deg.rows()) +
                                " vs " + std::to_string(x_sim.rows()) + ")");
  }
  Eigen::MatrixXd out(x_deg.rows(), x_deg.cols() + x_sim.cols());
  out << x_deg, x_sim;
  return out;
}

EnrichedFeatures enrich(const Graph& g, const Eigen::MatrixXd& p,
                        std::span<const std::uint8_t> rep_mask, const EnrichOptions& options) {
  if (p.rows() != g.num_nodes() || p.cols() != g.feature_dim()) {
    throw std::invalid_argument("enrich: P must be n x d");
  }
  EnrichedFeatures out;
  const auto deg = degree_vector(g);
  std::vector<double> score(deg.begin(), deg.end());
  if (options.deg_norm) {
    const double max_deg = deg.empty() ? 0.0 : *std::max_element(deg.begin(), deg.end());
    if (max_deg > 0) {
      for (auto& s : score) s /= max_deg;
    }
  }
  out.x_deg = connection_aware(p, score);
  out.class_reps = class_representatives(g, rep_mask);
  out.x_sim = class_centric_concat(g, out.class_reps, &out.nearest_class);
  out.x_final = fuse(out.x_deg, out.x_sim);
  return out;
}

}  // namespace signnet
