#include <gtest/gtest.h>

#include <cmath>

#include "signnet/errors.hpp"
#include "signnet/graph.hpp"
#include "test_support.hpp"

using namespace signnet;
using signnet::testing::make_graph;
using signnet::testing::path3;
using signnet::testing::random_graph;

TEST(Graph, CleansSelfLoopsAndDuplicates) {
  const Graph g = make_graph(3, {{0, 1}, {1, 0}, {2, 2}, {1, 2}});
  ASSERT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.edges()[0], Edge(0, 1));
  EXPECT_EQ(g.edges()[1], Edge(1, 2));
  EXPECT_EQ(g.degree(1), 2);
}

TEST(Graph, RejectsOutOfRangeIds) {
  EXPECT_THROW(make_graph(2, {{0, 2}}), ValidationError);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  EXPECT_THROW(Graph(2, std::vector<Edge>{}, x, {0, 3}, 2), ValidationError);
}

TEST(DegreeVector, PathAndEdgeless) {
  EXPECT_EQ(degree_vector(path3()), (std::vector<NodeId>{1, 2, 1}));
  EXPECT_EQ(degree_vector(make_graph(4, {})), (std::vector<NodeId>{0, 0, 0, 0}));
}

TEST(SymNormAdjacency, SingleNode) {
  const Eigen::MatrixXd a = sym_norm_adjacency(make_graph(1, {}));
  ASSERT_EQ(a.rows(), 1);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(SymNormAdjacency, PathValues) {
  const Eigen::MatrixXd a = sym_norm_adjacency(path3());
  EXPECT_NEAR(a(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(a(0, 2), 0.0);
}

TEST(SymNormAdjacency, SymmetricWithSpectralRadiusAtMostOne) {
  const Graph g = random_graph(50, 0.1, 11);
  const Eigen::MatrixXd a = sym_norm_adjacency(g);
  EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GE(a.minCoeff(), 0.0);

  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(50, 1.0, 2.0).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    const Eigen::VectorXd w = a * v;
    lambda = w.norm();
    v = w / lambda;
  }
  EXPECT_LE(lambda, 1.0 + 1e-9);
}

TEST(RwNormAdjacency, RowsSumToOne) {
  const Graph g = random_graph(80, 0.05, 3);
  const Eigen::MatrixXd a = rw_norm_adjacency(g);
  EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);

  const Eigen::MatrixXd single = rw_norm_adjacency(make_graph(1, {}));
  EXPECT_DOUBLE_EQ(single(0, 0), 1.0);

  const Eigen::MatrixXd p = rw_norm_adjacency(path3());
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p(1, j), 1.0 / 3.0, 1e-15);
}

TEST(CosineSimilarity, Conventions) {
  Eigen::Vector2d a(1, 0), b(0, 1), z(0, 0), o(1, 1);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(z, o), 0.0);
  EXPECT_THROW(cosine_similarity(Eigen::VectorXd(a), Eigen::VectorXd::Ones(3)), std::invalid_argument);
}

TEST(Compatibility, PathExample) {
  const CompatibilityMatrix c = compatibility_matrix(path3(), 0.5);
  EXPECT_EQ(c.neighbors(0), std::vector<NodeId>{1});
  EXPECT_EQ(c.neighbors(1), std::vector<NodeId>{0});
  EXPECT_TRUE(c.neighbors(2).empty());
}

TEST(Compatibility, OrthogonalFeaturesAreIsolated) {
  const Graph g = make_graph(4, {{0, 1}}, Eigen::MatrixXd::Identity(4, 4));
  const CompatibilityMatrix c = compatibility_matrix(g, 0.999);
  EXPECT_EQ(c.num_pairs(), 0u);
}

TEST(Compatibility, MatchesBruteForceAndIsSymmetric) {
  const Graph g = random_graph(100, 0.0, 5, 3);
  const double tau = 0.3;
  const CompatibilityMatrix c = compatibility_matrix(g, tau);
  const Eigen::MatrixXd& x = g.features();
  for (NodeId i = 0; i < 100; ++i) {
    for (NodeId j = 0; j < 100; ++j) {
      const bool expected = i != j && x.row(i).dot(x.row(j)) /
                                              (x.row(i).norm() * x.row(j).norm()) > tau;
      ASSERT_EQ(c.contains(i, j), expected) << i << "," << j;
      ASSERT_EQ(c.contains(i, j), c.contains(j, i));
    }
  }
}

TEST(Compatibility, NormalizedWithSelf) {
  const Eigen::MatrixXd c = compatibility_matrix(path3(), 0.5).normalized_with_self();
  EXPECT_NEAR(c(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(c(2, 2), 1.0, 1e-15);
  EXPECT_EQ(c(1, 2), 0.0);
}

TEST(Metrics, Triangle) {
  const DatasetMetrics m = dataset_metrics(make_graph(3, {{0, 1}, {1, 2}, {0, 2}}));
  EXPECT_DOUBLE_EQ(m.avg_degree, 2.0);
  EXPECT_DOUBLE_EQ(m.clustering, 1.0);
  EXPECT_DOUBLE_EQ(m.triangles_per_node, 1.0);
  EXPECT_DOUBLE_EQ(m.homophily, 1.0);
  EXPECT_NEAR(m.mean_pagerank, 1.0 / 3.0, 1e-12);
}

TEST(Metrics, Path) {
  const DatasetMetrics m = dataset_metrics(path3());
  EXPECT_DOUBLE_EQ(m.homophily, 0.5);
  EXPECT_DOUBLE_EQ(m.clustering, 0.0);
  EXPECT_DOUBLE_EQ(m.triangles_per_node, 0.0);
  EXPECT_NEAR(m.avg_degree, 4.0 / 3.0, 1e-15);
}

TEST(Metrics, EdgelessHomophilyIsOne) {
  EXPECT_DOUBLE_EQ(dataset_metrics(make_graph(3, {})).homophily, 1.0);
}

TEST(Metrics, TriangleCountsMatchBruteForce) {
  const Graph g = random_graph(60, 0.15, 21);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(60, 60);
  for (const auto& [u, v] : g.edges()) a(u, v) = a(v, u) = 1;
  const Eigen::VectorXd expected = (a * a * a).diagonal() / 2.0;
  const auto counts = triangle_counts(g);
  for (NodeId v = 0; v < 60; ++v) EXPECT_EQ(counts[v], std::llround(expected[v]));
}

TEST(PageRank, SumsToOneAndMatchesDenseSolve) {
  const Graph g = random_graph(40, 0.08, 8);
  const Eigen::VectorXd pr = pagerank(g);
  EXPECT_NEAR(pr.sum(), 1.0, 1e-12);

  // Dense Google matrix with dangling columns replaced by uniform ones.
  const int n = 40;
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  for (NodeId v = 0; v < n; ++v) {
    if (g.degree(v) == 0) continue;
    t.col(v).setZero();
    for (NodeId u : g.neighbors(v)) t(u, v) = 1.0 / g.degree(v);
  }
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - 0.85 * t;
  const Eigen::VectorXd expected =
      system.fullPivLu().solve(Eigen::VectorXd::Constant(n, 0.15 / n));
  EXPECT_LT((pr - expected).cwiseAbs().maxCoeff(), 1e-9);
}
