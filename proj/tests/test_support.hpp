#pragma once

#include <Eigen/Dense>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "signnet/autodiff.hpp"
#include "signnet/graph.hpp"

namespace signnet::testing {

inline Graph make_graph(NodeId n, std::vector<Edge> edges, Eigen::MatrixXd x = {},
                        std::vector<int> labels = {}, int classes = 1) {
  if (x.size() == 0) x = Eigen::MatrixXd::Ones(n, 1);
  if (labels.empty()) labels.assign(n, 0);
  return Graph(n, edges, std::move(x), std::move(labels), classes);
}

inline Graph path3() {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 1, 0, 0, 1;
  return make_graph(3, {{0, 1}, {1, 2}}, x, {0, 0, 1}, 2);
}

/// Erdős–Rényi graph with Gaussian features and uniform labels.
inline Graph random_graph(NodeId n, double p, std::uint32_t seed, int d = 4, int classes = 3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::vector<Edge> edges;
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = a + 1; b < n; ++b) {
      if (coin(rng)) edges.emplace_back(a, b);
    }
  }
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  std::vector<int> labels(n);
  for (auto& y : labels) y = label(rng);
  return Graph(n, edges, std::move(x), std::move(labels), classes);
}

inline ad::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// Largest relative error between the autodiff gradient of `loss()` and
/// central differences for every entry of every parameter.
template <typename LossFn>
double gradient_error(std::vector<ad::Tensor> params, LossFn loss, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  ad::backward(loss());
  std::vector<ad::Matrix> analytic;
  for (auto& p : params) analytic.push_back(p.grad_or_zero());

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Matrix& value = params[k].mutable_value();
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = loss().item();
      value.data()[i] = saved - h;
      const double down = loss().item();
      value.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      const double err = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("SIGNNET_TMP");
  std::filesystem::path dir =
      base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "signnet-tests";
  dir /= name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace signnet::testing
