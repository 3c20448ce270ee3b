#include "signnet/synthetic.hpp"

#include "signnet/errors.hpp"
#include "signnet/rng.hpp"

namespace signnet {

Graph generate_sbm(const SbmOptions& o, std::uint64_t seed) {
  if (o.nodes < 1 || o.blocks < 1 || o.blocks > o.nodes || o.feature_dim < 1) {
    throw ValidationError("sbm: need nodes >= blocks >= 1 and a positive feature dimension");
  }
  if (!(o.p_in >= 0 && o.p_in <= 1 && o.p_out >= 0 && o.p_out <= 1)) {
    throw ValidationError("sbm: edge probabilities must lie in [0, 1]");
  }
  CounterRng rng = make_rng(seed, RngStream::kSynthetic);
  std::vector<int> labels(o.nodes);
  for (NodeId v = 0; v < o.nodes; ++v) {
    labels[v] = static_cast<int>(static_cast<std::int64_t>(v) * o.blocks / o.nodes);
  }

  std::vector<Edge> edges;
  for (NodeId a = 0; a < o.nodes; ++a) {
    for (NodeId b = a + 1; b < o.nodes; ++b) {
      const double p = labels[a] == labels[b] ? o.p_in : o.p_out;
      if (rng.uniform() < p) edges.emplace_back(a, b);
    }
  }

  Eigen::MatrixXd x(o.nodes, o.feature_dim);
  for (NodeId v = 0; v < o.nodes; ++v) {
    for (int j = 0; j < o.feature_dim; ++j) {
      const double mean = j % o.blocks == labels[v] ? o.shift : -o.shift;
      x(v, j) = mean + o.noise * rng.normal();
    }
  }
  return Graph(o.nodes, edges, std::move(x), std::move(labels), o.blocks);
}

}  // namespace signnet
