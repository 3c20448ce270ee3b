#pragma once

#include <cstdint>

#include "signnet/graph.hpp"

namespace signnet {

/// Stochastic block model with class-shifted Gaussian features.
struct SbmOptions {
  NodeId nodes = 200;
  int blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 16;
  /// Feature j of a block-k node has mean +shift when j % blocks == k and
  /// −shift otherwise, plus N(0, noise²) noise.
  double shift = 0.5;
  double noise = 1.0;
};

/// Nodes are assigned to blocks contiguously; the label is the block index.
Graph generate_sbm(const SbmOptions& options, std::uint64_t seed);

}  // namespace signnet
