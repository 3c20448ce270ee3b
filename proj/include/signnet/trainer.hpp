#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "signnet/enrichment.hpp"
#include "signnet/graph.hpp"
#include "signnet/model.hpp"
#include "signnet/sampler.hpp"

namespace signnet {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* to_string(Split s);

struct SplitMasks {
  std::vector<Split> assignment;  // one entry per node
  bool stratified = true;
  std::string warning;            // non-empty when stratification was abandoned

  NodeMask mask(Split s) const;
  std::vector<NodeId> nodes(Split s) const;
  std::size_t count(Split s) const;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Sizes floor(train·n), floor(val·n) and the remainder. Per-class quotas use
/// the largest-remainder rule; when some class has fewer than 3 nodes the
/// split is drawn without stratification and `warning` says so.
/// Throws ValidationError when the fractions are negative or do not sum to 1.
SplitMasks make_splits(const Graph& g, const SplitFractions& fractions, std::uint64_t seed);

struct GcnConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  int hidden = 128;
  double dropout = 0.3;
  int epochs = 200;
  int layers = 2;
};

struct TransformerConfig {
  double lr_start = 2e-4;
  double lr_end = 1e-9;
  double weight_decay = 0.01;
  int batch = 32;
  int epochs = 300;
  int patience = 50;
};

struct TrainConfig {
  GcnConfig gcn;
  TransformerConfig transformer;
  std::uint64_t seed = 0;

  /// Throws ValidationError on non-positive rates, sizes or batch.
  void validate() const;
};

/// −log softmax(logits)[label] averaged over rows.
ad::Tensor cross_entropy(const ad::Tensor& logits, std::span<const int> labels);

struct GcnResult {
  GcnParams params;
  Eigen::MatrixXd p;  // n × d amplified features from the trained weights
  double final_loss = 0.0;
  double train_accuracy = 0.0;  // of the auxiliary head
};

/// Trains the compatibility-graph GCN (widths d → hidden → … → d, sigmoid)
/// with an auxiliary linear classifier on the training nodes, Adam with a
/// coupled L2 penalty. Returns the frozen weights and P = gcn_amplify(...).
/// Throws RuntimeFailure when the loss stops being finite.
GcnResult train_gcn_stage(const Graph& g, const CompatibilityMatrix& comp,
                          const SplitMasks& masks, const GcnConfig& config, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's batches
  double train_acc = 0.0;   // fraction of training instances classified correctly in train mode
  double val_acc = 0.0;     // ensemble accuracy, eval mode
};

struct TransformerResult {
  ModelParams params;  // best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
};

/// Inputs of the transformer stage that stay fixed across epochs.
struct TransformerData {
  const Graph* graph = nullptr;
  ad::Tensor features;  // X_final, one row per node
  const SubgraphSet* sequences = nullptr;
  const StructuralEncoding* encoding = nullptr;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// AdamW over shuffled mini-batches of training sequences with a linear
/// learning-rate schedule; stops once `patience` epochs pass without a new
/// best validation ensemble accuracy and returns the best parameters.
/// Throws RuntimeFailure on a non-finite loss.
TransformerResult train_transformer_stage(const TransformerData& data, const SplitMasks& masks,
                                          const ModelConfig& model_config,
                                          const TransformerConfig& config, std::uint64_t seed,
                                          const EpochCallback& on_epoch = {});

/// Ensemble predictions for `nodes`, evaluated in chunks.
std::vector<EnsemblePrediction> predict_nodes(const TransformerData& data,
                                              const ModelParams& params,
                                              const ModelConfig& model_config,
                                              std::span<const NodeId> nodes);

/// Fraction of split nodes whose ensemble label equals the true label.
double evaluate(const TransformerData& data, const ModelParams& params,
                const ModelConfig& model_config, const SplitMasks& masks, Split split);

/// Final target-token states averaged over each node's sequences (n × hidden).
Eigen::MatrixXd node_embeddings(const TransformerData& data, const ModelParams& params,
                                const ModelConfig& model_config);

}  // namespace signnet
