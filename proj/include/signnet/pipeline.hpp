#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "signnet/enrichment.hpp"
#include "signnet/graph.hpp"
#include "signnet/io.hpp"
#include "signnet/trainer.hpp"

namespace signnet {

std::string metrics_to_json(const DatasetMetrics& m, int indent = 2);

struct PreprocessOutput {
  SplitMasks splits;
  GcnResult gcn;
  EnrichedFeatures features;
};

/// Splits, GCN amplification and feature fusion for one configuration.
PreprocessOutput preprocess(const Graph& g, const RunConfig& config);

/// Sampling matrix and subgraph sequences for one configuration.
SubgraphSet sample(const Graph& g, const RunConfig& config);

using LogFn = std::function<void(const std::string&)>;

struct PipelineOptions {
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;
  RunConfig config;
  /// Skip stages whose recorded input key and output hashes still match.
  bool resume = false;
  bool emit_embeddings = false;
  LogFn log;
  EpochCallback on_epoch;
};

struct StageReport {
  std::string name;
  bool skipped = false;
};

struct EvalReport {
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
  double train_accuracy = 0.0;
};

struct PipelineResult {
  DatasetMetrics metrics;
  EvalReport eval;
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<StageReport> stages;
};

/// metrics → preprocess → sample → train → eval, persisting each stage's
/// artifacts in out_dir together with provenance.json. A stage that runs
/// forces every later stage to run as well. Errors are rethrown with the
/// stage name prefixed (ValidationError stays ValidationError, everything
/// else becomes RuntimeFailure).
PipelineResult run_pipeline(const PipelineOptions& options);

/// Recomputes accuracies of a finished run directory from its checkpoint and
/// persisted artifacts, optionally writing embeddings.txt.
EvalReport evaluate_run(const std::filesystem::path& run_dir, bool emit_embeddings = false);

}  // namespace signnet
