#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "signnet/graph.hpp"
#include "signnet/model.hpp"
#include "signnet/sampler.hpp"
#include "signnet/trainer.hpp"

namespace signnet {

struct Dataset {
  std::string name;
  Graph graph;
};

/// Reads edges.txt, features.txt, labels.txt and meta.json from `dir`.
/// Throws ValidationError with "file:line: reason" on malformed input or when
/// the meta.json counts disagree with the files.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes a dataset in the same format load_dataset reads.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// One row per line, space-separated, shortest round-trip decimal form.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
std::string format_matrix(const Eigen::MatrixXd& m);
/// Throws ValidationError on ragged rows or non-numeric tokens.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

std::string format_double(double v);

/// `target<TAB>id id …`, the q lines of each node consecutive, nodes in order.
void write_subgraphs(const std::filesystem::path& path, const SubgraphSet& set);
SubgraphSet read_subgraphs(const std::filesystem::path& path, NodeId num_nodes);

/// One split name (train, val, test) per line.
void write_splits(const std::filesystem::path& path, const SplitMasks& masks);
SplitMasks read_splits(const std::filesystem::path& path, NodeId num_nodes);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
/// FNV-1a of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

struct EnrichmentConfig {
  bool class_reps_all = false;  // false: training nodes only
  bool deg_norm = false;
};

struct SamplerConfig {
  double c = 0.15;
  int k1 = 15;
  int q = 5;
  Propagation propagation = Propagation::kRandomWalk;
};

/// Every setting of one pipeline run.
struct RunConfig {
  std::uint64_t seed = 0;
  double tau = 0.5;
  SplitFractions split;
  EnrichmentConfig enrichment;
  SamplerConfig sampler;
  GcnConfig gcn;
  ModelConfig model;
  TransformerConfig transformer;

  /// Throws ValidationError naming the offending key.
  void validate() const;
  /// Model config with k1 and q taken from the sampler section.
  ModelConfig model_config() const;
  TrainConfig train_config() const;
};

/// Parses a JSON document over the defaults; unknown keys are rejected.
RunConfig parse_config(std::string_view json_text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);
/// Full JSON echo of every setting, stable key order.
std::string config_to_json(const RunConfig& config, int indent = 2);

}  // namespace signnet
