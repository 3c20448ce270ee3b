#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "signnet/autodiff.hpp"
#include "signnet/graph.hpp"
#include "signnet/rng.hpp"
#include "signnet/sampler.hpp"

namespace signnet {

struct ModelConfig {
  int hidden = 128;
  int layers = 3;
  int heads = 4;
  double dropout = 0.3;
  int num_encodings = 4;  // M
  int ffn_hidden = 256;
  int k1 = 15;
  int q = 5;

  /// Throws ValidationError on non-positive sizes, dropout outside [0, 1)
  /// or a head count that does not divide the hidden width.
  void validate() const;
  int head_dim() const { return hidden / heads; }
};

/// Reachability encodings α_0 … α_{M−1} over the row-normalized Ã = D^{-1}(A + I).
///
/// α_0 is the identity relation, α_m = Ã^m for 0 < m < M − 1, and the last
/// component is identically zero. Powers are kept sparse.
class StructuralEncoding {
 public:
  StructuralEncoding() = default;
  StructuralEncoding(const Graph& g, int num_encodings);

  int num_encodings() const { return num_encodings_; }
  NodeId num_nodes() const { return num_nodes_; }

  /// α_m(a, b) for node ids a, b.
  double alpha(int m, NodeId a, NodeId b) const;

  /// M matrices of size |seq| × |seq|, entry [m](i, j) = α_m(seq[i], seq[j]).
  ad::SharedMatrices basis(std::span<const NodeId> seq) const;

 private:
  int num_encodings_ = 0;
  NodeId num_nodes_ = 0;
  std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> powers_;  // Ã^1 … Ã^{M−2}
};

struct LayerParams {
  ad::Tensor w_q, w_k, w_v, w_o, b_o;
  ad::Tensor ln1_gain, ln1_shift;
  ad::Tensor w_1, b_1, w_2, b_2;
  ad::Tensor ln2_gain, ln2_shift;
};

/// Learnable tensors of the transformer and its input/output projections.
struct ModelParams {
  ad::Tensor w_in, b_in;        // input_dim × h, 1 × h
  std::vector<LayerParams> layers;
  ad::Tensor structure_mix;     // heads × M, row h = w_h
  ad::Tensor w_out, b_out;      // h × u, 1 × u

  std::vector<std::pair<std::string, ad::Tensor>> named() const;
  std::vector<ad::Tensor> all() const;
  /// Deep copy with fresh leaf tensors.
  ModelParams clone() const;
  ad::Index input_dim() const { return w_in.rows(); }
  int num_classes() const { return static_cast<int>(w_out.cols()); }
};

/// Glorot-uniform weights, zero biases, unit layer-norm gains, zero w_h.
ModelParams init_params(const ModelConfig& config, ad::Index input_dim, int num_classes,
                        std::uint64_t seed);

enum class Mode { kTrain, kEval };

/// Source of distinct dropout seeds within one forward pass.
class DropoutSeeds {
 public:
  explicit DropoutSeeds(std::uint64_t base) : base_(base) {}
  std::uint64_t next() { return CounterRng::mix(base_ + (++count_) * CounterRng::kGamma); }

 private:
  std::uint64_t base_;
  std::uint64_t count_ = 0;
};

/// Optional capture of every attention matrix produced during a pass.
struct AttentionTrace {
  std::vector<ad::Matrix> attention;
};

/// ψ_h = Σ_m w_h[m] · basis[m] for one sequence.
ad::Matrix structural_bias(const StructuralEncoding& enc, std::span<const NodeId> seq,
                           const ad::Matrix& mix_row);
ad::Matrix structural_bias(const StructuralEncoding& enc, std::span<const NodeId> seq,
                           const ModelParams& params, int head);

/// Multi-head self-attention over a batch of equal-length sequences stacked
/// row-wise in `h` (batch·seq_len × hidden). `bases[b]` holds the structural
/// basis of sequence b. Per head: softmax(Q_h K_hᵀ/√d_k + ψ_h) V_h; heads are
/// concatenated and mixed by w_o, b_o.
ad::Tensor sa_mha(const ad::Tensor& h, const LayerParams& layer, const ad::Tensor& structure_mix,
                  std::span<const ad::SharedMatrices> bases, int seq_len,
                  const ModelConfig& config, Mode mode, DropoutSeeds& seeds,
                  AttentionTrace* trace = nullptr);

/// LN(H + MHA(H)) followed by LN(H' + FFN(H')), FFN = GELU(H W_1 + b_1) W_2 + b_2.
ad::Tensor transformer_block(const ad::Tensor& h, const LayerParams& layer,
                             const ad::Tensor& structure_mix,
                             std::span<const ad::SharedMatrices> bases, int seq_len,
                             const ModelConfig& config, Mode mode, DropoutSeeds& seeds,
                             AttentionTrace* trace = nullptr);

struct BatchOutput {
  ad::Tensor logits;   // batch × u
  ad::Tensor readout;  // batch × hidden, final target-token states
};

/// Projects the enriched features of every sequence, runs all blocks and reads
/// out position 0. `features` holds one row per node.
BatchOutput forward_batch(std::span<const SubgraphSequence* const> seqs,
                          const ad::Tensor& features, const ModelParams& params,
                          const StructuralEncoding& enc, const ModelConfig& config, Mode mode,
                          std::uint64_t dropout_seed = 0, AttentionTrace* trace = nullptr);

/// Logits (1 × u) for one sequence. Throws std::invalid_argument on unknown ids.
ad::Tensor forward(const SubgraphSequence& seq, const ad::Tensor& features,
                   const ModelParams& params, const StructuralEncoding& enc,
                   const ModelConfig& config, Mode mode, std::uint64_t dropout_seed = 0);

struct EnsemblePrediction {
  int label = 0;
  Eigen::RowVectorXd probabilities;
};

Eigen::RowVectorXd softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits);
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& values);

/// Mean of softmax(forward(seq)) over a node's sequences, eval mode.
EnsemblePrediction ensemble_predict(std::span<const SubgraphSequence> seqs,
                                    const ad::Tensor& features, const ModelParams& params,
                                    const StructuralEncoding& enc, const ModelConfig& config);

/// Checkpoint file (JSON) holding the config and every parameter tensor.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace signnet
