#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace signnet::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;
/// Constant operands are shared with the backward closures that need them.
using SharedMatrices = std::shared_ptr<const std::vector<Matrix>>;
using SharedSparse = std::shared_ptr<const SparseMatrix>;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad.resize(value.rows(), value.cols());
      grad.noalias() = g;
    } else {
      grad.noalias() += g;
    }
  }
};

}  // namespace detail

/// Dense 2-D tensor handle in a dynamically built computation graph.
///
/// Copies share the underlying node. Every operation on tensors records a
/// backward closure while gradient recording is enabled (see NoGradGuard).
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizers and initialization. Do not call while a
  /// graph built from this tensor is still awaiting backward().
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  Matrix grad_or_zero() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  double item() const;

  const char* op() const { return node_->op; }

 private:
  friend Tensor make_result(Matrix value, std::vector<Tensor> inputs, const char* op,
                            std::function<void(detail::Node&)> backward);
  friend void backward(const Tensor& loss);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

 public:
  detail::Node& node() const { return *node_; }
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

std::string shape_string(const Tensor& t);

// Forward ops. Shape mismatches throw std::invalid_argument naming the op.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a·bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Constant sparse matrix times tensor.
Tensor spmm(const SharedSparse& s, const Tensor& x);
/// Elementwise sum; b may also be a single row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a constant (non-learnable) matrix of identical shape.
Tensor add_constant(const Tensor& a, const Matrix& c);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor gather_rows(const Tensor& a, std::span<const std::int64_t> rows);
Tensor row_softmax(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Normalizes each row, then applies per-column gain and shift (both 1 × cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);
/// Inverted dropout; identity (same node) when !training or p == 0.
Tensor dropout(const Tensor& a, double p, std::uint64_t seed, bool training);
/// Σ_m weights[m] · basis[m]; weights is 1 × M, basis matrices are constant.
Tensor mix(const Tensor& weights, const SharedMatrices& basis);
Tensor sum(const Tensor& a);
/// Multi-head attention over equal-length sequences stacked row-wise in q, k
/// and v (batch·seq_len × width). For sequence b and head h, with the head's
/// column block of width d_k = width / heads:
///   softmax(Q_h K_hᵀ / √d_k + Σ_m mix[h, m] · bases[b][m]) V_h.
/// Heads are written back to their column blocks. When `probabilities` is
/// non-null it receives the batch·heads attention matrices, sequence-major.
Tensor biased_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mix,
                        std::span<const SharedMatrices> bases, Index seq_len, int heads,
                        std::vector<Matrix>* probabilities = nullptr);
/// Mean over rows of −log softmax(logits)[label]; returns a 1 × 1 tensor.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
/// grad. Interior gradients are reset at the start of each call.
void backward(const Tensor& loss);

}  // namespace signnet::ad
