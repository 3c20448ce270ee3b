#include "signnet/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "signnet/rng.hpp"

namespace signnet::ad {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b));
}

}  // namespace

void detail::Node::accumulate(const Matrix& g) { accumulate_expr(g); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + "]";
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Matrix Tensor::grad_or_zero() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw std::invalid_argument("item: tensor is not scalar " + shape_string(*this));
  }
  return node_->value(0, 0);
}

Tensor make_result(Matrix value, std::vector<Tensor> inputs, const char* op,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.node_->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(std::move(in.node_));
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

namespace {

detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, "matmul", [](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate_expr(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate_expr(pa.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, "matmul_nt", [](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate_expr(self.grad * pb.value);
    if (pb.requires_grad) pb.accumulate_expr(self.grad.transpose() * pa.value);
  });
}

Tensor spmm(const SharedSparse& s, const Tensor& x) {
  if (s->cols() != x.rows()) {
    throw std::invalid_argument("spmm: sparse [" + std::to_string(s->rows()) + " x " +
                                std::to_string(s->cols()) + "] times " + shape_string(x));
  }
  Matrix out = *s * x.value();
  return make_result(std::move(out), {x}, "spmm", [s](detail::Node& self) {
    parent(self, 0).accumulate_expr(s->transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool broadcast = !same && b.rows() == 1 && a.cols() == b.cols();
  if (!same && !broadcast) shape_error("add", a, b);
  Matrix out;
  if (same) {
    out = a.value() + b.value();
  } else {
    out = a.value().rowwise() + b.value().row(0);
  }
  return make_result(std::move(out), {a, b}, "add", [broadcast](detail::Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate_expr(self.grad);
    if (pb.requires_grad) {
      if (broadcast) {
        pb.accumulate_expr(self.grad.colwise().sum());
      } else {
        pb.accumulate_expr(self.grad);
      }
    }
  });
}

Tensor add_constant(const Tensor& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    shape_error("add_constant", a, Tensor::constant(c));
  }
  Matrix out = a.value() + c;
  return make_result(std::move(out), {a}, "add_constant",
                     [](detail::Node& self) { parent(self, 0).accumulate_expr(self.grad); });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.value() * s;
  return make_result(std::move(out), {a}, "scale", [s](detail::Node& self) {
    parent(self, 0).accumulate_expr(self.grad * s);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a}, "transpose", [](detail::Node& self) {
    parent(self, 0).accumulate_expr(self.grad.transpose());
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0], p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    offsets.push_back(at);
    at += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), "concat_cols",
                     [offsets](detail::Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         auto& p = parent(self, i);
                         if (p.requires_grad) {
                           p.accumulate_expr(self.grad.middleCols(offsets[i], p.value.cols()));
                         }
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0], p);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    at += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), "concat_rows",
                     [offsets](detail::Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         auto& p = parent(self, i);
                         if (p.requires_grad) {
                           p.accumulate_expr(self.grad.middleRows(offsets[i], p.value.rows()));
                         }
                       }
                     });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of " + shape_string(a));
  }
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, "slice_cols", [start, count](detail::Node& self) {
    auto& p = parent(self, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleCols(start, count) += self.grad;
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::invalid_argument("slice_rows: [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") out of " + shape_string(a));
  }
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, "slice_rows", [start, count](detail::Node& self) {
    auto& p = parent(self, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleRows(start, count) += self.grad;
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::int64_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(rows[i]) + " out of " +
                                  shape_string(a));
    }
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<std::int64_t> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, "gather_rows", [idx](detail::Node& self) {
    auto& p = parent(self, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      p.grad.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
  });
}

Tensor row_softmax(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return make_result(std::move(out), {a}, "row_softmax", [](detail::Node& self) {
    const Matrix& y = self.value;
    // dx = y ⊙ (dy − rowsum(dy ⊙ y))
    const Eigen::VectorXd dots = (self.grad.array() * y.array()).rowwise().sum();
    Matrix dx = y.array() * (self.grad.colwise() - dots).array();
    parent(self, 0).accumulate_expr(dx);
  });
}

Tensor gelu(const Tensor& a) {
  Matrix cdf = a.value().unaryExpr([](double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); });
  Matrix out = a.value().cwiseProduct(cdf);
  return make_result(std::move(out), {a}, "gelu", [cdf = std::move(cdf)](detail::Node& self) {
    auto& p = parent(self, 0);
    const Matrix d = cdf + p.value.unaryExpr([](double x) {
      return x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    });
    p.accumulate_expr(self.grad.cwiseProduct(d));
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_result(std::move(out), {a}, "sigmoid", [](detail::Node& self) {
    const Matrix& y = self.value;
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(y - y.cwiseProduct(y)));
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  const Index cols = x.cols();
  if (gain.rows() != 1 || gain.cols() != cols) shape_error("layer_norm", x, gain);
  if (shift.rows() != 1 || shift.cols() != cols) shape_error("layer_norm", x, shift);
  const Eigen::VectorXd mean = x.value().rowwise().mean();
  Matrix centered = x.value().colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  const Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               shift.value().row(0).array();
  return make_result(
      std::move(out), {x, gain, shift}, "layer_norm",
      [xhat = std::move(xhat), inv_std](detail::Node& self) {
        auto& px = parent(self, 0);
        auto& pg = parent(self, 1);
        auto& pb = parent(self, 2);
        if (pg.requires_grad) pg.accumulate_expr(self.grad.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) pb.accumulate_expr(self.grad.colwise().sum());
        if (px.requires_grad) {
          const Matrix g = self.grad.array().rowwise() * pg.value.row(0).array();
          const Eigen::VectorXd g_mean = g.rowwise().mean();
          const Eigen::VectorXd gx_mean = g.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = (g.colwise() - g_mean) - (xhat.array().colwise() * gx_mean.array()).matrix();
          dx = dx.array().colwise() * inv_std.array();
          px.accumulate_expr(dx);
        }
      });
}

Tensor dropout(const Tensor& a, double p, std::uint64_t seed, bool training) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;
  CounterRng rng(seed, 0xD0);
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() >= p ? keep_scale : 0.0;
  }
  Matrix out = a.value().cwiseProduct(mask);
  return make_result(std::move(out), {a}, "dropout", [mask = std::move(mask)](detail::Node& self) {
    parent(self, 0).accumulate_expr(self.grad.cwiseProduct(mask));
  });
}

Tensor mix(const Tensor& weights, const SharedMatrices& basis) {
  const auto& mats = *basis;
  if (weights.rows() != 1 || weights.cols() != static_cast<Index>(mats.size())) {
    throw std::invalid_argument("mix: weights " + shape_string(weights) + " for " +
                                std::to_string(mats.size()) + " basis matrices");
  }
  if (mats.empty()) throw std::invalid_argument("mix: empty basis");
  Matrix out = Matrix::Zero(mats[0].rows(), mats[0].cols());
  for (std::size_t m = 0; m < mats.size(); ++m) {
    if (mats[m].rows() != out.rows() || mats[m].cols() != out.cols()) {
      throw std::invalid_argument("mix: basis matrices differ in shape");
    }
    out += weights.value()(0, static_cast<Index>(m)) * mats[m];
  }
  return make_result(std::move(out), {weights}, "mix", [basis](detail::Node& self) {
    const auto& mats = *basis;
    Matrix g(1, static_cast<Index>(mats.size()));
    for (std::size_t m = 0; m < mats.size(); ++m) {
      g(0, static_cast<Index>(m)) = self.grad.cwiseProduct(mats[m]).sum();
    }
    parent(self, 0).accumulate_expr(g);
  });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return make_result(std::move(out), {a}, "sum", [](detail::Node& self) {
    auto& p = parent(self, 0);
    p.accumulate_expr(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor biased_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mix,
                        std::span<const SharedMatrices> bases, Index seq_len, int heads,
                        std::vector<Matrix>* probabilities) {
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols() ||
      q.cols() != v.cols()) {
    throw std::invalid_argument("biased_attention: q " + shape_string(q) + ", k " +
                                shape_string(k) + ", v " + shape_string(v) + " differ");
  }
  const auto batch = static_cast<Index>(bases.size());
  if (heads < 1 || q.cols() % heads != 0 || seq_len < 1 || q.rows() != batch * seq_len) {
    throw std::invalid_argument("biased_attention: " + shape_string(q) + " is not " +
                                std::to_string(batch) + " sequences of length " +
                                std::to_string(seq_len) + " split over " + std::to_string(heads) +
                                " heads");
  }
  if (mix.rows() != heads) {
    throw std::invalid_argument("biased_attention: mixing weights " + shape_string(mix) +
                                " for " + std::to_string(heads) + " heads");
  }
  const Index num_bases = mix.cols();
  for (const auto& b : bases) {
    if (static_cast<Index>(b->size()) != num_bases) {
      throw std::invalid_argument("biased_attention: basis count differs from mixing width");
    }
    for (const auto& m : *b) {
      if (m.rows() != seq_len || m.cols() != seq_len) {
        throw std::invalid_argument("biased_attention: basis matrix is not seq_len square");
      }
    }
  }

  const Index dk = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Matrix& w = mix.value();
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch * heads));
  Matrix out(q.rows(), q.cols());
  Matrix logits(seq_len, seq_len);
  for (Index b = 0; b < batch; ++b) {
    const auto& basis = *bases[static_cast<std::size_t>(b)];
    const Index r0 = b * seq_len;
    for (int h = 0; h < heads; ++h) {
      const Index c0 = h * dk;
      logits.noalias() = scale * q.value().block(r0, c0, seq_len, dk).lazyProduct(
                                     k.value().block(r0, c0, seq_len, dk).transpose());
      for (Index m = 0; m < num_bases; ++m) logits += w(h, m) * basis[static_cast<std::size_t>(m)];
      Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
      p.resize(seq_len, seq_len);
      for (Index r = 0; r < seq_len; ++r) {
        const double mx = logits.row(r).maxCoeff();
        p.row(r) = (logits.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
      }
      out.block(r0, c0, seq_len, dk).noalias() =
          p.lazyProduct(v.value().block(r0, c0, seq_len, dk));
    }
  }
  if (probabilities) probabilities->insert(probabilities->end(), probs->begin(), probs->end());

  std::vector<SharedMatrices> kept(bases.begin(), bases.end());
  return make_result(
      std::move(out), {q, k, v, mix}, "biased_attention",
      [probs, kept = std::move(kept), seq_len, heads, dk, scale](detail::Node& self) {
        auto& pq = parent(self, 0);
        auto& pk = parent(self, 1);
        auto& pv = parent(self, 2);
        auto& pw = parent(self, 3);
        Matrix dq = Matrix::Zero(pq.value.rows(), pq.value.cols());
        Matrix dk_all = Matrix::Zero(pk.value.rows(), pk.value.cols());
        Matrix dv = Matrix::Zero(pv.value.rows(), pv.value.cols());
        Matrix dw = Matrix::Zero(pw.value.rows(), pw.value.cols());
        Matrix dp(seq_len, seq_len);
        Matrix ds(seq_len, seq_len);
        for (std::size_t b = 0; b < kept.size(); ++b) {
          const auto& basis = *kept[b];
          const Index r0 = static_cast<Index>(b) * seq_len;
          for (int h = 0; h < heads; ++h) {
            const Index c0 = h * dk;
            const Matrix& p = (*probs)[b * static_cast<std::size_t>(heads) + h];
            const auto go = self.grad.block(r0, c0, seq_len, dk);
            dv.block(r0, c0, seq_len, dk).noalias() += p.transpose().lazyProduct(go);
            dp.noalias() = go.lazyProduct(pv.value.block(r0, c0, seq_len, dk).transpose());
            const Eigen::VectorXd dots = (dp.array() * p.array()).rowwise().sum();
            ds = p.array() * (dp.colwise() - dots).array();
            for (std::size_t m = 0; m < basis.size(); ++m) {
              dw(h, static_cast<Index>(m)) += (ds.array() * basis[m].array()).sum();
            }
            ds *= scale;
            dq.block(r0, c0, seq_len, dk).noalias() +=
                ds.lazyProduct(pk.value.block(r0, c0, seq_len, dk));
            dk_all.block(r0, c0, seq_len, dk).noalias() +=
                ds.transpose().lazyProduct(pq.value.block(r0, c0, seq_len, dk));
          }
        }
        if (pq.requires_grad) pq.accumulate_expr(dq);
        if (pk.requires_grad) pk.accumulate_expr(dk_all);
        if (pv.requires_grad) pv.accumulate_expr(dv);
        if (pw.requires_grad) pw.accumulate_expr(dw);
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_string(logits));
  }
  const Index rows = logits.rows();
  Matrix probs(rows, logits.cols());
  double loss = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    const double m = logits.value().row(r).maxCoeff();
    probs.row(r) = (logits.value().row(r).array() - m).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    loss += std::log(z) + m - logits.value()(r, y);
  }
  const double inv = rows > 0 ? 1.0 / static_cast<double>(rows) : 0.0;
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result(
      Matrix::Constant(1, 1, loss * inv), {logits}, "cross_entropy",
      [probs = std::move(probs), ys = std::move(ys), inv](detail::Node& self) {
        Matrix g = probs;
        for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Index>(r), ys[r]) -= 1.0;
        parent(self, 0).accumulate_expr(g * (inv * self.grad(0, 0)));
      });
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_string(loss));
  }
  if (!loss.requires_grad()) return;
  if (loss.node_->is_leaf) {
    loss.node_->accumulate(Matrix::Ones(1, 1));
    return;
  }

  // Iterative post-order DFS for a reverse topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (detail::Node* node : order) node->grad.resize(0, 0);
  loss.node_->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
  // Release interior buffers; the graph may be traversed again.
  for (detail::Node* node : order) {
    if (node != loss.node_.get()) node->grad.resize(0, 0);
  }
}

}  // namespace signnet::ad
