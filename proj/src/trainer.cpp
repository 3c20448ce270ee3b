#include "signnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "signnet/errors.hpp"
#include "signnet/optim.hpp"
#include "signnet/rng.hpp"

namespace signnet {

using ad::Matrix;
using ad::Tensor;

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

NodeMask SplitMasks::mask(Split s) const {
  NodeMask out(assignment.size(), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[i] = assignment[i] == s;
  return out;
}

std::vector<NodeId> SplitMasks::nodes(Split s) const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == s) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

std::size_t SplitMasks::count(Split s) const {
  return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), s));
}

namespace {

void shuffle(std::vector<NodeId>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Integer quotas summing to `total`, proportional to `sizes`, capped by `caps`.
std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& sizes,
                                           const std::vector<std::size_t>& caps,
                                           std::size_t total, std::size_t n) {
  std::vector<std::size_t> quota(sizes.size());
  std::vector<double> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double ideal = static_cast<double>(sizes[k]) * static_cast<double>(total) /
                         static_cast<double>(n);
    quota[k] = std::min(static_cast<std::size_t>(std::floor(ideal)), caps[k]);
    remainder[k] = ideal - static_cast<double>(quota[k]);
    assigned += quota[k];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < total) {
    bool progressed = false;
    for (std::size_t k : order) {
      if (assigned == total) break;
      if (quota[k] < caps[k]) {
        ++quota[k];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return quota;
}

}  // namespace

SplitMasks make_splits(const Graph& g, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be nonnegative and sum to 1");
  }
  const auto n = static_cast<std::size_t>(g.num_nodes());
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n))));

  SplitMasks out;
  out.assignment.assign(n, Split::kTest);
  CounterRng rng = make_rng(seed, RngStream::kSplit);

  const int u = g.num_classes();
  std::vector<std::vector<NodeId>> by_class(u);
  for (NodeId v = 0; v < g.num_nodes(); ++v) by_class[g.labels()[v]].push_back(v);
  const bool small_class = std::any_of(by_class.begin(), by_class.end(), [](const auto& c) {
    return !c.empty() && c.size() < 3;
  });

  if (small_class) {
    out.stratified = false;
    out.warning = "a class has fewer than 3 nodes; splitting without stratification";
    std::vector<NodeId> all(n);
    std::iota(all.begin(), all.end(), 0);
    shuffle(all, rng);
    for (std::size_t i = 0; i < n_train; ++i) out.assignment[all[i]] = Split::kTrain;
    for (std::size_t i = n_train; i < n_train + n_val; ++i) out.assignment[all[i]] = Split::kVal;
    return out;
  }

  std::vector<std::size_t> sizes(u);
  for (int k = 0; k < u; ++k) sizes[k] = by_class[k].size();
  const auto train_quota = largest_remainder(sizes, sizes, n_train, n);
  std::vector<std::size_t> left(u);
  for (int k = 0; k < u; ++k) left[k] = sizes[k] - train_quota[k];
  const auto val_quota = largest_remainder(sizes, left, n_val, n);

  for (int k = 0; k < u; ++k) {
    auto& nodes = by_class[k];
    shuffle(nodes, rng);
    for (std::size_t i = 0; i < train_quota[k]; ++i) out.assignment[nodes[i]] = Split::kTrain;
    for (std::size_t i = train_quota[k]; i < train_quota[k] + val_quota[k]; ++i) {
      out.assignment[nodes[i]] = Split::kVal;
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(gcn.lr > 0) || gcn.weight_decay < 0 || gcn.hidden <= 0 || gcn.epochs < 0 ||
      gcn.layers < 1 || !(gcn.dropout >= 0 && gcn.dropout < 1)) {
    throw ValidationError("gcn: lr must be positive, hidden and layers at least 1, epochs "
                          "nonnegative, dropout in [0, 1)");
  }
  if (!(transformer.lr_start > 0) || !(transformer.lr_end > 0) || transformer.weight_decay < 0 ||
      transformer.batch < 1 || transformer.epochs < 1 || transformer.patience < 0) {
    throw ValidationError("transformer: rates must be positive, batch and epochs at least 1, "
                          "patience nonnegative");
  }
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return ad::cross_entropy(logits, labels);
}

// ---------------------------------------------------------------------------

GcnResult train_gcn_stage(const Graph& g, const CompatibilityMatrix& comp,
                          const SplitMasks& masks, const GcnConfig& config, std::uint64_t seed) {
  const auto d = g.feature_dim();
  const int u = g.num_classes();
  CounterRng init = make_rng(seed, RngStream::kGcnInit);
  auto glorot = [&init](Eigen::Index fan_in, Eigen::Index fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * init.uniform() - 1.0) * bound;
    return Tensor::parameter(std::move(w));
  };

  std::vector<Tensor> weights;
  for (int l = 0; l < config.layers; ++l) {
    const Eigen::Index in = l == 0 ? d : config.hidden;
    const Eigen::Index out = l + 1 == config.layers ? d : config.hidden;
    weights.push_back(glorot(in, out));
  }
  const Tensor head_w = glorot(d, u);
  const Tensor head_b = Tensor::parameter(Matrix::Zero(1, u));

  std::vector<Tensor> params = weights;
  params.push_back(head_w);
  params.push_back(head_b);
  AdamOptions options;
  options.lr = config.lr;
  options.weight_decay = config.weight_decay;
  options.decoupled = false;
  Adam opt(params, options);

  const auto norm = std::make_shared<const ad::SparseMatrix>(comp.normalized_with_self());
  const Tensor x = Tensor::constant(Matrix(g.features()));
  const auto train_nodes = masks.nodes(Split::kTrain);
  const std::vector<std::int64_t> rows(train_nodes.begin(), train_nodes.end());
  std::vector<int> labels;
  for (NodeId v : train_nodes) labels.push_back(g.labels()[v]);

  GcnResult result;
  for (int epoch = 0; epoch < config.epochs && !rows.empty(); ++epoch) {
    CounterRng dropout_rng = make_rng(seed, RngStream::kGcnDropout, epoch);
    Tensor h = x;
    for (const auto& w : weights) {
      h = ad::dropout(h, config.dropout, dropout_rng(), true);
      h = ad::sigmoid(ad::spmm(norm, ad::matmul(h, w)));
    }
    const Tensor logits = ad::add(ad::matmul(ad::gather_rows(h, rows), head_w), head_b);
    const Tensor loss = ad::cross_entropy(logits, labels);
    if (!std::isfinite(loss.item())) {
      throw RuntimeFailure("gcn: non-finite loss at epoch " + std::to_string(epoch) +
                           " (last finite loss " + std::to_string(result.final_loss) + ")");
    }
    result.final_loss = loss.item();
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }

  for (const auto& w : weights) result.params.weights.emplace_back(w.value());
  result.p = gcn_amplify(g, comp, result.params, config.layers);

  if (!rows.empty()) {
    const Matrix logits = (Matrix(result.p(rows, Eigen::all)) * head_w.value()).rowwise() +
                          Eigen::RowVectorXd(head_b.value().row(0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      correct += argmax(logits.row(static_cast<Eigen::Index>(i))) == labels[i];
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 64;  // nodes per eval forward pass

void check_data(const TransformerData& data) {
  if (!data.graph || !data.sequences || !data.encoding || !data.features.defined()) {
    throw std::invalid_argument("transformer data is incomplete");
  }
  if (static_cast<NodeId>(data.sequences->size()) != data.graph->num_nodes()) {
    throw ValidationError("sequences cover " + std::to_string(data.sequences->size()) +
                          " nodes, graph has " + std::to_string(data.graph->num_nodes()));
  }
}

}  // namespace

std::vector<EnsemblePrediction> predict_nodes(const TransformerData& data,
                                              const ModelParams& params,
                                              const ModelConfig& model_config,
                                              std::span<const NodeId> nodes) {
  check_data(data);
  ad::NoGradGuard no_grad;
  std::vector<EnsemblePrediction> out;
  out.reserve(nodes.size());
  for (std::size_t start = 0; start < nodes.size(); start += kEvalChunk) {
    const std::size_t end = std::min(nodes.size(), start + kEvalChunk);
    std::vector<const SubgraphSequence*> batch;
    std::vector<std::size_t> counts;
    for (std::size_t i = start; i < end; ++i) {
      const auto& seqs = (*data.sequences)[nodes[i]];
      if (seqs.empty()) throw ValidationError("node " + std::to_string(nodes[i]) + " has no sequences");
      for (const auto& s : seqs) batch.push_back(&s);
      counts.push_back(seqs.size());
    }
    const Tensor logits = forward_batch(batch, data.features, params, *data.encoding, model_config,
                                        Mode::kEval)
                              .logits;
    Eigen::Index row = 0;
    for (std::size_t count : counts) {
      EnsemblePrediction pred;
      pred.probabilities = Eigen::RowVectorXd::Zero(logits.cols());
      for (std::size_t m = 0; m < count; ++m) pred.probabilities += softmax_row(logits.value().row(row++));
      pred.probabilities /= static_cast<double>(count);
      pred.label = argmax(pred.probabilities);
      out.push_back(std::move(pred));
    }
  }
  return out;
}

double evaluate(const TransformerData& data, const ModelParams& params,
                const ModelConfig& model_config, const SplitMasks& masks, Split split) {
  const auto nodes = masks.nodes(split);
  if (nodes.empty()) return 0.0;
  const auto preds = predict_nodes(data, params, model_config, nodes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    correct += preds[i].label == data.graph->labels()[nodes[i]];
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

Eigen::MatrixXd node_embeddings(const TransformerData& data, const ModelParams& params,
                                const ModelConfig& model_config) {
  check_data(data);
  ad::NoGradGuard no_grad;
  const NodeId n = data.graph->num_nodes();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, model_config.hidden);
  for (NodeId start = 0; start < n; start += static_cast<NodeId>(kEvalChunk)) {
    const NodeId end = std::min<NodeId>(n, start + static_cast<NodeId>(kEvalChunk));
    std::vector<const SubgraphSequence*> batch;
    for (NodeId v = start; v < end; ++v) {
      for (const auto& s : (*data.sequences)[v]) batch.push_back(&s);
    }
    const Tensor readout = forward_batch(batch, data.features, params, *data.encoding,
                                         model_config, Mode::kEval)
                               .readout;
    Eigen::Index row = 0;
    for (NodeId v = start; v < end; ++v) {
      const auto count = static_cast<Eigen::Index>((*data.sequences)[v].size());
      out.row(v) = readout.value().middleRows(row, count).colwise().mean();
      row += count;
    }
  }
  return out;
}

TransformerResult train_transformer_stage(const TransformerData& data, const SplitMasks& masks,
                                          const ModelConfig& model_config,
                                          const TransformerConfig& config, std::uint64_t seed,
                                          const EpochCallback& on_epoch) {
  check_data(data);
  model_config.validate();
  const Graph& g = *data.graph;

  // Each (train node, sequence index) pair is one instance.
  std::vector<const SubgraphSequence*> instances;
  for (NodeId v : masks.nodes(Split::kTrain)) {
    for (const auto& s : (*data.sequences)[v]) instances.push_back(&s);
  }
  if (instances.empty()) throw ValidationError("no training sequences");

  ModelParams params = init_params(model_config, data.features.cols(), g.num_classes(), seed);
  AdamOptions options;
  options.lr = config.lr_start;
  options.weight_decay = config.weight_decay;
  options.decoupled = true;
  Adam opt(params.all(), options);

  const auto batch = static_cast<std::size_t>(config.batch);
  const std::size_t steps_per_epoch = (instances.size() + batch - 1) / batch;
  const auto total_steps = static_cast<std::int64_t>(steps_per_epoch) * config.epochs;

  TransformerResult result;
  result.params = params.clone();
  std::vector<std::size_t> order(instances.size());
  std::vector<const SubgraphSequence*> batch_seqs;
  std::vector<int> batch_labels;
  double last_finite = 0.0;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle_rng = make_rng(seed, RngStream::kShuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      batch_seqs.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_seqs.push_back(instances[order[i]]);
        batch_labels.push_back(g.labels()[instances[order[i]]->target]);
      }
      opt.set_lr(lr_schedule(step, total_steps, config.lr_start, config.lr_end));
      const std::uint64_t dropout_seed =
          make_rng(seed, RngStream::kDropout, static_cast<std::uint64_t>(step))();
      const Tensor logits = forward_batch(batch_seqs, data.features, params, *data.encoding,
                                          model_config, Mode::kTrain, dropout_seed)
                                .logits;
      const Tensor loss = ad::cross_entropy(logits, batch_labels);
      if (!std::isfinite(loss.item())) {
        throw RuntimeFailure("transformer: non-finite loss at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step) + " (last finite loss " +
                             std::to_string(last_finite) + ")");
      }
      last_finite = loss.item();
      loss_sum += loss.item() * static_cast<double>(end - start);
      for (std::size_t i = 0; i < batch_labels.size(); ++i) {
        correct += argmax(logits.value().row(static_cast<Eigen::Index>(i))) == batch_labels[i];
      }
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
      ++step;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    record.val_acc = evaluate(data, params, model_config, masks, Split::kVal);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (result.best_epoch < 0 || record.val_acc > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = record.val_acc;
      result.params = params.clone();
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }
  return result;
}

}  // namespace signnet
