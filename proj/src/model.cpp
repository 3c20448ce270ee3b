#include "signnet/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "signnet/errors.hpp"

namespace signnet {

using ad::Matrix;
using ad::Tensor;

void ModelConfig::validate() const {
  if (hidden <= 0 || layers <= 0 || heads <= 0 || num_encodings <= 0 || ffn_hidden <= 0) {
    throw ValidationError("model: hidden, layers, heads, M and ffn_hidden must be positive");
  }
  if (hidden % heads != 0) {
    throw ValidationError("model: heads (" + std::to_string(heads) +
                          ") must divide hidden width (" + std::to_string(hidden) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must be in [0, 1)");
  if (k1 < 0) throw ValidationError("model: k1 must be nonnegative");
  if (q < 1) throw ValidationError("model: q must be at least 1");
}

StructuralEncoding::StructuralEncoding(const Graph& g, int num_encodings)
    : num_encodings_(num_encodings), num_nodes_(g.num_nodes()) {
  if (num_encodings < 1) throw ValidationError("structural encoding: M must be at least 1");
  const auto base = rw_norm_adjacency<double>(g);
  Eigen::SparseMatrix<double, Eigen::RowMajor> power = base;
  for (int m = 1; m < num_encodings - 1; ++m) {
    if (m > 1) power = (power * base).pruned();
    powers_.push_back(power);
  }
}

double StructuralEncoding::alpha(int m, NodeId a, NodeId b) const {
  if (m == 0) return a == b ? 1.0 : 0.0;
  if (m >= num_encodings_ - 1) return 0.0;
  return powers_[m - 1].coeff(a, b);
}

ad::SharedMatrices StructuralEncoding::basis(std::span<const NodeId> seq) const {
  const auto t = static_cast<ad::Index>(seq.size());
  auto out = std::make_shared<std::vector<Matrix>>(num_encodings_, Matrix::Zero(t, t));
  for (ad::Index i = 0; i < t; ++i) {
    for (ad::Index j = 0; j < t; ++j) {
      const NodeId a = seq[i];
      const NodeId b = seq[j];
      (*out)[0](i, j) = a == b ? 1.0 : 0.0;
      for (int m = 1; m < num_encodings_ - 1; ++m) (*out)[m](i, j) = powers_[m - 1].coeff(a, b);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("w_in", w_in);
  out.emplace_back("b_in", b_in);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.emplace_back(prefix + "w_q", p.w_q);
    out.emplace_back(prefix + "w_k", p.w_k);
    out.emplace_back(prefix + "w_v", p.w_v);
    out.emplace_back(prefix + "w_o", p.w_o);
    out.emplace_back(prefix + "b_o", p.b_o);
    out.emplace_back(prefix + "ln1_gain", p.ln1_gain);
    out.emplace_back(prefix + "ln1_shift", p.ln1_shift);
    out.emplace_back(prefix + "w_1", p.w_1);
    out.emplace_back(prefix + "b_1", p.b_1);
    out.emplace_back(prefix + "w_2", p.w_2);
    out.emplace_back(prefix + "b_2", p.b_2);
    out.emplace_back(prefix + "ln2_gain", p.ln2_gain);
    out.emplace_back(prefix + "ln2_shift", p.ln2_shift);
  }
  out.emplace_back("structure_mix", structure_mix);
  out.emplace_back("w_out", w_out);
  out.emplace_back("b_out", b_out);
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ModelParams ModelParams::clone() const {
  auto copy = [](const Tensor& t) { return Tensor::parameter(t.value()); };
  ModelParams out;
  out.w_in = copy(w_in);
  out.b_in = copy(b_in);
  for (const auto& p : layers) {
    out.layers.push_back({copy(p.w_q), copy(p.w_k), copy(p.w_v), copy(p.w_o), copy(p.b_o),
                          copy(p.ln1_gain), copy(p.ln1_shift), copy(p.w_1), copy(p.b_1),
                          copy(p.w_2), copy(p.b_2), copy(p.ln2_gain), copy(p.ln2_shift)});
  }
  out.structure_mix = copy(structure_mix);
  out.w_out = copy(w_out);
  out.b_out = copy(b_out);
  return out;
}

ModelParams init_params(const ModelConfig& config, ad::Index input_dim, int num_classes,
                        std::uint64_t seed) {
  config.validate();
  CounterRng rng = make_rng(seed, RngStream::kModelInit);
  auto glorot = [&rng](ad::Index fan_in, ad::Index fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (ad::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return Tensor::parameter(std::move(w));
  };
  auto zeros = [](ad::Index r, ad::Index c) { return Tensor::parameter(Matrix::Zero(r, c)); };
  auto ones = [](ad::Index c) { return Tensor::parameter(Matrix::Ones(1, c)); };

  const ad::Index h = config.hidden;
  const ad::Index f = config.ffn_hidden;
  ModelParams p;
  p.w_in = glorot(input_dim, h);
  p.b_in = zeros(1, h);
  for (int l = 0; l < config.layers; ++l) {
    LayerParams layer;
    layer.w_q = glorot(h, h);
    layer.w_k = glorot(h, h);
    layer.w_v = glorot(h, h);
    layer.w_o = glorot(h, h);
    layer.b_o = zeros(1, h);
    layer.ln1_gain = ones(h);
    layer.ln1_shift = zeros(1, h);
    layer.w_1 = glorot(h, f);
    layer.b_1 = zeros(1, f);
    layer.w_2 = glorot(f, h);
    layer.b_2 = zeros(1, h);
    layer.ln2_gain = ones(h);
    layer.ln2_shift = zeros(1, h);
    p.layers.push_back(std::move(layer));
  }
  p.structure_mix = zeros(config.heads, config.num_encodings);
  p.w_out = glorot(h, num_classes);
  p.b_out = zeros(1, num_classes);
  return p;
}

// ---------------------------------------------------------------------------

Matrix structural_bias(const StructuralEncoding& enc, std::span<const NodeId> seq,
                       const Matrix& mix_row) {
  if (mix_row.rows() != 1 || mix_row.cols() != enc.num_encodings()) {
    throw std::invalid_argument("structural_bias: mixing row must be 1 x M");
  }
  const auto basis = enc.basis(seq);
  const auto t = static_cast<ad::Index>(seq.size());
  Matrix out = Matrix::Zero(t, t);
  for (int m = 0; m < enc.num_encodings(); ++m) out += mix_row(0, m) * (*basis)[m];
  return out;
}

Matrix structural_bias(const StructuralEncoding& enc, std::span<const NodeId> seq,
                       const ModelParams& params, int head) {
  return structural_bias(enc, seq, Matrix(params.structure_mix.value().row(head)));
}

namespace {

void check_block_input(const Tensor& h, std::size_t num_seqs, int seq_len,
                       const ModelConfig& config) {
  if (seq_len <= 0 || h.rows() % seq_len != 0 ||
      h.rows() / seq_len != static_cast<ad::Index>(num_seqs)) {
    throw std::invalid_argument("sa_mha: " + ad::shape_string(h) + " does not hold " +
                                std::to_string(num_seqs) + " sequences of length " +
                                std::to_string(seq_len));
  }
  if (h.cols() != config.hidden) {
    throw std::invalid_argument("sa_mha: input width " + std::to_string(h.cols()) +
                                " differs from hidden " + std::to_string(config.hidden));
  }
}

// Attention heads before the output projection (batch·seq_len × hidden).
Tensor attention_heads(const Tensor& h, const LayerParams& layer, const Tensor& structure_mix,
                       std::span<const ad::SharedMatrices> bases, int seq_len,
                       const ModelConfig& config, AttentionTrace* trace) {
  check_block_input(h, bases.size(), seq_len, config);
  const Tensor q = ad::matmul(h, layer.w_q);
  const Tensor k = ad::matmul(h, layer.w_k);
  const Tensor v = ad::matmul(h, layer.w_v);
  return ad::biased_attention(q, k, v, structure_mix, bases, seq_len, config.heads,
                              trace ? &trace->attention : nullptr);
}

Tensor project_heads(const Tensor& merged, const LayerParams& layer, const ModelConfig& config,
                     Mode mode, DropoutSeeds& seeds) {
  const Tensor out = ad::add(ad::matmul(merged, layer.w_o), layer.b_o);
  return ad::dropout(out, config.dropout, seeds.next(), mode == Mode::kTrain);
}

// One block; when `keep` is non-null only those rows are carried past the
// attention (every row still serves as key and value).
Tensor block(const Tensor& h, const LayerParams& layer, const Tensor& structure_mix,
             std::span<const ad::SharedMatrices> bases, int seq_len, const ModelConfig& config,
             Mode mode, DropoutSeeds& seeds, AttentionTrace* trace,
             const std::vector<std::int64_t>* keep) {
  const bool training = mode == Mode::kTrain;
  Tensor merged = attention_heads(h, layer, structure_mix, bases, seq_len, config, trace);
  Tensor residual = h;
  if (keep) {
    merged = ad::gather_rows(merged, *keep);
    residual = ad::gather_rows(h, *keep);
  }
  const Tensor attended = project_heads(merged, layer, config, mode, seeds);
  const Tensor h1 = ad::layer_norm(ad::add(residual, attended), layer.ln1_gain, layer.ln1_shift);

  Tensor ffn = ad::gelu(ad::add(ad::matmul(h1, layer.w_1), layer.b_1));
  ffn = ad::dropout(ffn, config.dropout, seeds.next(), training);
  ffn = ad::add(ad::matmul(ffn, layer.w_2), layer.b_2);
  ffn = ad::dropout(ffn, config.dropout, seeds.next(), training);
  return ad::layer_norm(ad::add(h1, ffn), layer.ln2_gain, layer.ln2_shift);
}

}  // namespace

Tensor sa_mha(const Tensor& h, const LayerParams& layer, const Tensor& structure_mix,
              std::span<const ad::SharedMatrices> bases, int seq_len, const ModelConfig& config,
              Mode mode, DropoutSeeds& seeds, AttentionTrace* trace) {
  const Tensor merged = attention_heads(h, layer, structure_mix, bases, seq_len, config, trace);
  return project_heads(merged, layer, config, mode, seeds);
}

Tensor transformer_block(const Tensor& h, const LayerParams& layer, const Tensor& structure_mix,
                         std::span<const ad::SharedMatrices> bases, int seq_len,
                         const ModelConfig& config, Mode mode, DropoutSeeds& seeds,
                         AttentionTrace* trace) {
  return block(h, layer, structure_mix, bases, seq_len, config, mode, seeds, trace, nullptr);
}

BatchOutput forward_batch(std::span<const SubgraphSequence* const> seqs, const Tensor& features,
                          const ModelParams& params, const StructuralEncoding& enc,
                          const ModelConfig& config, Mode mode, std::uint64_t dropout_seed,
                          AttentionTrace* trace) {
  if (seqs.empty()) throw std::invalid_argument("forward: empty batch");
  if (features.cols() != params.input_dim()) {
    throw std::invalid_argument("forward: features have " + std::to_string(features.cols()) +
                                " columns, model expects " + std::to_string(params.input_dim()));
  }
  const auto seq_len = static_cast<int>(seqs[0]->nodes.size());
  if (seq_len == 0) throw std::invalid_argument("forward: empty sequence");

  std::vector<std::int64_t> rows;
  rows.reserve(seqs.size() * seq_len);
  std::vector<ad::SharedMatrices> bases;
  bases.reserve(seqs.size());
  std::vector<std::int64_t> readout_rows;
  readout_rows.reserve(seqs.size());
  for (const SubgraphSequence* s : seqs) {
    if (static_cast<int>(s->nodes.size()) != seq_len) {
      throw std::invalid_argument("forward: sequences in a batch must share one length");
    }
    for (NodeId id : s->nodes) {
      if (id < 0 || id >= features.rows() || id >= enc.num_nodes()) {
        throw std::invalid_argument("forward: unknown node id " + std::to_string(id));
      }
    }
    readout_rows.push_back(static_cast<std::int64_t>(rows.size()));
    rows.insert(rows.end(), s->nodes.begin(), s->nodes.end());
    bases.push_back(enc.basis(s->nodes));
  }

  DropoutSeeds seeds(dropout_seed);
  const bool training = mode == Mode::kTrain;
  Tensor h = ad::add(ad::matmul(ad::gather_rows(features, rows), params.w_in), params.b_in);
  h = ad::dropout(h, config.dropout, seeds.next(), training);
  // Only the target tokens are read out, so the last block carries just those
  // rows past its attention.
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const bool last = l + 1 == params.layers.size();
    h = block(h, params.layers[l], params.structure_mix, bases, seq_len, config, mode, seeds,
              trace, last ? &readout_rows : nullptr);
  }
  BatchOutput out;
  out.readout = h;
  out.logits = ad::add(ad::matmul(out.readout, params.w_out), params.b_out);
  return out;
}

Tensor forward(const SubgraphSequence& seq, const Tensor& features, const ModelParams& params,
               const StructuralEncoding& enc, const ModelConfig& config, Mode mode,
               std::uint64_t dropout_seed) {
  const SubgraphSequence* one[] = {&seq};
  return forward_batch(one, features, params, enc, config, mode, dropout_seed).logits;
}

Eigen::RowVectorXd softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
  int best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = static_cast<int>(k);
  }
  return best;
}

EnsemblePrediction ensemble_predict(std::span<const SubgraphSequence> seqs,
                                    const Tensor& features, const ModelParams& params,
                                    const StructuralEncoding& enc, const ModelConfig& config) {
  if (seqs.empty()) throw std::invalid_argument("ensemble_predict: no sequences");
  ad::NoGradGuard no_grad;
  std::vector<const SubgraphSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  const Tensor logits = forward_batch(ptrs, features, params, enc, config, Mode::kEval).logits;
  EnsemblePrediction out;
  out.probabilities = Eigen::RowVectorXd::Zero(logits.cols());
  for (ad::Index r = 0; r < logits.rows(); ++r) out.probabilities += softmax_row(logits.value().row(r));
  out.probabilities /= static_cast<double>(logits.rows());
  out.label = argmax(out.probabilities);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},         {"layers", c.layers},
          {"heads", c.heads},           {"dropout", c.dropout},
          {"num_encodings", c.num_encodings}, {"ffn_hidden", c.ffn_hidden},
          {"k1", c.k1},                 {"q", c.q}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.num_encodings = j.at("num_encodings").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.k1 = j.at("k1").get<int>();
  c.q = j.at("q").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "signnet-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(config);
  j["input_dim"] = params.input_dim();
  j["num_classes"] = params.num_classes();
  auto& tensors = j["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : params.named()) {
    std::vector<double> data(t.value().data(), t.value().data() + t.value().size());
    tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"data", data}});
  }
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion) {
    throw ValidationError("checkpoint " + path.string() + ": unsupported or missing version");
  }
  const ModelConfig config = config_from_json(j.at("config"));
  ModelParams params = init_params(config, j.at("input_dim").get<ad::Index>(),
                                   j.at("num_classes").get<int>(), 0);
  const auto& tensors = j.at("tensors");
  auto named = params.named();
  if (tensors.size() != named.size()) {
    throw ValidationError("checkpoint " + path.string() + ": tensor count mismatch");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = tensors[i];
    auto& [name, t] = named[i];
    const auto shape = entry.at("shape").get<std::vector<ad::Index>>();
    if (entry.at("name").get<std::string>() != name || shape.size() != 2 ||
        shape[0] != t.rows() || shape[1] != t.cols()) {
      throw ValidationError("checkpoint " + path.string() + ": unexpected tensor " +
                            entry.at("name").get<std::string>());
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<ad::Index>(data.size()) != t.value().size()) {
      throw ValidationError("checkpoint " + path.string() + ": bad data length for " + name);
    }
    std::copy(data.begin(), data.end(), t.mutable_value().data());
  }
  return {config, std::move(params)};
}

}  // namespace signnet
