#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "signnet/errors.hpp"
#include "signnet/model.hpp"
#include "reference.hpp"
#include "test_support.hpp"

using namespace signnet;
using signnet::testing::path3;
using signnet::testing::random_graph;
using signnet::testing::random_matrix;
using signnet::testing::vanilla_attention;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_hidden = 16;
  c.num_encodings = 3;
  c.dropout = 0.1;
  c.k1 = 4;
  c.q = 3;
  return c;
}

void randomize(ModelParams& p, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  for (auto& t : p.all()) t.mutable_value() = random_matrix(t.rows(), t.cols(), rng, scale);
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ModelConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(StructuralEncoding, Components) {
  const StructuralEncoding enc(path3(), 3);
  EXPECT_EQ(enc.alpha(0, 1, 1), 1.0);
  EXPECT_EQ(enc.alpha(0, 1, 0), 0.0);
  EXPECT_NEAR(enc.alpha(1, 1, 0), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(enc.alpha(2, 1, 0), 0.0);

  const StructuralEncoding deep(path3(), 4);
  // Ã² entry (0, 2) = ½ · ⅓.
  EXPECT_NEAR(deep.alpha(2, 0, 2), 1.0 / 6.0, 1e-15);
}

TEST(StructuralBias, SelectOrderZeroGivesIdentity) {
  const Graph g = random_graph(20, 0.2, 1);
  const StructuralEncoding enc(g, 4);
  const std::vector<NodeId> seq{5, 3, 17, 0, 9};
  ad::Matrix w = ad::Matrix::Zero(1, 4);
  w(0, 0) = 1.0;
  EXPECT_EQ(structural_bias(enc, seq, w), ad::Matrix::Identity(5, 5));
  EXPECT_EQ(structural_bias(enc, seq, ad::Matrix::Zero(1, 4)), ad::Matrix::Zero(5, 5));
}

TEST(StructuralBias, PathExample) {
  const StructuralEncoding enc(path3(), 3);
  const std::vector<NodeId> seq{1, 0, 2};
  const ad::Matrix w{{0.0, 1.0, 0.0}};
  EXPECT_NEAR(structural_bias(enc, seq, w)(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(SaMha, ZeroMixMatchesVanillaReference) {
  const ModelConfig config = small_config();
  ModelParams p = init_params(config, 6, 2, 3);
  randomize(p, 4);
  p.structure_mix.mutable_value().setZero();
  std::mt19937_64 rng(9);
  const ad::Tensor h = ad::Tensor::constant(random_matrix(5, 8, rng));
  const Graph g = random_graph(10, 0.3, 2);
  const StructuralEncoding enc(g, 3);
  const std::vector<NodeId> seq{0, 4, 2, 7, 9};
  const std::vector<ad::SharedMatrices> bases{enc.basis(seq)};
  DropoutSeeds seeds(1);
  const ad::Tensor out = sa_mha(h, p.layers[0], p.structure_mix, bases, 5, config, Mode::kEval, seeds);
  const ad::Matrix expected = vanilla_attention(h.value(), p.layers[0], config.heads);
  EXPECT_LT((out.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SaMha, SingleTokenIsValueProjection) {
  const ModelConfig config = small_config();
  ModelParams p = init_params(config, 6, 2, 3);
  randomize(p, 5);
  std::mt19937_64 rng(1);
  const ad::Tensor h = ad::Tensor::constant(random_matrix(1, 8, rng));
  const StructuralEncoding enc(path3(), 3);
  const std::vector<NodeId> seq{1};
  const std::vector<ad::SharedMatrices> bases{enc.basis(seq)};
  DropoutSeeds seeds(1);
  const LayerParams& l = p.layers[0];
  const ad::Tensor out = sa_mha(h, l, p.structure_mix, bases, 1, config, Mode::kEval, seeds);
  const ad::Matrix expected = h.value() * l.w_v.value() * l.w_o.value() + l.b_o.value();
  EXPECT_LT((out.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SaMha, AttentionRowsSumToOne) {
  const ModelConfig config = small_config();
  ModelParams p = init_params(config, 6, 2, 3);
  randomize(p, 6, 2.0);
  std::mt19937_64 rng(2);
  const ad::Tensor h = ad::Tensor::constant(random_matrix(10, 8, rng));
  const Graph g = random_graph(12, 0.3, 3);
  const StructuralEncoding enc(g, 3);
  const std::vector<NodeId> s1{0, 1, 2, 3, 4}, s2{5, 6, 7, 8, 9};
  const std::vector<ad::SharedMatrices> bases{enc.basis(s1), enc.basis(s2)};
  DropoutSeeds seeds(1);
  AttentionTrace trace;
  sa_mha(h, p.layers[0], p.structure_mix, bases, 5, config, Mode::kEval, seeds, &trace);
  ASSERT_EQ(trace.attention.size(), 4u);
  for (const auto& a : trace.attention) {
    EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
  }
}

TEST(TransformerBlock, ZeroWeightsReduceToLayerNorm) {
  const ModelConfig config = small_config();
  ModelParams p = init_params(config, 6, 2, 3);
  LayerParams& l = p.layers[0];
  for (ad::Tensor t : {l.w_q, l.w_k, l.w_v, l.w_o, l.b_o, l.w_1, l.b_1, l.w_2, l.b_2}) {
    t.mutable_value().setZero();
  }
  std::mt19937_64 rng(3);
  const ad::Matrix x = random_matrix(4, 8, rng);
  const StructuralEncoding enc(random_graph(6, 0.5, 1), 3);
  const std::vector<NodeId> seq{0, 1, 2, 3};
  const std::vector<ad::SharedMatrices> bases{enc.basis(seq)};
  DropoutSeeds seeds(1);
  const ad::Tensor out = transformer_block(ad::Tensor::constant(x), l, p.structure_mix, bases, 4,
                                           config, Mode::kEval, seeds);
  ASSERT_EQ(out.rows(), 4);
  ASSERT_EQ(out.cols(), 8);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const Eigen::RowVectorXd c = x.row(i).array() - x.row(i).mean();
    const Eigen::RowVectorXd expected = c / std::sqrt(c.squaredNorm() / 8.0 + 1e-5);
    EXPECT_LT((out.value().row(i) - expected).cwiseAbs().maxCoeff(), 1e-4);
  }
}

class ForwardFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    g = random_graph(15, 0.25, 7, 6, 3);
    enc = StructuralEncoding(g, config.num_encodings);
    std::mt19937_64 rng(4);
    features = ad::Tensor::constant(random_matrix(15, 6, rng));
    params = init_params(config, 6, 3, 11);
    randomize(params, 12);
  }
  ModelConfig config = small_config();
  Graph g;
  StructuralEncoding enc;
  ad::Tensor features;
  ModelParams params;
};

TEST_F(ForwardFixture, LogitShape) {
  const SubgraphSequence seq{3, {3, 1, 4, 5, 9}};
  const ad::Tensor logits = forward(seq, features, params, enc, config, Mode::kEval);
  EXPECT_EQ(logits.rows(), 1);
  EXPECT_EQ(logits.cols(), 3);
}

TEST_F(ForwardFixture, ContextPermutationInvariance) {
  const SubgraphSequence seq{3, {3, 1, 4, 5, 9}};
  const ad::Matrix base = forward(seq, features, params, enc, config, Mode::kEval).value();
  std::vector<NodeId> rest{1, 4, 5, 9};
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(rest.begin(), rest.end(), rng);
    SubgraphSequence permuted{3, {3}};
    permuted.nodes.insert(permuted.nodes.end(), rest.begin(), rest.end());
    const ad::Matrix out = forward(permuted, features, params, enc, config, Mode::kEval).value();
    EXPECT_LT((out - base).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST_F(ForwardFixture, ZeroMixIgnoresEdges) {
  params.structure_mix.mutable_value().setZero();
  const Graph rewired = g.with_edges(std::vector<Edge>{{0, 14}, {2, 3}});
  const StructuralEncoding other(rewired, config.num_encodings);
  const SubgraphSequence seq{0, {0, 14, 2, 3, 8}};
  const ad::Matrix a = forward(seq, features, params, enc, config, Mode::kEval).value();
  const ad::Matrix b = forward(seq, features, params, other, config, Mode::kEval).value();
  EXPECT_EQ(a, b);
}

TEST_F(ForwardFixture, BatchMatchesSingle) {
  const SubgraphSequence s1{3, {3, 1, 4, 5, 9}}, s2{7, {7, 0, 2, 12, 14}};
  const SubgraphSequence* seqs[] = {&s1, &s2};
  const BatchOutput out = forward_batch(seqs, features, params, enc, config, Mode::kEval);
  const ad::Matrix a = forward(s1, features, params, enc, config, Mode::kEval).value();
  const ad::Matrix b = forward(s2, features, params, enc, config, Mode::kEval).value();
  EXPECT_LT((out.logits.value().row(0) - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.logits.value().row(1) - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(ForwardFixture, UnknownIdThrows) {
  const SubgraphSequence seq{3, {3, 99, 4, 5, 9}};
  EXPECT_THROW(forward(seq, features, params, enc, config, Mode::kEval), std::invalid_argument);
}

TEST_F(ForwardFixture, EnsembleAveraging) {
  const SubgraphSequence seq{3, {3, 1, 4, 5, 9}};
  const std::vector<SubgraphSequence> one{seq}, copies{seq, seq, seq};
  const EnsemblePrediction single = ensemble_predict(one, features, params, enc, config);
  const EnsemblePrediction many = ensemble_predict(copies, features, params, enc, config);
  const Eigen::RowVectorXd direct =
      softmax_row(forward(seq, features, params, enc, config, Mode::kEval).value());
  EXPECT_LT((single.probabilities - direct).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((many.probabilities - single.probabilities).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(single.label, argmax(direct));

  const std::vector<SubgraphSequence> mixed{seq, {8, {8, 1, 2, 3, 4}}};
  EXPECT_NEAR(ensemble_predict(mixed, features, params, enc, config).probabilities.sum(), 1.0,
              1e-9);
}

TEST_F(ForwardFixture, SingleClassIsCertain) {
  ModelParams one = init_params(config, 6, 1, 3);
  randomize(one, 5);
  const std::vector<SubgraphSequence> seqs{{3, {3, 1, 4, 5, 9}}};
  const EnsemblePrediction p = ensemble_predict(seqs, features, one, enc, config);
  EXPECT_EQ(p.probabilities.size(), 1);
  EXPECT_DOUBLE_EQ(p.probabilities[0], 1.0);
}

TEST_F(ForwardFixture, TrainModeDropoutIsSeeded) {
  const SubgraphSequence seq{3, {3, 1, 4, 5, 9}};
  const ad::Matrix a = forward(seq, features, params, enc, config, Mode::kTrain, 5).value();
  const ad::Matrix b = forward(seq, features, params, enc, config, Mode::kTrain, 5).value();
  const ad::Matrix c = forward(seq, features, params, enc, config, Mode::kTrain, 6).value();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(ForwardFixture, CheckpointRoundTrip) {
  const auto dir = signnet::testing::scratch_dir("checkpoint");
  save_checkpoint(dir / "ckpt.json", config, params);
  const auto [loaded_config, loaded] = load_checkpoint(dir / "ckpt.json");
  EXPECT_EQ(loaded_config.hidden, config.hidden);
  EXPECT_EQ(loaded_config.num_encodings, config.num_encodings);
  const auto a = params.named();
  const auto b = loaded.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second.value(), b[i].second.value()) << a[i].first;
  }

  std::ofstream(dir / "bad.json") << R"({"format": "something else"})";
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), ValidationError);
}

TEST(InitParams, ShapesAndDeterminism) {
  const ModelConfig config = small_config();
  const ModelParams a = init_params(config, 6, 3, 1);
  const ModelParams b = init_params(config, 6, 3, 1);
  EXPECT_EQ(a.w_in.rows(), 6);
  EXPECT_EQ(a.w_out.cols(), 3);
  EXPECT_EQ(a.layers.size(), 2u);
  EXPECT_EQ(a.structure_mix.value(), ad::Matrix::Zero(2, 3));
  EXPECT_EQ(a.layers[1].w_q.value(), b.layers[1].w_q.value());
}
