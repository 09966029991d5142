#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "pcuda/checkpoint.hpp"
#include "pcuda/model.hpp"
#include "pcuda/objectives.hpp"
#include "test_util.hpp"

namespace pcuda {
namespace {

using testing::max_gradient_error;
using testing::random_cloud;

EncoderConfig small_config(bool edge) {
  EncoderConfig c;
  c.hidden = {8, 12};
  c.feature_dim = 16;
  c.projection_dim = 8;
  c.edge_conv = edge;
  c.edge_k = 4;
  return c;
}

PointCloud permuted(const PointCloud& c, Rng& rng) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  return c.select(idx);
}

class Encoder : public ::testing::TestWithParam<bool> {};

TEST_P(Encoder, PermutationInvariant) {
  const ModelParams p = ModelParams::init(small_config(GetParam()), 3);
  Rng g(4);
  for (int t = 0; t < 5; ++t) {
    const PointCloud c = random_cloud(32, g);
    const Tensor ref = encode(p, CloudBatch::from(std::vector{c}));
    for (int k = 0; k < 3; ++k) {
      const Tensor f = encode(p, CloudBatch::from(std::vector{permuted(c, g)}));
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(f.values()[i], ref.values()[i], 1e-9);
    }
  }
}

TEST_P(Encoder, IdenticalCloudsGiveIdenticalRows) {
  const ModelParams p = ModelParams::init(small_config(GetParam()), 5);
  Rng g(6);
  const PointCloud c = random_cloud(20, g);
  const Tensor f = encode(p, CloudBatch::from(std::vector{c, c}));
  ASSERT_EQ(f.shape(), (Shape{2, 16}));
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(f.at(0, j), f.at(1, j));
}

TEST_P(Encoder, GradientMatchesFiniteDifferences) {
  const ModelParams p = ModelParams::init(small_config(GetParam()), 7);
  Rng g(8);
  const CloudBatch batch = CloudBatch::from(std::vector{random_cloud(12, g), random_cloud(12, g)});
  const Tensor probe = Tensor::constant({2, 16}, testing::random_values(32, g));
  auto loss = [&] { return sum(mul(encode(p, batch), probe)); };
  EXPECT_LT(max_gradient_error(loss, p.encoder_tensors()), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(EdgeConv, Encoder, ::testing::Bool());

TEST(Encoder, RejectsRaggedBatch) {
  Rng g(9);
  EXPECT_THROW(CloudBatch::from(std::vector{random_cloud(5, g), random_cloud(6, g)}), ShapeError);
  EncoderConfig c = small_config(true);
  c.edge_k = 8;
  const ModelParams p = ModelParams::init(c, 1);
  EXPECT_THROW(encode(p, CloudBatch::from(std::vector{random_cloud(8, g)})), ShapeError);
}

TEST(Projector, UnitRowsAndDeterministic) {
  const ModelParams p = ModelParams::init(small_config(false), 10);
  Rng g(11);
  const Tensor f = Tensor::constant({5, 16}, testing::random_values(80, g));
  const Tensor z = project(p, f);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 8; ++j) s += z.at(i, j) * z.at(i, j);
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-9);
  }
  const Tensor z2 = project(p, f);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z.values()[i], z2.values()[i]);
}

TEST(Projector, GradientMatchesFiniteDifferences) {
  const ModelParams p = ModelParams::init(small_config(false), 12);
  Rng g(13);
  const Tensor f = Tensor::constant({3, 16}, testing::random_values(48, g));
  const Tensor probe = Tensor::constant({3, 8}, testing::random_values(24, g));
  auto loss = [&] { return sum(mul(project(p, f), probe)); };
  EXPECT_LT(max_gradient_error(loss, {p.projector_hidden().weight, p.projector_hidden().bias,
                                      p.projector_out().weight, p.projector_out().bias}),
            1e-4);
}

TEST(Heads, ZeroWeightsGiveUniformRows) {
  const ModelParams p = ModelParams::init(small_config(false), 14);
  ModelParams z = ModelParams::from_values(p.config(), [&] {
    std::vector<std::vector<double>> v;
    for (auto& [name, t] : p.named()) {
      const bool head = name.rfind("semantic", 0) == 0 || name.rfind("translation", 0) == 0;
      v.emplace_back(head ? std::vector<double>(t.size(), 0.0)
                          : std::vector<double>(t.values().begin(), t.values().end()));
    }
    return v;
  }());
  Rng g(15);
  const Tensor f = Tensor::constant({3, 16}, testing::random_values(48, g));
  const Tensor s = classify_semantic(z, f), t = classify_translation(z, f);
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  for (double v : t.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Heads, RowsSumToOneAndArgmaxMatchesLogits) {
  const ModelParams p = ModelParams::init(small_config(false), 16);
  Rng g(17);
  const Tensor f = Tensor::constant({6, 16}, testing::random_values(96, g, -5, 5));
  const Tensor logits = semantic_logits(p, f);
  const Tensor probs = classify_semantic(p, f);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    std::size_t am_l = 0, am_p = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      s += probs.at(i, c);
      if (logits.at(i, c) > logits.at(i, am_l)) am_l = c;
      if (probs.at(i, c) > probs.at(i, am_p)) am_p = c;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_EQ(am_l, am_p);
  }
}

TEST(Heads, TranslationLossGradientThroughModel) {
  const ModelParams p = ModelParams::init(small_config(false), 18);
  Rng g(19);
  const CloudBatch batch = CloudBatch::from(std::vector{random_cloud(10, g), random_cloud(10, g)});
  auto loss = [&] {
    return translation_loss(classify_translation(p, encode(p, batch)), {1, 4}, {3, 2});
  };
  EXPECT_LT(max_gradient_error(loss, p.all()), 1e-4);
}

TEST(Heads, SharedEncoderFeedsEveryOutput) {
  ModelParams p = ModelParams::init(small_config(false), 20);
  Rng g(21);
  const CloudBatch batch = CloudBatch::from(std::vector{random_cloud(10, g)});
  auto outputs = [&] {
    const Tensor f = encode(p, batch);
    return std::vector<Tensor>{project(p, f), classify_semantic(p, f), classify_translation(p, f)};
  };
  const auto before = outputs();
  Tensor w = p.encoder().front().weight;
  w.mutable_values()[0] += 0.5;
  w.mutable_values()[4] -= 0.5;
  const auto after = outputs();
  for (std::size_t k = 0; k < 3; ++k) {
    bool changed = false;
    for (std::size_t i = 0; i < before[k].size(); ++i) changed |= before[k].values()[i] != after[k].values()[i];
    EXPECT_TRUE(changed) << "output " << k;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (bool edge : {false, true}) {
    const ModelParams p = ModelParams::init(small_config(edge), 22);
    std::stringstream s;
    write_checkpoint(s, p);
    const ModelParams q = read_checkpoint(s);
    EXPECT_EQ(q.config(), p.config());
    const auto a = p.named(), b = q.named();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].first, b[i].first);
      EXPECT_TRUE(std::equal(a[i].second.values().begin(), a[i].second.values().end(),
                             b[i].second.values().begin()));
    }
    Rng g(23);
    const CloudBatch batch = CloudBatch::from(std::vector{random_cloud(16, g)});
    const Tensor pa = predict(p, batch), pb = predict(q, batch);
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa.values()[i], pb.values()[i]);
  }
}

std::string corrupt_line(const std::string& text, std::size_t line, const std::string& replacement) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string l;
  for (std::size_t n = 1; std::getline(in, l); ++n) out << (n == line ? replacement : l) << '\n';
  return out.str();
}

std::size_t error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_checkpoint(in, "ckpt");
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(Checkpoint, CorruptionNamesTheLine) {
  const ModelParams p = ModelParams::init(small_config(false), 24);
  std::stringstream s;
  write_checkpoint(s, p);
  const std::string text = s.str();
  EXPECT_EQ(error_line(corrupt_line(text, 1, "garbage")), 1u);
  EXPECT_EQ(error_line(corrupt_line(text, 4, "feature_dim x")), 4u);
  EXPECT_EQ(error_line(corrupt_line(text, 12, "0.1 0.2 nope")), 12u);
  EXPECT_NE(error_line(text.substr(0, text.size() / 2)), 0u);
  try {
    std::istringstream in(corrupt_line(text, 12, "0.1 0.2 nope"));
    read_checkpoint(in, "model.ckpt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("model.ckpt:12"), std::string::npos);
  }
}

}  // namespace
}  // namespace pcuda
