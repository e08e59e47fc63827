#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "gradient_suite.hpp"
#include "mfaes/nn/checkpoint.hpp"
#include "test_util.hpp"

using namespace mfaes;
using namespace mfaes::nn;
using mfaes::testkit::random_param;

TEST(Autodiff, SumOfSquares) {
  auto x = Tensor::parameter({3}, {1.0, 2.0, 3.0});
  const Tensor loss = sum(mul(x, x));
  EXPECT_DOUBLE_EQ(loss.item(), 14.0);
  backward(loss);
  EXPECT_EQ(x.grad(), (std::vector<double>{2.0, 4.0, 6.0}));
}

TEST(Autodiff, GradientsAccumulateAcrossCalls) {
  auto x = Tensor::parameter({2}, {1.0, -1.0});
  backward(sum(scale(x, 3.0)));
  backward(sum(scale(x, 3.0)));
  EXPECT_EQ(x.grad(), (std::vector<double>{6.0, 6.0}));
  x.zero_grad();
  EXPECT_EQ(x.grad(), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, ConstantLossLeavesZeroGradient) {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  const Tensor c = Tensor::constant({1}, {5.0});
  EXPECT_FALSE(c.requires_grad());
  backward(c);
  EXPECT_EQ(x.grad(), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, SharedSubexpressionCountedOnce) {
  auto x = Tensor::parameter({1}, {3.0});
  const Tensor y = mul(x, x);
  backward(sum(add(y, y)));  // 2 x^2
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autodiff, NonScalarLossRejected) {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  EXPECT_THROW(backward(mul(x, x)), std::invalid_argument);
  EXPECT_THROW(Tensor::constant({2, 2}, {1.0}), std::invalid_argument);
}

TEST(Ops, LinearForward) {
  const auto x = Tensor::constant({1, 2}, {1.0, 2.0});
  const auto W = Tensor::constant({2, 2}, {1.0, 0.5, -1.0, 2.0});
  const auto b = Tensor::constant({2}, {0.1, 0.2});
  const Tensor y = linear(x, W, b);
  EXPECT_DOUBLE_EQ(y[0], 2.1);
  EXPECT_DOUBLE_EQ(y[1], 3.2);
}

TEST(Ops, DilatedConvTapsReachBackByDilation) {
  // Kernel 3, dilation 2: output t depends on inputs t, t-2, t-4.
  const int T = 12;
  const auto W = Tensor::constant({1, 1, 3}, {1.0, 10.0, 100.0});
  const auto b = Tensor::constant({1}, {0.0});
  std::vector<double> impulse(T, 0.0);
  impulse[4] = 1.0;
  const Tensor y = conv1d_causal(Tensor::constant({T, 1}, impulse), W, b, 2);
  for (int t = 0; t < T; ++t) {
    const double expect = t == 4 ? 1.0 : t == 6 ? 10.0 : t == 8 ? 100.0 : 0.0;
    EXPECT_DOUBLE_EQ(y[t], expect) << "t=" << t;
  }
}

TEST(Ops, LayerNormNormalizesEachFrame) {
  const auto x = Tensor::constant({2, 4}, {1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0});
  const auto g = Tensor::constant({4}, {1.0, 1.0, 1.0, 1.0});
  const auto b = Tensor::constant({4}, {0.0, 0.0, 0.0, 0.0});
  const Tensor y = layer_norm(x, g, b);
  for (int t = 0; t < 2; ++t) {
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 4; ++c) mean += y[t * 4 + c] / 4.0;
    for (int c = 0; c < 4; ++c) var += (y[t * 4 + c] - mean) * (y[t * 4 + c] - mean) / 4.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Ops, PreluSlope) {
  const Tensor y = prelu(Tensor::constant({1, 3}, {-2.0, 0.0, 3.0}), Tensor::constant({1}, {0.25}));
  EXPECT_EQ(y.value(), (std::vector<double>{-0.5, 0.0, 3.0}));
}

TEST(Ops, GruSingleStepByHand) {
  // H = 1, I = 1, one step from h = 0.
  const auto x = Tensor::constant({1, 1}, {0.5});
  const auto Wi = Tensor::constant({3, 1}, {0.2, -0.4, 0.6});
  const auto Wh = Tensor::constant({3, 1}, {0.3, 0.1, -0.7});
  const auto bi = Tensor::constant({3}, {0.05, 0.1, -0.2});
  const auto bh = Tensor::constant({3}, {0.0, 0.2, 0.4});
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double r = sig(0.2 * 0.5 + 0.05 + 0.0);
  const double z = sig(-0.4 * 0.5 + 0.1 + 0.2);
  const double n = std::tanh(0.6 * 0.5 - 0.2 + r * 0.4);
  EXPECT_NEAR(gru(x, Wi, Wh, bi, bh)[0], z * n, 1e-15);
}

TEST(Ops, GruSecondStepUsesHiddenState) {
  const auto x = Tensor::constant({2, 1}, {0.5, -1.0});
  const auto Wi = Tensor::constant({3, 1}, {0.2, -0.4, 0.6});
  const auto Wh = Tensor::constant({3, 1}, {0.3, 0.1, -0.7});
  const auto bi = Tensor::constant({3}, {0.05, 0.1, -0.2});
  const auto bh = Tensor::constant({3}, {0.0, 0.2, 0.4});
  const Tensor y = gru(x, Wi, Wh, bi, bh);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double h = y[0];
  const double r = sig(0.2 * -1.0 + 0.05 + 0.3 * h);
  const double z = sig(-0.4 * -1.0 + 0.1 + 0.1 * h + 0.2);
  const double n = std::tanh(0.6 * -1.0 - 0.2 + r * (-0.7 * h + 0.4));
  EXPECT_NEAR(y[1], (1.0 - z) * h + z * n, 1e-15);
}

TEST(Layers, ComplexGruRecombination) {
  ParameterSet ps;
  Initializer init(3);
  ComplexGru cg(ps, init, "c", 2, 3);
  const auto xr = random_param({4, 2}, 1), xi = random_param({4, 2}, 2);
  const ComplexTensor y = cg({xr, xi});
  auto g = [&](const std::string& which, const Tensor& in) {
    return gru(in, ps.at("c." + which + ".w_ih"), ps.at("c." + which + ".w_hh"), ps.at("c." + which + ".b_ih"),
               ps.at("c." + which + ".b_hh"));
  };
  const Tensor re = sub(g("gru_r", xr), g("gru_i", xi));
  const Tensor im = add(g("gru_i", xr), g("gru_r", xi));
  EXPECT_EQ(y.re.value(), re.value());
  EXPECT_EQ(y.im.value(), im.value());
}

TEST(Layers, TcnStackReceptiveField) {
  // Kernel 3, four blocks with dilations 1, 2, 4, 8: 1 + 2 * 15 = 31 frames.
  ParameterSet ps;
  Initializer init(4);
  TcnStack tcn(ps, init, "t", 2, 4, 4, 3);
  const int T = 50, t0 = 10;
  const auto base = mfaes::testkit::random_values(T * 2, 5);
  auto perturbed = base;
  perturbed[t0 * 2] += 1.0;
  const Tensor a = tcn(Tensor::constant({T, 2}, base)), b = tcn(Tensor::constant({T, 2}, perturbed));
  auto row_diff = [&](int t) {
    double d = 0.0;
    for (int c = 0; c < 4; ++c) d = std::max(d, std::abs(a[t * 4 + c] - b[t * 4 + c]));
    return d;
  };
  for (int t = 0; t < t0; ++t) EXPECT_EQ(row_diff(t), 0.0) << "t=" << t;
  EXPECT_GT(row_diff(t0), 0.0);
  EXPECT_GT(row_diff(t0 + 30), 0.0);
  for (int t = t0 + 31; t < T; ++t) EXPECT_EQ(row_diff(t), 0.0) << "t=" << t;
}

TEST(Layers, DuplicateParameterNameRejected) {
  ParameterSet ps;
  ps.add("w", {1}, {0.0});
  EXPECT_THROW(ps.add("w", {1}, {0.0}), std::invalid_argument);
  EXPECT_THROW(ps.at("missing"), std::out_of_range);
}

TEST(Layers, InitializerIsFloatRepresentableAndSeeded) {
  Initializer a(9), b(9);
  const auto va = a.uniform(100, 0.5), vb = b.uniform(100, 0.5);
  EXPECT_EQ(va, vb);
  for (double v : va) {
    EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
    EXPECT_LE(std::abs(v), 0.5);
  }
}

TEST(Estimator, CausalInTime) {
  const EstimatorConfig cfg = mfaes::testkit::toy_estimator_config();
  const Estimator est(cfg);
  const int T = 16, t0 = 9;
  Spectrogram y = mfaes::testkit::random_spectrogram(cfg.stft, T, 1), x = mfaes::testkit::random_spectrogram(cfg.stft, T, 2);
  const Tensor a = est.enhance_spectrum(y, x);
  for (int k = 0; k < y.bins(); ++k) {
    y(k, t0) += 3.0;
    x(k, t0) -= 2.0;
  }
  const Tensor b = est.enhance_spectrum(y, x);
  const int W = 2 * y.bins();
  for (int t = 0; t < t0; ++t)
    for (int c = 0; c < W; ++c) EXPECT_EQ(a[t * W + c], b[t * W + c]);
  double changed = 0.0;
  for (int c = 0; c < W; ++c) changed = std::max(changed, std::abs(a[t0 * W + c] - b[t0 * W + c]));
  EXPECT_GT(changed, 0.0);
}

TEST(Estimator, BaselineCausalInTime) {
  BaselineConfig cfg;
  cfg.stft = mfaes::testkit::toy_stft();
  cfg.hidden = 6;
  const BaselineModel m(cfg);
  const int T = 12, t0 = 7;
  Spectrogram y = mfaes::testkit::random_spectrogram(cfg.stft, T, 3), x = mfaes::testkit::random_spectrogram(cfg.stft, T, 4);
  const Tensor a = m.enhance_spectrum(y, x);
  y(1, t0) += 5.0;
  const Tensor b = m.enhance_spectrum(y, x);
  const int W = 2 * y.bins();
  for (int t = 0; t < t0 * W; ++t) EXPECT_EQ(a[t], b[t]);
}

TEST(Checkpoint, RoundTripIsExactForFloatValues) {
  const std::filesystem::path dir = mfaes::testkit::scratch_dir("nn_checkpoint");
  const std::string path = (dir / "ck.bin").string();
  const std::vector<NamedArray> arrays{{"a", {2, 3}, {1.5, -2.25, 0.0, 3.0, 1e-3f, 7.0}}, {"b", {1}, {0.1f}}};
  save_checkpoint(path, {{"note", "x"}}, arrays);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.header.at("note"), "x");
  ASSERT_EQ(ck.arrays.size(), 2u);
  EXPECT_EQ(ck.find("a").shape, (Shape{2, 3}));
  EXPECT_EQ(ck.find("a").values, arrays[0].values);
  EXPECT_EQ(ck.find("b").values, arrays[1].values);
  EXPECT_FALSE(ck.contains("c"));
  EXPECT_THROW(ck.find("c"), std::runtime_error);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const std::filesystem::path dir = mfaes::testkit::scratch_dir("nn_checkpoint_bad");
  const std::string path = (dir / "bad.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACHECKPOINTFILE";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  EXPECT_THROW(load_checkpoint((dir / "missing.bin").string()), std::runtime_error);

  const std::string good = (dir / "good.bin").string();
  save_checkpoint(good, nlohmann::json::object(), {{"a", {4}, {1.0, 2.0, 3.0, 4.0}}});
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 4);
  EXPECT_THROW(load_checkpoint(good), std::runtime_error);
}

class GradientCheck : public ::testing::TestWithParam<mfaes::testkit::GradCase> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  const auto rep = c.run();
  EXPECT_GT(rep.checked, 0);
  EXPECT_LT(rep.max_rel_err, c.tolerance) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCheck, ::testing::ValuesIn(mfaes::testkit::gradient_cases()),
                         [](const auto& info) { return info.param.name; });
