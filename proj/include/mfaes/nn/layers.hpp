#pragma once

// Parameterized layers built on the autodiff ops.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfaes/nn/ops.hpp"

namespace mfaes::nn {

/// Named parameters in registration order.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t = Tensor::parameter(std::move(shape), std::move(values));
    items_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  Tensor at(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// Uniform fan-in initialization; values are float32-representable so that
/// checkpoints reproduce them exactly.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  std::vector<double> uniform(std::size_t n, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(static_cast<float>(dist(rng_)));
    return v;
  }
  std::vector<double> fan_in(std::size_t n, int fan) { return uniform(n, 1.0 / std::sqrt(static_cast<double>(fan))); }

 private:
  std::mt19937_64 rng_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, Initializer& init, const std::string& name, int in, int out)
      : W_(ps.add(name + ".weight", {out, in}, init.fan_in(static_cast<std::size_t>(out) * in, in))),
        b_(ps.add(name + ".bias", {out}, init.fan_in(out, in))) {}

  Tensor operator()(const Tensor& x) const { return linear(x, W_, b_); }
  Tensor& weight() { return W_; }
  Tensor& bias() { return b_; }

 private:
  Tensor W_, b_;
};

enum class Activation { None, Sigmoid };

/// Affine map with an optional sigmoid.
class FullyConnected {
 public:
  FullyConnected() = default;
  FullyConnected(ParameterSet& ps, Initializer& init, const std::string& name, int in, int out,
                 Activation act = Activation::None)
      : affine_(ps, init, name, in, out), act_(act) {
    if (out < 1) throw std::invalid_argument("fully_connected: out_features must be >= 1");
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = affine_(x);
    return act_ == Activation::Sigmoid ? sigmoid(y) : y;
  }
  Linear& affine() { return affine_; }

 private:
  Linear affine_;
  Activation act_ = Activation::None;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet& ps, Initializer& init, const std::string& name, int in, int out, int kernel, int dilation)
      : dilation_(dilation) {
    if (kernel < 1 || dilation < 1) throw std::invalid_argument("conv1d: kernel and dilation must be >= 1");
    W_ = ps.add(name + ".weight", {out, in, kernel}, init.fan_in(static_cast<std::size_t>(out) * in * kernel, in * kernel));
    b_ = ps.add(name + ".bias", {out}, init.fan_in(out, in * kernel));
  }

  Tensor operator()(const Tensor& x) const { return conv1d_causal(x, W_, b_, dilation_); }
  Tensor& weight() { return W_; }
  Tensor& bias() { return b_; }
  int dilation() const { return dilation_; }

 private:
  Tensor W_, b_;
  int dilation_ = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int channels)
      : gain_(ps.add(name + ".gain", {channels}, std::vector<double>(channels, 1.0))),
        bias_(ps.add(name + ".bias", {channels}, std::vector<double>(channels, 0.0))) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

 private:
  Tensor gain_, bias_;
};

class PRelu {
 public:
  PRelu() = default;
  PRelu(ParameterSet& ps, const std::string& name, double slope = 0.25) : slope_(ps.add(name + ".slope", {1}, {slope})) {}

  Tensor operator()(const Tensor& x) const { return prelu(x, slope_); }

 private:
  Tensor slope_;
};

class Gru {
 public:
  Gru() = default;
  Gru(ParameterSet& ps, Initializer& init, const std::string& name, int in, int hidden) : hidden_(hidden) {
    if (hidden < 1) throw std::invalid_argument("gru: hidden must be >= 1");
    Wi_ = ps.add(name + ".w_ih", {3 * hidden, in}, init.fan_in(static_cast<std::size_t>(3 * hidden) * in, hidden));
    Wh_ = ps.add(name + ".w_hh", {3 * hidden, hidden}, init.fan_in(static_cast<std::size_t>(3 * hidden) * hidden, hidden));
    bi_ = ps.add(name + ".b_ih", {3 * hidden}, init.fan_in(3 * hidden, hidden));
    bh_ = ps.add(name + ".b_hh", {3 * hidden}, init.fan_in(3 * hidden, hidden));
  }

  Tensor operator()(const Tensor& x) const { return gru(x, Wi_, Wh_, bi_, bh_); }
  int hidden() const { return hidden_; }

 private:
  Tensor Wi_, Wh_, bi_, bh_;
  int hidden_ = 0;
};

struct ComplexTensor {
  Tensor re, im;
};

/// Complex GRU from two real GRUs:
///   out = (G_r(x_r) - G_i(x_i)) + j (G_i(x_r) + G_r(x_i))
class ComplexGru {
 public:
  ComplexGru() = default;
  ComplexGru(ParameterSet& ps, Initializer& init, const std::string& name, int in, int hidden)
      : real_(ps, init, name + ".gru_r", in, hidden), imag_(ps, init, name + ".gru_i", in, hidden) {}

  ComplexTensor operator()(const ComplexTensor& x) const {
    const Tensor f_rr = real_(x.re), f_ir = real_(x.im);
    const Tensor f_ri = imag_(x.re), f_ii = imag_(x.im);
    return {sub(f_rr, f_ii), add(f_ri, f_ir)};
  }

 private:
  Gru real_, imag_;
};

/// Residual block: x + LayerNorm(PReLU(DilatedConv(x))), with a 1x1
/// projection on the skip path when the channel count changes.
class TcnBlock {
 public:
  TcnBlock() = default;
  TcnBlock(ParameterSet& ps, Initializer& init, const std::string& name, int in, int out, int kernel, int dilation)
      : conv_(ps, init, name + ".conv", in, out, kernel, dilation),
        act_(ps, name + ".prelu"),
        norm_(ps, name + ".norm", out),
        project_(in != out) {
    if (project_) skip_ = Linear(ps, init, name + ".skip", in, out);
  }

  Tensor operator()(const Tensor& x) const {
    const Tensor f = norm_(act_(conv_(x)));
    return add(project_ ? skip_(x) : x, f);
  }

  Conv1d& conv() { return conv_; }

 private:
  Conv1d conv_;
  PRelu act_;
  LayerNorm norm_;
  bool project_ = false;
  Linear skip_;
};

/// Blocks with dilations 1, 2, 4, ...
class TcnStack {
 public:
  TcnStack() = default;
  TcnStack(ParameterSet& ps, Initializer& init, const std::string& name, int in, int hidden, int blocks, int kernel) {
    for (int b = 0; b < blocks; ++b)
      blocks_.emplace_back(ps, init, name + ".block" + std::to_string(b), b == 0 ? in : hidden, hidden, kernel, 1 << b);
  }

  Tensor operator()(Tensor x) const {
    for (const auto& blk : blocks_) x = blk(x);
    return x;
  }

  std::vector<TcnBlock>& blocks() { return blocks_; }

 private:
  std::vector<TcnBlock> blocks_;
};

}  // namespace mfaes::nn
