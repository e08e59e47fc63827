#pragma once

// Sequence ops on [time x features] tensors, each with a hand-written backward.

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mfaes/nn/tensor.hpp"

namespace mfaes::nn {

/// y = x W^T + b, x: [T x I], W: [O x I], b: [O].
inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_2d(x, "linear");
  require_2d(W, "linear");
  const int T = x.dim(0), I = x.dim(1), O = W.dim(0);
  if (W.dim(1) != I || b.numel() != static_cast<std::size_t>(O))
    throw std::invalid_argument("linear: shape mismatch x" + shape_str(x.shape()) + " W" + shape_str(W.shape()));
  std::vector<double> v(static_cast<std::size_t>(T) * O);
  auto Y = as_mat(v, T, O);
  Y.noalias() = as_mat(x.value(), T, I) * as_mat(W.value(), O, I).transpose();
  Y.rowwise() += ConstVecMap(b.value().data(), O).transpose();
  return make_op({T, O}, std::move(v), {x, W, b}, [T, I, O](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto dY = as_mat(std::as_const(self.grad), T, O);
    if (px.requires_grad) as_mat(px.grad_buffer(), T, I).noalias() += dY * as_mat(std::as_const(pw.value), O, I);
    if (pw.requires_grad) as_mat(pw.grad_buffer(), O, I).noalias() += dY.transpose() * as_mat(std::as_const(px.value), T, I);
    if (pb.requires_grad) VecMap(pb.grad_buffer().data(), O) += dY.colwise().sum().transpose();
  });
}

/// Causal dilated convolution, x: [T x I], W: [O x I x k], b: [O].
///   y[t, o] = b[o] + sum_{i, j} W[o, i, j] x[t - j * dilation, i]
/// Frames before 0 are zero, so the output keeps length T and never sees the future.
inline Tensor conv1d_causal(const Tensor& x, const Tensor& W, const Tensor& b, int dilation) {
  require_2d(x, "conv1d_causal");
  if (W.shape().size() != 3) throw std::invalid_argument("conv1d_causal: kernel must be [O x I x k]");
  if (dilation < 1) throw std::invalid_argument("conv1d_causal: dilation must be >= 1");
  const int T = x.dim(0), I = x.dim(1), O = W.dim(0), k = W.dim(2);
  if (W.dim(1) != I || b.numel() != static_cast<std::size_t>(O)) throw std::invalid_argument("conv1d_causal: shape mismatch");

  // Split the kernel into one [O x I] matrix per tap.
  auto taps = std::make_shared<std::vector<RowMat>>(k, RowMat(O, I));
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < k; ++j) (*taps)[j](o, i) = W[(static_cast<std::size_t>(o) * I + i) * k + j];

  std::vector<double> v(static_cast<std::size_t>(T) * O);
  auto Y = as_mat(v, T, O);
  Y.rowwise() = ConstVecMap(b.value().data(), O).transpose();
  const auto X = as_mat(x.value(), T, I);
  for (int j = 0; j < k; ++j) {
    const int shift = j * dilation;
    if (shift >= T) break;
    Y.bottomRows(T - shift).noalias() += X.topRows(T - shift) * (*taps)[j].transpose();
  }

  return make_op({T, O}, std::move(v), {x, W, b}, [T, I, O, k, dilation, taps](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto dY = as_mat(std::as_const(self.grad), T, O);
    const auto X = as_mat(std::as_const(px.value), T, I);
    for (int j = 0; j < k; ++j) {
      const int shift = j * dilation;
      if (shift >= T) break;
      if (px.requires_grad)
        as_mat(px.grad_buffer(), T, I).topRows(T - shift).noalias() += dY.bottomRows(T - shift) * (*taps)[j];
      if (pw.requires_grad) {
        const RowMat dWj = dY.bottomRows(T - shift).transpose() * X.topRows(T - shift);
        auto& g = pw.grad_buffer();
        for (int o = 0; o < O; ++o)
          for (int i = 0; i < I; ++i) g[(static_cast<std::size_t>(o) * I + i) * k + j] += dWj(o, i);
      }
    }
    if (pb.requires_grad) VecMap(pb.grad_buffer().data(), O) += dY.colwise().sum().transpose();
  });
}

/// Normalizes each row of x: [T x C] over its C channels, then applies a
/// per-channel gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  require_2d(x, "layer_norm");
  const int T = x.dim(0), C = x.dim(1);
  if (gain.numel() != static_cast<std::size_t>(C) || bias.numel() != static_cast<std::size_t>(C))
    throw std::invalid_argument("layer_norm: parameter size mismatch");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(T);
  std::vector<double> v(x.numel());
  for (int t = 0; t < T; ++t) {
    const double* row = x.value().data() + static_cast<std::size_t>(t) * C;
    double mean = 0.0;
    for (int c = 0; c < C; ++c) mean += row[c];
    mean /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= C;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[t] = is;
    for (int c = 0; c < C; ++c) {
      const std::size_t idx = static_cast<std::size_t>(t) * C + c;
      (*xhat)[idx] = (row[c] - mean) * is;
      v[idx] = gain[c] * (*xhat)[idx] + bias[c];
    }
  }
  return make_op({T, C}, std::move(v), {x, gain, bias}, [T, C, xhat, inv_std](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    std::vector<double> dxhat(C);
    for (int t = 0; t < T; ++t) {
      const std::size_t base = static_cast<std::size_t>(t) * C;
      double mean_d = 0.0, mean_dx = 0.0;
      for (int c = 0; c < C; ++c) {
        const double dy = self.grad[base + c];
        if (pg.requires_grad) pg.grad_buffer()[c] += dy * (*xhat)[base + c];
        if (pb.requires_grad) pb.grad_buffer()[c] += dy;
        dxhat[c] = dy * pg.value[c];
        mean_d += dxhat[c];
        mean_dx += dxhat[c] * (*xhat)[base + c];
      }
      if (!px.requires_grad) continue;
      mean_d /= C;
      mean_dx /= C;
      auto& g = px.grad_buffer();
      for (int c = 0; c < C; ++c)
        g[base + c] += (*inv_std)[t] * (dxhat[c] - mean_d - (*xhat)[base + c] * mean_dx);
    }
  });
}

/// Gated recurrent unit over x: [T x I] with zero initial state.
/// Gate rows are ordered (reset, update, candidate):
///   r = sig(Wi_r x + bi_r + Wh_r h + bh_r)
///   z = sig(Wi_z x + bi_z + Wh_z h + bh_z)
///   n = tanh(Wi_n x + bi_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * h + z * n
inline Tensor gru(const Tensor& x, const Tensor& Wi, const Tensor& Wh, const Tensor& bi, const Tensor& bh) {
  require_2d(x, "gru");
  const int T = x.dim(0), I = x.dim(1), H = Wh.dim(1);
  if (Wi.dim(0) != 3 * H || Wi.dim(1) != I || Wh.dim(0) != 3 * H || bi.numel() != static_cast<std::size_t>(3 * H) ||
      bh.numel() != static_cast<std::size_t>(3 * H))
    throw std::invalid_argument("gru: shape mismatch");

  struct Cache {
    RowMat r, z, n, hn, hprev;  // each [T x H]
  };
  auto cache = std::make_shared<Cache>();
  cache->r.resize(T, H);
  cache->z.resize(T, H);
  cache->n.resize(T, H);
  cache->hn.resize(T, H);
  cache->hprev.resize(T, H);

  RowMat xi = as_mat(x.value(), T, I) * as_mat(Wi.value(), 3 * H, I).transpose();
  xi.rowwise() += ConstVecMap(bi.value().data(), 3 * H).transpose();
  const auto WhM = as_mat(Wh.value(), 3 * H, H);
  const ConstVecMap bhV(bh.value().data(), 3 * H);

  std::vector<double> v(static_cast<std::size_t>(T) * H);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd hh = WhM * h + bhV;
    cache->hprev.row(t) = h.transpose();
    for (int u = 0; u < H; ++u) {
      const double r = sigmoid_scalar(xi(t, u) + hh[u]);
      const double z = sigmoid_scalar(xi(t, H + u) + hh[H + u]);
      const double n = std::tanh(xi(t, 2 * H + u) + r * hh[2 * H + u]);
      cache->r(t, u) = r;
      cache->z(t, u) = z;
      cache->n(t, u) = n;
      cache->hn(t, u) = hh[2 * H + u];
      h[u] = (1.0 - z) * h[u] + z * n;
      v[static_cast<std::size_t>(t) * H + u] = h[u];
    }
  }

  return make_op({T, H}, std::move(v), {x, Wi, Wh, bi, bh}, [T, I, H, cache](Node& self) {
    Node& px = *self.parents[0];
    Node& pWi = *self.parents[1];
    Node& pWh = *self.parents[2];
    Node& pbi = *self.parents[3];
    Node& pbh = *self.parents[4];
    const auto WhM = as_mat(std::as_const(pWh.value), 3 * H, H);
    RowMat dxi(T, 3 * H), dhh_all(T, 3 * H);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dhh(3 * H);
    for (int t = T - 1; t >= 0; --t) {
      for (int u = 0; u < H; ++u) {
        const double dh = self.grad[static_cast<std::size_t>(t) * H + u] + carry[u];
        const double r = cache->r(t, u), z = cache->z(t, u), n = cache->n(t, u);
        const double dn = dh * z;
        const double dz = dh * (n - cache->hprev(t, u));
        carry[u] = dh * (1.0 - z);
        const double dan = dn * (1.0 - n * n);
        const double dr = dan * cache->hn(t, u);
        dxi(t, u) = dr * r * (1.0 - r);
        dxi(t, H + u) = dz * z * (1.0 - z);
        dxi(t, 2 * H + u) = dan;
        dhh[u] = dxi(t, u);
        dhh[H + u] = dxi(t, H + u);
        dhh[2 * H + u] = dan * r;
      }
      dhh_all.row(t) = dhh.transpose();
      carry.noalias() += WhM.transpose() * dhh;
    }
    if (px.requires_grad) as_mat(px.grad_buffer(), T, I).noalias() += dxi * as_mat(std::as_const(pWi.value), 3 * H, I);
    if (pWi.requires_grad) as_mat(pWi.grad_buffer(), 3 * H, I).noalias() += dxi.transpose() * as_mat(std::as_const(px.value), T, I);
    if (pWh.requires_grad) as_mat(pWh.grad_buffer(), 3 * H, H).noalias() += dhh_all.transpose() * cache->hprev;
    if (pbi.requires_grad) VecMap(pbi.grad_buffer().data(), 3 * H) += dxi.colwise().sum().transpose();
    if (pbh.requires_grad) VecMap(pbh.grad_buffer().data(), 3 * H) += dhh_all.colwise().sum().transpose();
  });
}

}  // namespace mfaes::nn
