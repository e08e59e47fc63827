#pragma once

// Parameter-estimation network for the multi-frame MVDR filter and the
// recurrent spectral-mask baseline.
//
// Estimator: [Re Y | Im Y | Re X | Im X] per frame -> shared TCN trunk -> two
// task branches (TCN -> complex GRU -> FC). One branch predicts the inverse
// undesired correlation matrix per bin, the other the IFC vector with its
// first entry pinned to 1.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfaes/nn/layers.hpp"
#include "mfaes/pipeline_ops.hpp"
#include "mfaes/stft.hpp"

namespace mfaes {

struct EstimatorConfig {
  int L = 3;
  StftConfig stft = StftConfig::standard();
  int shared_blocks = 4;
  int task_blocks = 3;
  int hidden = 32;       // TCN channels
  int cgru_hidden = 16;  // per real GRU
  int kernel = 3;
  std::uint64_t seed = 1;

  int bins() const { return stft.bins(); }

  void validate() const {
    stft.validate();
    if (L < 1) throw std::invalid_argument("estimator: L must be >= 1");
    if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("estimator: hidden must be even and >= 2");
    if (cgru_hidden < 1 || kernel < 1 || shared_blocks < 1 || task_blocks < 1)
      throw std::invalid_argument("estimator: invalid layer sizes");
  }

  static EstimatorConfig desk(int L = 3) {
    EstimatorConfig c;
    c.L = L;
    return c;
  }
  static EstimatorConfig paper(int L = 5) {
    EstimatorConfig c;
    c.L = L;
    c.hidden = 256;
    c.cgru_hidden = 96;
    return c;
  }
};

struct BaselineConfig {
  StftConfig stft = StftConfig::baseline();
  int hidden = 128;
  double log_eps = 1e-10;
  std::uint64_t seed = 1;

  int bins() const { return stft.bins(); }
  void validate() const {
    stft.validate();
    if (hidden < 1) throw std::invalid_argument("baseline: hidden must be >= 1");
  }

  static BaselineConfig desk() { return {}; }
  static BaselineConfig paper() {
    BaselineConfig c;
    c.hidden = 512;
    return c;
  }
};

inline nlohmann::json to_json(const StftConfig& c) {
  return {{"frame_len", c.frame_len}, {"hop", c.hop}, {"fft_size", c.fft_size},
          {"window", c.window == WindowKind::Hann ? "hann" : "rect"}};
}
inline StftConfig stft_from_json(const nlohmann::json& j) {
  StftConfig c;
  c.frame_len = j.at("frame_len").get<int>();
  c.hop = j.at("hop").get<int>();
  c.fft_size = j.at("fft_size").get<int>();
  c.window = j.value("window", std::string("hann")) == "rect" ? WindowKind::Rectangular : WindowKind::Hann;
  return c;
}

inline nlohmann::json to_json(const EstimatorConfig& c) {
  return {{"L", c.L},           {"stft", to_json(c.stft)},         {"shared_blocks", c.shared_blocks},
          {"task_blocks", c.task_blocks}, {"hidden", c.hidden}, {"cgru_hidden", c.cgru_hidden},
          {"kernel", c.kernel}, {"seed", c.seed}};
}
inline EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
  EstimatorConfig c;
  c.L = j.at("L").get<int>();
  c.stft = stft_from_json(j.at("stft"));
  c.shared_blocks = j.at("shared_blocks").get<int>();
  c.task_blocks = j.at("task_blocks").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.cgru_hidden = j.at("cgru_hidden").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json to_json(const BaselineConfig& c) {
  return {{"stft", to_json(c.stft)}, {"hidden", c.hidden}, {"log_eps", c.log_eps}, {"seed", c.seed}};
}
inline BaselineConfig baseline_config_from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.stft = stft_from_json(j.at("stft"));
  c.hidden = j.at("hidden").get<int>();
  c.log_eps = j.at("log_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void require_aligned(const Spectrogram& a, const Spectrogram& b, const StftConfig& cfg) {
  if (a.frames() != b.frames()) throw std::invalid_argument("noisy and far-end spectrograms differ in frame count");
  if (a.config() != cfg || b.config() != cfg) throw std::invalid_argument("spectrogram STFT config does not match the model");
}

struct EstimatorHeads {
  nn::Tensor inverse;  // [T x 2 K L^2]
  nn::Tensor ifc;      // [T x 2 K (L - 1)]
};

/// Output heads start close to passthrough: both heads use small weights and
/// biases, and the real diagonal of the inverse head's bias is 1 in every bin.
class Estimator {
 public:
  static constexpr double kHeadInitScale = 0.1;

  explicit Estimator(const EstimatorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    nn::Initializer init(cfg.seed);
    const int K = cfg.bins();
    const HeadLayout layout{K, cfg.L};
    shared_ = nn::TcnStack(params_, init, "shared", 4 * K, cfg.hidden, cfg.shared_blocks, cfg.kernel);
    inverse_branch_ = Branch(params_, init, "inverse", cfg, layout.inverse_width());
    ifc_branch_ = Branch(params_, init, "ifc", cfg, std::max(1, layout.ifc_width()));

    auto shrink = [](nn::Tensor t) {
      for (double& v : t.value()) v = static_cast<double>(static_cast<float>(v * kHeadInitScale));
    };
    for (auto* fc : {&inverse_branch_.head, &ifc_branch_.head}) {
      shrink(fc->affine().weight());
      shrink(fc->affine().bias());
    }
    auto& bias = inverse_branch_.head.affine().bias().value();
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < cfg.L; ++i) bias[layout.inverse_re(k, i, i)] = 1.0;
  }

  const EstimatorConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  HeadLayout layout() const { return {cfg_.bins(), cfg_.L}; }

  /// [T x 4K] input features (constant).
  nn::Tensor features(const Spectrogram& noisy, const Spectrogram& far) const {
    require_aligned(noisy, far, cfg_.stft);
    const int T = noisy.frames(), K = noisy.bins();
    std::vector<double> v(static_cast<std::size_t>(T) * 4 * K);
    for (int t = 0; t < T; ++t) {
      double* row = v.data() + static_cast<std::size_t>(t) * 4 * K;
      for (int k = 0; k < K; ++k) {
        row[k] = noisy(k, t).real();
        row[K + k] = noisy(k, t).imag();
        row[2 * K + k] = far(k, t).real();
        row[3 * K + k] = far(k, t).imag();
      }
    }
    return nn::Tensor::constant({T, 4 * K}, std::move(v));
  }

  EstimatorHeads forward(const nn::Tensor& features) const {
    const nn::Tensor trunk = shared_(features);
    EstimatorHeads out{inverse_branch_(trunk), ifc_branch_(trunk)};
    if (cfg_.L == 1) out.ifc = nn::slice_cols(out.ifc, 0, 0);
    return out;
  }

  EstimatorHeads forward(const Spectrogram& noisy, const Spectrogram& far) const { return forward(features(noisy, far)); }

  /// Enhanced spectrum [T x 2K] through the MVDR filter.
  nn::Tensor enhance_spectrum(const Spectrogram& noisy, const Spectrogram& far, int* fallbacks = nullptr) const {
    const EstimatorHeads h = forward(noisy, far);
    return mvdr_filter(h.inverse, h.ifc, noisy, cfg_.L, fallbacks);
  }

 private:
  struct Branch {
    nn::TcnStack tcn;
    nn::ComplexGru cgru;
    nn::FullyConnected head;
    int half = 0;

    Branch() = default;
    Branch(nn::ParameterSet& ps, nn::Initializer& init, const std::string& name, const EstimatorConfig& cfg, int out)
        : tcn(ps, init, name + ".tcn", cfg.hidden, cfg.hidden, cfg.task_blocks, cfg.kernel),
          cgru(ps, init, name + ".cgru", cfg.hidden / 2, cfg.cgru_hidden),
          head(ps, init, name + ".fc", 2 * cfg.cgru_hidden, out),
          half(cfg.hidden / 2) {}

    // The TCN channels are split into real and imaginary halves for the cGRU.
    nn::Tensor operator()(const nn::Tensor& x) const {
      const nn::Tensor f = tcn(x);
      const nn::ComplexTensor c = cgru({nn::slice_cols(f, 0, half), nn::slice_cols(f, half, half)});
      return head(nn::concat_cols(c.re, c.im));
    }
  };

  EstimatorConfig cfg_;
  nn::ParameterSet params_;
  nn::TcnStack shared_;
  Branch inverse_branch_;
  Branch ifc_branch_;
};

/// Two GRU layers over concatenated log-power spectra, FC + sigmoid mask.
class BaselineModel {
 public:
  explicit BaselineModel(const BaselineConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    nn::Initializer init(cfg.seed);
    const int K = cfg.bins();
    gru1_ = nn::Gru(params_, init, "gru1", 2 * K, cfg.hidden);
    gru2_ = nn::Gru(params_, init, "gru2", cfg.hidden, cfg.hidden);
    fc_ = nn::FullyConnected(params_, init, "fc", cfg.hidden, K, nn::Activation::Sigmoid);
  }

  const BaselineConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  int feature_dim() const { return 2 * cfg_.bins(); }

  /// [T x 2K]: log(|Y|^2 + eps) then log(|X|^2 + eps).
  nn::Tensor features(const Spectrogram& noisy, const Spectrogram& far) const {
    require_aligned(noisy, far, cfg_.stft);
    const int T = noisy.frames(), K = noisy.bins();
    std::vector<double> v(static_cast<std::size_t>(T) * 2 * K);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        v[static_cast<std::size_t>(t) * 2 * K + k] = std::log(std::norm(noisy(k, t)) + cfg_.log_eps);
        v[static_cast<std::size_t>(t) * 2 * K + K + k] = std::log(std::norm(far(k, t)) + cfg_.log_eps);
      }
    return nn::Tensor::constant({T, 2 * K}, std::move(v));
  }

  /// Mask [T x K] in (0, 1).
  nn::Tensor mask(const nn::Tensor& features) const { return fc_(gru2_(gru1_(features))); }

  nn::Tensor enhance_spectrum(const Spectrogram& noisy, const Spectrogram& far) const {
    return spectral_mask(mask(features(noisy, far)), noisy);
  }

 private:
  BaselineConfig cfg_;
  nn::ParameterSet params_;
  nn::Gru gru1_, gru2_;
  nn::FullyConnected fc_;
};

}  // namespace mfaes
