#pragma once

// A trainable model of either kind, plus checkpoint save/load.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfaes/enhance.hpp"
#include "mfaes/nn/checkpoint.hpp"

namespace mfaes {

enum class ModelKind { Mfmvdr, Baseline };

inline std::string to_string(ModelKind k) { return k == ModelKind::Mfmvdr ? "mfmvdr" : "baseline"; }
inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mfmvdr") return ModelKind::Mfmvdr;
  if (s == "baseline") return ModelKind::Baseline;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected mfmvdr or baseline)");
}

class Model {
 public:
  explicit Model(const EstimatorConfig& cfg) : kind_(ModelKind::Mfmvdr), est_(std::make_unique<Estimator>(cfg)) {}
  explicit Model(const BaselineConfig& cfg) : kind_(ModelKind::Baseline), base_(std::make_unique<BaselineModel>(cfg)) {}

  ModelKind kind() const { return kind_; }
  const StftConfig& stft() const { return est_ ? est_->config().stft : base_->config().stft; }
  nn::ParameterSet& params() { return est_ ? est_->params() : base_->params(); }
  const nn::ParameterSet& params() const { return est_ ? est_->params() : base_->params(); }
  const Estimator& estimator() const { return *est_; }
  const BaselineModel& baseline() const { return *base_; }

  nlohmann::json config_json() const { return est_ ? to_json(est_->config()) : to_json(base_->config()); }

  /// Enhanced spectrum [T x 2K], differentiable w.r.t. the parameters.
  nn::Tensor enhance_spectrum(const Spectrogram& noisy, const Spectrogram& far, int* fallbacks = nullptr) const {
    if (est_) return est_->enhance_spectrum(noisy, far, fallbacks);
    return base_->enhance_spectrum(noisy, far);
  }

  Waveform enhance(const Waveform& mic, const Waveform& far, EnhanceStats* stats = nullptr) const {
    if (est_) return enhance_with_model(*est_, mic, far, stats);
    return enhance_with_baseline(*base_, mic, far);
  }

 private:
  ModelKind kind_;
  std::unique_ptr<Estimator> est_;
  std::unique_ptr<BaselineModel> base_;
};

inline std::vector<nn::NamedArray> parameter_arrays(const nn::ParameterSet& ps, const std::string& prefix = "") {
  std::vector<nn::NamedArray> out;
  for (const auto& [name, t] : ps.items()) out.push_back({prefix + name, t.shape(), t.value()});
  return out;
}

/// Copies stored values into `ps`; every parameter must be present with the
/// same shape.
inline void load_parameters(nn::ParameterSet& ps, const nn::Checkpoint& ck, const std::string& prefix = "") {
  for (const auto& [name, t] : ps.items()) {
    const auto& a = ck.find(prefix + name);
    if (a.shape != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": " + nn::shape_str(a.shape) + " vs " +
                               nn::shape_str(t.shape()));
    nn::Tensor(t).value() = a.values;
  }
}

inline nlohmann::json model_header(const Model& m) {
  return {{"model", to_string(m.kind())}, {"config", m.config_json()}, {"parameters", m.params().count()}};
}

inline Model model_from_header(const nlohmann::json& h) {
  const ModelKind kind = model_kind_from_string(h.at("model").get<std::string>());
  if (kind == ModelKind::Mfmvdr) return Model(estimator_config_from_json(h.at("config")));
  return Model(baseline_config_from_json(h.at("config")));
}

inline void save_model(const std::string& path, const Model& m, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json h = model_header(m);
  h.update(extra);
  nn::save_checkpoint(path, h, parameter_arrays(m.params()));
}

inline Model load_model(const std::string& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  Model m = model_from_header(ck.header);
  load_parameters(m.params(), ck);
  return m;
}

}  // namespace mfaes
