#pragma once

// End-to-end training with the negative SI-SDR loss, Adam, per-epoch
// learning-rate decay and global-norm gradient clipping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfaes/dataset.hpp"
#include "mfaes/model.hpp"

namespace mfaes {

struct TrainConfig {
  std::string model = "mfmvdr";
  int epochs = 50;
  double lr0 = 3e-4;
  double lr_decay = 0.015;  // per epoch
  double clip_norm = 5.0;
  int batch_size = 1;
  std::uint64_t seed = 1;
  int L = 3;
  int hidden = 32;
  int cgru_hidden = 16;
  int baseline_hidden = 128;
  double val_fraction = 0.2;

  double lr(int epoch) const { return lr0 * std::pow(1.0 - lr_decay, epoch); }

  void validate() const {
    model_kind_from_string(model);
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be > 0");
    if (!(lr_decay >= 0.0 && lr_decay < 1.0)) throw std::invalid_argument("train: lr_decay must be in [0, 1)");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("train: clip_norm must be > 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train: val_fraction must be in [0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", c.model},   {"epochs", c.epochs},         {"lr0", c.lr0},
          {"lr_decay", c.lr_decay}, {"clip_norm", c.clip_norm}, {"batch_size", c.batch_size},
          {"seed", c.seed},     {"L", c.L},                   {"hidden", c.hidden},
          {"cgru_hidden", c.cgru_hidden}, {"baseline_hidden", c.baseline_hidden}, {"val_fraction", c.val_fraction}};
}

inline void merge_json(TrainConfig& c, const nlohmann::json& j) {
  c.model = j.value("model", c.model);
  c.epochs = j.value("epochs", c.epochs);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.L = j.value("L", c.L);
  c.hidden = j.value("hidden", c.hidden);
  c.cgru_hidden = j.value("cgru_hidden", c.cgru_hidden);
  c.baseline_hidden = j.value("baseline_hidden", c.baseline_hidden);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
}

inline Model make_model(const TrainConfig& c) {
  if (model_kind_from_string(c.model) == ModelKind::Mfmvdr) {
    EstimatorConfig e = EstimatorConfig::desk(c.L);
    e.hidden = c.hidden;
    e.cgru_hidden = c.cgru_hidden;
    e.seed = c.seed;
    return Model(e);
  }
  BaselineConfig b = BaselineConfig::desk();
  b.hidden = c.baseline_hidden;
  b.seed = c.seed;
  return Model(b);
}

// ---------------------------------------------------------------------------
// Optimizer

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One Adam update with bias correction. Nothing is modified when a gradient
/// is NaN or infinite.
inline void adam_step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
                      AdamState& st, double lr, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) throw std::invalid_argument("adam: parameter/gradient shape mismatch");
    for (double g : grads[i])
      if (!std::isfinite(g)) throw NonFiniteError("adam: non-finite gradient");
  }
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.size(), 0.0);
      st.v.emplace_back(p.size(), 0.0);
    }
  }
  if (st.m.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");

  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = st.m[i];
    auto& v = st.v[i];
    if (m.size() != params[i].size()) throw std::invalid_argument("adam: state does not match parameters");
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = grads[i][j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      params[i][j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

/// Scales every gradient by max_norm / ||g|| when the global norm exceeds
/// max_norm. Returns the norm before clipping.
inline double clip_gradients(const std::vector<std::span<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& g : grads)
      for (double& x : g) x *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int epoch = 0;  // 1-based
  double mean_loss_db = 0.0;
  double lr = 0.0;
  double val_loss_db = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::string checkpoint;
  std::vector<EpochLog> epochs;  // epochs run in this call
  long steps = 0;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointName = "checkpoint.bin";
inline constexpr const char* kLossLogName = "loss_log.csv";
inline constexpr const char* kValLogName = "val_log.csv";

/// One training example with its spectra precomputed for the model's STFT.
struct TrainExample {
  Spectrogram noisy, far;
  std::vector<double> near;
};

inline nn::Tensor example_loss(const Model& model, const TrainExample& ex) {
  return si_sdr_loss(istft(model.enhance_spectrum(ex.noisy, ex.far), model.stft()), ex.near);
}

/// Splits scene indices into training and validation sets with a fixed
/// seed-dependent permutation.
inline void split_indices(std::size_t n, double val_fraction, std::uint64_t seed, std::vector<std::size_t>& train_idx,
                          std::vector<std::size_t>& val_idx) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 100));
  std::shuffle(perm.begin(), perm.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n - 1;
  val_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  train_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<TrainExample> examples)
      : cfg_(cfg), model_(make_model(cfg)), examples_(std::move(examples)) {
    cfg.validate();
    if (examples_.empty()) throw std::invalid_argument("train: dataset is empty");
    split_indices(examples_.size(), cfg.val_fraction, cfg.seed, train_idx_, val_idx_);
  }

  const Model& model() const { return model_; }
  Model& model() { return model_; }
  int epochs_done() const { return epoch_; }
  const AdamState& adam() const { return adam_; }
  const std::vector<std::size_t>& train_indices() const { return train_idx_; }

  /// Deterministic scene order for an epoch.
  std::vector<std::size_t> epoch_order(int epoch) const {
    std::vector<std::size_t> order = train_idx_;
    std::mt19937_64 rng(derive_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

  /// One optimizer step over `batch`; returns the per-scene losses.
  std::vector<double> step(const std::vector<std::size_t>& batch, double lr) {
    auto& ps = model_.params();
    ps.zero_grad();
    std::vector<double> losses;
    for (std::size_t i : batch) {
      const nn::Tensor loss = example_loss(model_, examples_.at(i));
      if (!std::isfinite(loss.item())) throw TrainingDiverged("train: non-finite loss");
      nn::backward(loss);
      losses.push_back(loss.item());
    }
    std::vector<std::span<double>> grads;
    std::vector<std::span<double>> params;
    for (auto& [_, t] : ps.items()) {
      nn::Tensor p = t;
      grads.emplace_back(p.mutable_grad());
      params.emplace_back(p.value());
    }
    if (batch.size() > 1)
      for (auto& g : grads)
        for (double& x : g) x /= static_cast<double>(batch.size());
    for (const auto& g : grads)
      for (double x : g)
        if (!std::isfinite(x)) throw TrainingDiverged("train: non-finite gradient");
    clip_gradients(grads, cfg_.clip_norm);
    adam_step(params, std::vector<std::span<const double>>(grads.begin(), grads.end()), adam_, lr);
    // Parameters and moments stay float32-representable, so a checkpoint
    // captures the optimizer exactly.
    for (auto& p : params)
      for (double& x : p) x = round_to_float(x);
    for (auto* s : {&adam_.m, &adam_.v})
      for (auto& vec : *s)
        for (double& x : vec) x = round_to_float(x);
    return losses;
  }

  /// Runs one epoch and returns its log entry.
  EpochLog run_epoch() {
    const double lr = cfg_.lr(epoch_);
    const auto order = epoch_order(epoch_);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg_.batch_size));
      for (double l : step({order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e)}, lr)) {
        total += l;
        ++count;
      }
    }
    ++epoch_;
    EpochLog log{epoch_, total / static_cast<double>(count), lr};
    if (!val_idx_.empty()) log.val_loss_db = mean_loss(val_idx_);
    return log;
  }

  double mean_loss(const std::vector<std::size_t>& idx) const {
    double total = 0.0;
    for (std::size_t i : idx) total += example_loss(model_, examples_.at(i)).item();
    return total / static_cast<double>(idx.size());
  }

  void save(const std::string& path) const {
    nlohmann::json extra = {{"train", to_json(cfg_)}, {"epoch", epoch_}, {"adam_step", adam_.step}};
    auto arrays = parameter_arrays(model_.params());
    if (!adam_.m.empty()) {
      const auto& items = model_.params().items();
      for (std::size_t i = 0; i < items.size(); ++i) {
        arrays.push_back({"adam.m/" + items[i].first, items[i].second.shape(), adam_.m[i]});
        arrays.push_back({"adam.v/" + items[i].first, items[i].second.shape(), adam_.v[i]});
      }
    }
    nlohmann::json h = model_header(model_);
    h.update(extra);
    nn::save_checkpoint(path, h, arrays);
  }

  /// Restores parameters, optimizer moments and the epoch counter.
  void restore(const std::string& path) {
    const nn::Checkpoint ck = nn::load_checkpoint(path);
    if (ck.header.at("model").get<std::string>() != cfg_.model)
      throw std::runtime_error("resume: checkpoint model kind differs from the config");
    if (ck.header.at("config") != model_.config_json())
      throw std::runtime_error("resume: checkpoint model config differs from the config");
    load_parameters(model_.params(), ck);
    epoch_ = ck.header.at("epoch").get<int>();
    adam_ = {};
    adam_.step = ck.header.at("adam_step").get<long>();
    if (adam_.step > 0) {
      for (const auto& [name, t] : model_.params().items()) {
        adam_.m.push_back(ck.find("adam.m/" + name).values);
        adam_.v.push_back(ck.find("adam.v/" + name).values);
      }
    }
  }

 private:
  TrainConfig cfg_;
  Model model_;
  std::vector<TrainExample> examples_;
  std::vector<std::size_t> train_idx_, val_idx_;
  AdamState adam_;
  int epoch_ = 0;
};

/// Loads every manifest scene and precomputes the spectra `model` needs.
inline std::vector<TrainExample> load_examples(const std::string& dataset_dir, const StftConfig& stft) {
  namespace fs = std::filesystem;
  const auto recs = read_manifest((fs::path(dataset_dir) / kManifestName).string());
  const DatasetConfig dc = read_dataset_config(dataset_dir);
  std::vector<TrainExample> out;
  for (const auto& r : recs) {
    const Scene sc = load_scene(r, dataset_dir, dc);
    require_rate(sc.mic, kDefaultSampleRate);
    out.push_back({analyze(sc.mic, stft), analyze(sc.far, stft), sc.near.samples});
  }
  return out;
}

/// Trains for cfg.epochs (continuing from `resume` when given), writing the
/// checkpoint and the loss logs after every epoch. On divergence the last
/// complete checkpoint is left in place and TrainingDiverged is rethrown.
inline TrainResult train(const TrainConfig& cfg, const std::string& dataset_dir, const std::string& out_dir,
                         const std::string& resume = "", const std::function<void(const EpochLog&)>& on_epoch = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);
  Trainer tr(cfg, load_examples(dataset_dir, make_model(cfg).stft()));
  if (!resume.empty()) tr.restore(resume);

  const auto loss_path = (fs::path(out_dir) / kLossLogName).string();
  const auto val_path = (fs::path(out_dir) / kValLogName).string();
  const bool fresh = resume.empty();
  {
    std::ofstream loss(loss_path, fresh ? std::ios::trunc : std::ios::app);
    if (!loss) throw std::runtime_error("cannot write " + loss_path);
    if (fresh) loss << "epoch,mean_loss_db,lr\n";
    std::ofstream val(val_path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) val << "epoch,val_loss_db\n";
  }

  TrainResult res;
  res.checkpoint = (fs::path(out_dir) / kCheckpointName).string();
  while (tr.epochs_done() < cfg.epochs) {
    const EpochLog log = tr.run_epoch();
    tr.save(res.checkpoint);
    char line[128];
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", log.epoch, log.mean_loss_db, log.lr);
    std::ofstream(loss_path, std::ios::app) << line;
    if (!std::isnan(log.val_loss_db)) {
      std::snprintf(line, sizeof line, "%d,%.9g\n", log.epoch, log.val_loss_db);
      std::ofstream(val_path, std::ios::app) << line;
    }
    res.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  res.steps = tr.adam().step;
  return res;
}

}  // namespace mfaes
