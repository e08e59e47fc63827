// mfaes: synth | train | enhance | eval
//
// Config precedence: built-in defaults < --config JSON file < flags. Each run
// writes the resolved config next to its outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfaes/evaluation.hpp"
#include "mfaes/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mfaes;

namespace {

/// Bad flags or values; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("invalid JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

template <class T>
void set_if(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

Waveform read_input(const std::string& path, const char* what) {
  Waveform w = read_wav(path);
  try {
    require_rate(w, kDefaultSampleRate);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(what) + " " + path + ": " + e.what());
  }
  return w;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out, config;
  std::optional<int> n;
  std::optional<std::uint64_t> seed;
  std::optional<double> ser_min, ser_max, snr_min, snr_max, snr;
  std::vector<double> conditions;
  std::optional<std::string> clip_dir, rir;
  bool no_nonlinearity = false;
};

int run_synth(const SynthArgs& a) {
  json j = to_json(DatasetConfig{});
  j.update(read_json_file(a.config));
  set_if(j, "n_scenes", a.n);
  set_if(j, "seed", a.seed);
  set_if(j, "ser_min", a.ser_min);
  set_if(j, "ser_max", a.ser_max);
  set_if(j, "snr_min", a.snr_min);
  set_if(j, "snr_max", a.snr_max);
  set_if(j, "snr_fixed", a.snr);
  set_if(j, "clip_dir", a.clip_dir);
  set_if(j, "rir_path", a.rir);
  if (!a.conditions.empty()) j["ser_conditions"] = a.conditions;
  if (a.no_nonlinearity) j["nonlinearity"]["enabled"] = false;

  DatasetConfig c;
  merge_json(c, j);
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto recs = make_dataset(c, a.out);
  write_json_file(fs::path(a.out) / "resolved_config.json", {{"command", "synth"}, {"dataset", to_json(c)}});
  std::cout << "wrote " << recs.size() << " scenes to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, resume;
  std::optional<std::string> model;
  std::optional<int> L, epochs, batch_size, hidden, cgru_hidden, baseline_hidden;
  std::optional<double> lr, lr_decay, clip_norm, val_fraction;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  json j = to_json(TrainConfig{});
  j.update(read_json_file(a.config));
  set_if(j, "model", a.model);
  set_if(j, "L", a.L);
  set_if(j, "epochs", a.epochs);
  set_if(j, "batch_size", a.batch_size);
  set_if(j, "hidden", a.hidden);
  set_if(j, "cgru_hidden", a.cgru_hidden);
  set_if(j, "baseline_hidden", a.baseline_hidden);
  set_if(j, "lr0", a.lr);
  set_if(j, "lr_decay", a.lr_decay);
  set_if(j, "clip_norm", a.clip_norm);
  set_if(j, "val_fraction", a.val_fraction);
  set_if(j, "seed", a.seed);

  TrainConfig c;
  merge_json(c, j);
  try {
    c.validate();
    make_model(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!fs::exists(fs::path(a.data) / kManifestName))
    throw std::runtime_error("no " + std::string(kManifestName) + " in " + a.data);

  fs::create_directories(a.out);
  write_json_file(fs::path(a.out) / "resolved_config.json",
                  {{"command", "train"}, {"data", a.data}, {"resume", a.resume}, {"train", to_json(c)}});
  const TrainResult r = train(c, a.data, a.out, a.resume, [](const EpochLog& l) {
    std::printf("epoch %d  loss %.4f dB  lr %.6g\n", l.epoch, l.mean_loss_db, l.lr);
    std::fflush(stdout);
  });
  std::cout << "checkpoint: " << r.checkpoint << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EnhanceArgs {
  std::string mic, far, out, checkpoint, config;
  bool oracle = false;
  std::string near, echo, noise;
  std::optional<int> L;
  std::optional<double> smoothing, loading;
};

int run_enhance(const EnhanceArgs& a) {
  if (a.far.empty()) throw UsageError("--far-end is required (far-end reference signal)");
  if (a.oracle == !a.checkpoint.empty()) throw UsageError("give exactly one of --oracle or --checkpoint");
  if (a.oracle && (a.near.empty() || a.echo.empty() || a.noise.empty()))
    throw UsageError("--oracle needs --near, --echo and --noise component files");

  OracleOptions def;
  json j = {{"L", def.L}, {"smoothing", def.smoothing}, {"loading", def.loading}};
  j.update(read_json_file(a.config));
  set_if(j, "L", a.L);
  set_if(j, "smoothing", a.smoothing);
  set_if(j, "loading", a.loading);

  const Waveform mic = read_input(a.mic, "noisy input");
  const Waveform far = read_input(a.far, "far-end input");
  if (far.size() != mic.size()) throw UsageError("noisy and far-end inputs differ in length");

  Waveform out;
  json resolved = {{"command", "enhance"}, {"mic", a.mic}, {"far_end", a.far}};
  if (a.oracle) {
    OracleOptions opt;
    opt.L = j.at("L").get<int>();
    opt.smoothing = j.at("smoothing").get<double>();
    opt.loading = j.at("loading").get<double>();
    if (opt.L < 1) throw UsageError("--L must be >= 1");
    Scene sc;
    sc.near = read_input(a.near, "near-end component");
    sc.echo = read_input(a.echo, "echo component");
    sc.noise = read_input(a.noise, "noise component");
    sc.far = far;
    sc.mic = mic;
    for (const auto* w : {&sc.near, &sc.echo, &sc.noise})
      if (w->size() != mic.size()) throw UsageError("oracle components differ in length from the noisy input");
    out = enhance_oracle(sc, opt);
    resolved["mode"] = "oracle";
    resolved["oracle"] = j;
    resolved["components"] = {{"near", a.near}, {"echo", a.echo}, {"noise", a.noise}};
  } else {
    const Model m = load_model(a.checkpoint);
    out = m.enhance(mic, far);
    resolved["mode"] = "model";
    resolved["checkpoint"] = a.checkpoint;
    resolved["model"] = model_header(m);
  }
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_wav(a.out, out);
  write_json_file(a.out + ".config.json", resolved);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data, out, config;
  std::vector<std::string> methods, checkpoints;
  std::vector<double> conditions;
  std::optional<double> snr;
  std::optional<int> L;
};

/// "oracle" uses the default filter length; "oracle-L7" picks one.
std::optional<int> oracle_length(const std::string& name, int default_L) {
  if (name == "oracle") return default_L;
  if (name.rfind("oracle-L", 0) == 0) {
    try {
      return std::stoi(name.substr(8));
    } catch (...) {
      throw UsageError("bad oracle method name: " + name);
    }
  }
  return std::nullopt;
}

int run_eval(const EvalArgs& a) {
  json j = {{"methods", json::array()}, {"checkpoints", json::object()}, {"conditions", json::array()},
            {"snr_db", 30.0}, {"oracle_L", OracleOptions{}.L}};
  j.update(read_json_file(a.config));
  if (!a.methods.empty()) j["methods"] = a.methods;
  for (const auto& kv : a.checkpoints) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--checkpoints entries must be name=path: " + kv);
    j["checkpoints"][kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (!a.conditions.empty()) j["conditions"] = a.conditions;
  set_if(j, "snr_db", a.snr);
  set_if(j, "oracle_L", a.L);

  const auto method_names = j.at("methods").get<std::vector<std::string>>();
  if (method_names.empty()) throw UsageError("--methods is empty; give at least one method");
  const int oracle_L = j.at("oracle_L").get<int>();

  std::vector<Method> methods;
  std::vector<std::shared_ptr<Model>> models;
  for (const auto& name : method_names) {
    if (name == "passthrough") {
      methods.push_back({name, [](const Scene& s) { return s.mic; }});
    } else if (auto L = oracle_length(name, oracle_L)) {
      OracleOptions opt;
      opt.L = *L;
      if (opt.L < 1) throw UsageError("oracle L must be >= 1");
      methods.push_back({name, [opt](const Scene& s) { return enhance_oracle(s, opt); }});
    } else {
      if (!j.at("checkpoints").contains(name)) throw UsageError("missing checkpoint for method " + name + " (use --checkpoints " + name + "=PATH)");
      auto m = std::make_shared<Model>(load_model(j.at("checkpoints").at(name).get<std::string>()));
      models.push_back(m);
      methods.push_back({name, [m](const Scene& s) { return m->enhance(s.mic, s.far); }});
    }
  }

  const auto recs = read_manifest((fs::path(a.data) / kManifestName).string());
  const DatasetConfig dc = read_dataset_config(a.data);
  std::vector<Condition> conds;
  const auto cond_values = j.at("conditions").get<std::vector<double>>();
  if (!cond_values.empty())
    conds = ser_grid(cond_values, j.at("snr_db").get<double>());
  else if (!dc.ser_conditions.empty())
    conds = ser_grid(dc.ser_conditions, dc.snr_fixed);

  const EvalReport rep = evaluate(methods, recs, [&](const SceneRecord& r) { return load_scene(r, a.data, dc); }, conds);
  fs::create_directories(a.out);
  std::ofstream(fs::path(a.out) / "report.csv") << rep.csv();
  std::ofstream(fs::path(a.out) / "scenes.csv") << rep.scenes_csv();
  std::ofstream(fs::path(a.out) / "report.txt") << rep.table();
  j["command"] = "eval";
  j["data"] = a.data;
  write_json_file(fs::path(a.out) / "resolved_config.json", j);
  std::cout << rep.table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-frame MVDR acoustic echo suppression"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a scene dataset");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--config", sa.config, "JSON config file");
  synth->add_option("--n", sa.n, "Number of scenes");
  synth->add_option("--seed", sa.seed, "Dataset seed");
  synth->add_option("--ser-min", sa.ser_min, "Minimum SER [dB]");
  synth->add_option("--ser-max", sa.ser_max, "Maximum SER [dB]");
  synth->add_option("--snr-min", sa.snr_min, "Minimum SNR [dB]");
  synth->add_option("--snr-max", sa.snr_max, "Maximum SNR [dB]");
  synth->add_option("--conditions", sa.conditions, "Fixed SER grid, e.g. -10,-5,0")->delimiter(',');
  synth->add_option("--snr", sa.snr, "SNR [dB] used with --conditions");
  synth->add_option("--clip-dir", sa.clip_dir, "Directory of 16 kHz speech WAVs (default: synthetic speech)");
  synth->add_option("--rir", sa.rir, "Room impulse response WAV (default: synthetic)");
  synth->add_flag("--no-nonlinearity", sa.no_nonlinearity, "Disable the loudspeaker nonlinearity");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train an estimator or the baseline");
  trainc->add_option("--data", ta.data, "Dataset directory")->required();
  trainc->add_option("--out", ta.out, "Output directory")->required();
  trainc->add_option("--config", ta.config, "JSON config file");
  trainc->add_option("--model", ta.model, "mfmvdr or baseline");
  trainc->add_option("--L", ta.L, "Filter length");
  trainc->add_option("--epochs", ta.epochs, "Epochs");
  trainc->add_option("--lr", ta.lr, "Initial learning rate");
  trainc->add_option("--lr-decay", ta.lr_decay, "Per-epoch learning-rate decay");
  trainc->add_option("--clip-norm", ta.clip_norm, "Gradient clipping norm");
  trainc->add_option("--batch-size", ta.batch_size, "Scenes per step");
  trainc->add_option("--hidden", ta.hidden, "TCN channels");
  trainc->add_option("--cgru-hidden", ta.cgru_hidden, "cGRU hidden units");
  trainc->add_option("--baseline-hidden", ta.baseline_hidden, "Baseline GRU hidden units");
  trainc->add_option("--val-fraction", ta.val_fraction, "Held-out fraction");
  trainc->add_option("--seed", ta.seed, "Seed");
  trainc->add_option("--resume", ta.resume, "Checkpoint to continue from");

  EnhanceArgs ea;
  auto* enh = app.add_subcommand("enhance", "Enhance a noisy recording");
  enh->add_option("--mic,--noisy", ea.mic, "Noisy microphone WAV")->required();
  enh->add_option("--far-end", ea.far, "Far-end reference WAV");
  enh->add_option("--out", ea.out, "Output WAV")->required();
  enh->add_option("--checkpoint", ea.checkpoint, "Trained model checkpoint");
  enh->add_flag("--oracle", ea.oracle, "Use oracle statistics from component WAVs");
  enh->add_option("--near", ea.near, "Oracle: near-end speech WAV");
  enh->add_option("--echo", ea.echo, "Oracle: echo WAV");
  enh->add_option("--noise", ea.noise, "Oracle: noise WAV");
  enh->add_option("--L", ea.L, "Oracle filter length");
  enh->add_option("--smoothing", ea.smoothing, "Oracle recursive smoothing factor");
  enh->add_option("--loading", ea.loading, "Oracle diagonal loading");
  enh->add_option("--config", ea.config, "JSON config file");

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Evaluate methods over a dataset");
  ev->add_option("--data", va.data, "Dataset directory")->required();
  ev->add_option("--out", va.out, "Report directory")->required();
  ev->add_option("--methods", va.methods, "passthrough, oracle, oracle-L<n> or checkpoint names")->delimiter(',');
  ev->add_option("--checkpoints", va.checkpoints, "name=path pairs")->delimiter(',');
  ev->add_option("--conditions", va.conditions, "SER grid, e.g. -10,-5,0")->delimiter(',');
  ev->add_option("--snr", va.snr, "SNR [dB] of the grid");
  ev->add_option("--L", va.L, "Filter length for the 'oracle' method");
  ev->add_option("--config", va.config, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(sa);
    if (trainc->parsed()) return run_train(ta);
    if (enh->parsed()) return run_enhance(ea);
    if (ev->parsed()) return run_eval(va);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
