#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mfaes/training.hpp"
#include "mfaes/metrics.hpp"
#include "test_util.hpp"

using namespace mfaes;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CliRun {
  int status = -1;
  std::string out, err;
};

CliRun run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(MFAES_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// Short scenes keep every command fast.
fs::path small_config(const fs::path& dir) {
  const fs::path p = dir / "small.json";
  std::ofstream(p) << R"({"far_len_s": 0.6, "near_len_s": 0.3, "rir_len": 256})";
  return p;
}

}  // namespace

TEST(CliSynth, SameSeedGivesIdenticalManifest) {
  const fs::path d = testkit::scratch_dir("cli_synth_det");
  const std::string cfg = small_config(d).string();
  ASSERT_EQ(run_cli("synth --n 3 --seed 7 --config " + cfg + " --out " + (d / "a").string(), d).status, 0);
  ASSERT_EQ(run_cli("synth --n 3 --seed 7 --config " + cfg + " --out " + (d / "b").string(), d).status, 0);
  EXPECT_EQ(read_file(d / "a" / kManifestName), read_file(d / "b" / kManifestName));
  EXPECT_EQ(read_file(d / "a" / "scene_00002" / "mic.wav"), read_file(d / "b" / "scene_00002" / "mic.wav"));
  ASSERT_EQ(run_cli("synth --n 3 --seed 8 --config " + cfg + " --out " + (d / "c").string(), d).status, 0);
  EXPECT_NE(read_file(d / "a" / kManifestName), read_file(d / "c" / kManifestName));
}

TEST(CliSynth, RangesAndPrecedence) {
  const fs::path d = testkit::scratch_dir("cli_synth_range");
  const fs::path cfg = d / "c.json";
  std::ofstream(cfg) << R"({"far_len_s": 0.6, "near_len_s": 0.3, "rir_len": 256, "n_scenes": 9, "ser_min": 5})";
  ASSERT_EQ(run_cli("synth --n 4 --ser-min -20 --ser-max 10 --config " + cfg.string() + " --out " + (d / "o").string(), d)
                .status,
            0);
  const auto recs = read_manifest((d / "o" / kManifestName).string());
  EXPECT_EQ(recs.size(), 4u);  // flag beats config file
  for (const auto& r : recs) {
    EXPECT_GE(r.ser_db, -20.0);
    EXPECT_LE(r.ser_db, 10.0);
  }
  const auto resolved = nlohmann::json::parse(read_file(d / "o" / "resolved_config.json"));
  EXPECT_EQ(resolved.at("dataset").at("n_scenes"), 4);
  EXPECT_EQ(resolved.at("dataset").at("ser_min"), -20.0);
  EXPECT_EQ(resolved.at("dataset").at("far_len_s"), 0.6);
}

TEST(CliSynth, ZeroScenesIsUsageError) {
  const fs::path d = testkit::scratch_dir("cli_synth_zero");
  const CliRun r = run_cli("synth --n 0 --out " + (d / "o").string(), d);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("n_scenes"), std::string::npos);
}

TEST(CliTrain, TrainsBothModelKinds) {
  const fs::path d = testkit::scratch_dir("cli_train");
  const std::string data = (d / "data").string();
  ASSERT_EQ(run_cli("synth --n 2 --seed 3 --config " + small_config(d).string() + " --out " + data, d).status, 0);
  const CliRun r = run_cli("train --data " + data + " --out " + (d / "m").string() +
                               " --model mfmvdr --L 5 --epochs 1 --hidden 8 --cgru-hidden 4 --val-fraction 0",
                           d);
  ASSERT_EQ(r.status, 0) << r.err;
  const Model m = load_model((d / "m" / kCheckpointName).string());
  EXPECT_EQ(m.estimator().config().L, 5);
  EXPECT_TRUE(fs::exists(d / "m" / kLossLogName));
  EXPECT_TRUE(fs::exists(d / "m" / "resolved_config.json"));

  const CliRun b = run_cli("train --data " + data + " --out " + (d / "b").string() +
                               " --model baseline --epochs 1 --baseline-hidden 8 --val-fraction 0",
                           d);
  ASSERT_EQ(b.status, 0) << b.err;
  EXPECT_EQ(load_model((d / "b" / kCheckpointName).string()).kind(), ModelKind::Baseline);
}

TEST(CliTrain, BadArgumentsFail) {
  const fs::path d = testkit::scratch_dir("cli_train_bad");
  EXPECT_NE(run_cli("train --data " + d.string() + " --out " + (d / "m").string() + " --epochs 0", d).status, 0);
  const CliRun missing = run_cli("train --data " + (d / "none").string() + " --out " + (d / "m").string(), d);
  EXPECT_NE(missing.status, 0);
  EXPECT_NE(missing.err.find("manifest"), std::string::npos);
  EXPECT_NE(run_cli("train --data " + d.string() + " --out " + (d / "m").string() + " --model wiener", d).status, 0);
}

TEST(CliEnhance, OracleOnCleanSceneReturnsNearEnd) {
  const fs::path d = testkit::scratch_dir("cli_enhance_clean");
  const Waveform near = SyntheticSpeechProvider().clip(5, 16000);
  const Waveform zero{std::vector<double>(near.size(), 0.0), kDefaultSampleRate};
  Waveform far = SyntheticSpeechProvider().clip(6, 16000);
  write_wav((d / "near.wav").string(), near);
  write_wav((d / "zero.wav").string(), zero);
  write_wav((d / "far.wav").string(), far);
  const std::string out = (d / "out.wav").string();
  const CliRun r = run_cli("enhance --oracle --mic " + (d / "near.wav").string() + " --far-end " + (d / "far.wav").string() +
                               " --near " + (d / "near.wav").string() + " --echo " + (d / "zero.wav").string() +
                               " --noise " + (d / "zero.wav").string() + " --out " + out,
                           d);
  ASSERT_EQ(r.status, 0) << r.err;
  const Waveform enhanced = read_wav(out);
  const Waveform stored = read_wav((d / "near.wav").string());
  ASSERT_EQ(enhanced.size(), stored.size());
  EXPECT_GE(si_sdr_db(enhanced.samples, stored.samples), 30.0);
  EXPECT_TRUE(fs::exists(out + ".config.json"));
}

TEST(CliEnhance, InputErrors) {
  const fs::path d = testkit::scratch_dir("cli_enhance_err");
  const Waveform w = SyntheticSpeechProvider().clip(1, 4000);
  write_wav((d / "a.wav").string(), w);
  write_wav((d / "hi.wav").string(), Waveform{w.samples, 44100});
  const std::string a = (d / "a.wav").string(), hi = (d / "hi.wav").string(), out = (d / "o.wav").string();

  const CliRun no_far = run_cli("enhance --oracle --mic " + a + " --near " + a + " --echo " + a + " --noise " + a + " --out " + out, d);
  EXPECT_NE(no_far.status, 0);
  EXPECT_NE(no_far.err.find("--far-end"), std::string::npos);

  const CliRun rate = run_cli("enhance --oracle --mic " + hi + " --far-end " + a + " --near " + a + " --echo " + a +
                                  " --noise " + a + " --out " + out,
                              d);
  EXPECT_NE(rate.status, 0);
  EXPECT_NE(rate.err.find("16000"), std::string::npos);

  EXPECT_NE(run_cli("enhance --mic " + a + " --far-end " + a + " --out " + out, d).status, 0);
  EXPECT_FALSE(fs::exists(out));
}

TEST(CliEval, PassthroughAndConditionGrid) {
  const fs::path d = testkit::scratch_dir("cli_eval");
  const std::string data = (d / "data").string();
  ASSERT_EQ(run_cli("synth --n 3 --conditions -10,-5,0 --snr 30 --seed 2 --config " + small_config(d).string() +
                        " --out " + data,
                    d)
                .status,
            0);
  const CliRun r = run_cli("eval --data " + data + " --out " + (d / "r").string() +
                               " --methods passthrough,oracle-L3 --conditions -10,-5,0",
                           d);
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream csv(read_file(d / "r" / "report.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0, pass_rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    if (line.find(",passthrough,") == std::string::npos) continue;
    ++pass_rows;
    const double erle = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_NEAR(erle, 0.0, 1e-9) << line;
  }
  EXPECT_EQ(rows, 6);  // two methods in each of three conditions
  EXPECT_EQ(pass_rows, 3);
  EXPECT_NE(r.out.find("SER -5 / SNR 30"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "r" / "scenes.csv"));
  EXPECT_TRUE(fs::exists(d / "r" / "resolved_config.json"));
}

TEST(CliEval, MethodErrors) {
  const fs::path d = testkit::scratch_dir("cli_eval_err");
  const std::string data = (d / "data").string();
  ASSERT_EQ(run_cli("synth --n 1 --config " + small_config(d).string() + " --out " + data, d).status, 0);
  const std::string base = "eval --data " + data + " --out " + (d / "r").string();
  EXPECT_NE(run_cli(base, d).status, 0);
  EXPECT_NE(run_cli(base + " --methods mystery", d).status, 0);
  EXPECT_NE(run_cli(base + " --methods m --checkpoints m=" + (d / "none.bin").string(), d).status, 0);
}

TEST(Cli, RequiresSubcommand) {
  const fs::path d = testkit::scratch_dir("cli_none");
  EXPECT_NE(run_cli("", d).status, 0);
  EXPECT_NE(run_cli("frobnicate", d).status, 0);
}
