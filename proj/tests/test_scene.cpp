#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mfaes/dataset.hpp"
#include "test_util.hpp"

using namespace mfaes;

namespace {

SceneConfig quick_config(double ser, double snr, std::uint64_t seed = 3) {
  SceneConfig c;
  c.ser_db = ser;
  c.snr_db = snr;
  c.seed = seed;
  c.rir.len_samples = 512;
  return c;
}

Scene quick_scene(double ser = 0.0, double snr = 30.0, std::uint64_t seed = 3) {
  SyntheticSpeechProvider p;
  return make_scene(p.clip(11, 32000), p.clip(12, 64000), quick_config(ser, snr, seed));
}

}  // namespace

TEST(SynthRir, UnitLengthIsUnitTap) {
  const auto h = synth_rir(250.0, 1, 1);
  ASSERT_EQ(h.size(), 1u);
  EXPECT_DOUBLE_EQ(h[0], 1.0);
}

TEST(SynthRir, UnitEnergy) {
  const auto h = synth_rir(300.0, 4096, 2);
  EXPECT_NEAR(energy(h), 1.0, 1e-9);
}

TEST(SynthRir, EnvelopeIsMinusSixtyDecibelsAtT60) {
  const double t60 = 200.0;
  const int n60 = 3200;  // t60 * fs / 1000
  const auto h = synth_rir(t60, n60 + 1, 5);
  // Regenerate the Gaussian draws to undo the random sign and magnitude.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> g(n60 + 1);
  for (int n = 1; n <= n60; ++n) g[n] = gauss(rng);
  const double scale = h[0];  // 1 / norm
  EXPECT_NEAR(h[n60] / (scale * g[n60]), 1e-3, 1e-12);
  EXPECT_THROW(synth_rir(0.0, 10, 1), std::invalid_argument);
  EXPECT_THROW(synth_rir(100.0, 0, 1), std::invalid_argument);
}

TEST(Nonlinearity, ZeroInZeroOut) {
  const Waveform y = apply_nonlinearity(Waveform{std::vector<double>(10, 0.0), 16000});
  for (double v : y.samples) EXPECT_EQ(v, 0.0);
}

TEST(Nonlinearity, RegressionConstant) {
  const Waveform y = apply_nonlinearity(Waveform{{0.5}, 16000});
  // c = 0.4, b = 0.552, a = 4
  EXPECT_NEAR(y.samples[0], 0.8019312334505895, 1e-12);
  EXPECT_NEAR(y.samples[0], 2.0 / (1.0 + std::exp(-4.0 * 0.552)) - 1.0, 1e-15);
}

TEST(Nonlinearity, BoundedAndMonotoneOnClipRange) {
  Waveform x{std::vector<double>(2001), 16000};
  for (int i = 0; i <= 2000; ++i) x.samples[i] = -1.0 + i / 1000.0;
  const Waveform y = apply_nonlinearity(x);
  for (double v : y.samples) EXPECT_LT(std::abs(v), 1.0);
  // b(x) = 1.5x - 0.3x^2 increases on [0, 0.8]
  for (int i = 1000; i < 1800; ++i) EXPECT_GT(y.samples[i + 1], y.samples[i]);
}

TEST(MakeScene, ComponentsAreAdditive) {
  const Scene sc = quick_scene();
  ASSERT_EQ(sc.mic.size(), 64000u);
  for (std::size_t i = 0; i < sc.size(); ++i)
    EXPECT_NEAR(sc.mic.samples[i] - sc.near.samples[i] - sc.echo.samples[i] - sc.noise.samples[i], 0.0, 1e-12);
}

TEST(MakeScene, HitsRequestedRatios) {
  for (double ser : {-20.0, -5.0, 0.0, 10.0}) {
    const Scene sc = quick_scene(ser, 30.0);
    EXPECT_NEAR(measured_ser_db(sc), ser, 0.01);
    EXPECT_NEAR(measured_snr_db(sc), 30.0, 0.01);
  }
}

TEST(MakeScene, NearEndIsCentred) {
  const Scene sc = quick_scene();
  EXPECT_EQ(sc.near_begin, 16000u);
  EXPECT_EQ(sc.near_end, 48000u);
  for (std::size_t i = 0; i < sc.near_begin; ++i) ASSERT_EQ(sc.near.samples[i], 0.0);
  for (std::size_t i = sc.near_end; i < sc.size(); ++i) ASSERT_EQ(sc.near.samples[i], 0.0);
}

TEST(MakeScene, Deterministic) {
  const Scene a = quick_scene(-3.0, 20.0, 9), b = quick_scene(-3.0, 20.0, 9);
  EXPECT_EQ(a.mic.samples, b.mic.samples);
  EXPECT_EQ(a.echo.samples, b.echo.samples);
  const Scene c = quick_scene(-3.0, 20.0, 10);
  EXPECT_NE(a.noise.samples, c.noise.samples);
}

TEST(MakeScene, ImpulseEchoIsTheRir) {
  // The impulse sits inside the near-end span so the SER scaling sees echo energy.
  Waveform far{std::vector<double>(4000, 0.0), 16000};
  far.samples[1000] = 1.0;
  Waveform near{std::vector<double>(2000, 0.0), 16000};
  for (std::size_t i = 0; i < near.size(); ++i) near.samples[i] = 0.01 * std::sin(0.05 * static_cast<double>(i));
  SceneConfig c = quick_config(0.0, 60.0);
  c.far_len_s = 0.25;
  c.near_len_s = 0.125;
  c.nonlinearity.enabled = false;
  c.peak_limit = 10.0;
  const Scene sc = make_scene(near, far, c);
  const auto h = synth_rir(c.rir.t60_ms, c.rir.len_samples, derive_seed(c.seed, 1));
  // Echo is the RIR shifted to the impulse, up to the SER gain.
  const double gain = sc.echo.samples[1000] / h[0];
  for (std::size_t n = 0; n < 512; ++n) EXPECT_NEAR(sc.echo.samples[1000 + n], round_to_float(gain * h[n]), 1e-7);
  for (std::size_t n = 0; n < 1000; ++n) EXPECT_EQ(sc.echo.samples[n], 0.0);
}

TEST(MakeScene, ConvolutionMatchesDirectSum) {
  const std::vector<double> x{1.0, -2.0, 0.5, 3.0}, h{0.5, 0.25};
  const auto y = convolve_truncated(x, h);
  const std::vector<double> ref{0.5, -0.75, -0.25, 1.625};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], ref[i], 1e-15);
}

TEST(MakeScene, SilentNearEndIsAnError) {
  SyntheticSpeechProvider p;
  EXPECT_THROW(make_scene(Waveform{std::vector<double>(32000, 0.0), 16000}, p.clip(1, 64000), quick_config(0, 30)),
               std::invalid_argument);
  EXPECT_THROW(make_scene(p.clip(1, 32000), Waveform{std::vector<double>(64000, 0.0), 16000}, quick_config(0, 30)),
               std::invalid_argument);
}

TEST(SyntheticSpeech, DeterministicAndNormalized) {
  SyntheticSpeechProvider p;
  const Waveform a = p.clip(42, 16000), b = p.clip(42, 16000);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NEAR(std::sqrt(energy(a.samples) / 16000.0), 0.05, 1e-12);
}

TEST(Dataset, DrawsStayInRange) {
  DatasetConfig c;
  c.n_scenes = 5;
  c.seed = 4;
  for (const auto& r : draw_records(c)) {
    EXPECT_GE(r.ser_db, -20.0);
    EXPECT_LE(r.ser_db, 10.0);
    EXPECT_GE(r.snr_db, 10.0);
    EXPECT_LE(r.snr_db, 40.0);
  }
  c.n_scenes = 0;
  EXPECT_THROW(draw_records(c), std::invalid_argument);
}

TEST(Dataset, ConditionGridCycles) {
  DatasetConfig c;
  c.n_scenes = 6;
  c.ser_conditions = {-10, -5, 0};
  const auto recs = draw_records(c);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(recs[i].ser_db, c.ser_conditions[i % 3]);
    EXPECT_EQ(recs[i].snr_db, 30.0);
  }
}

TEST(Dataset, ManifestRegeneratesScenes) {
  const auto dir = testkit::scratch_dir("dataset_regen");
  DatasetConfig c;
  c.n_scenes = 2;
  c.seed = 8;
  c.far_len_s = 1.0;
  c.near_len_s = 0.5;
  make_dataset(c, dir);
  const auto recs = read_manifest(dir + "/" + kManifestName);
  ASSERT_EQ(recs.size(), 2u);
  const DatasetConfig back = read_dataset_config(dir);
  EXPECT_EQ(to_json(back), to_json(c));
  const auto provider = make_provider(back);
  for (const auto& r : recs) {
    const Scene loaded = load_scene(r, dir, back);
    const Scene regen = render_scene(r, back, *provider);
    EXPECT_EQ(loaded.near.samples, regen.near.samples);
    EXPECT_EQ(loaded.echo.samples, regen.echo.samples);
    EXPECT_EQ(loaded.noise.samples, regen.noise.samples);
    EXPECT_EQ(loaded.near_begin, regen.near_begin);
    for (std::size_t i = 0; i < loaded.size(); ++i) EXPECT_NEAR(loaded.mic.samples[i], regen.mic.samples[i], 1e-12);
  }
}

TEST(Dataset, WavDirectoryProvider) {
  const auto dir = testkit::scratch_dir("clipdir");
  Waveform w{std::vector<double>(3000), 16000};
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] = 0.1 * std::sin(0.01 * static_cast<double>(i));
  write_wav(dir + "/a.wav", w);
  WavDirectoryProvider p(dir);
  EXPECT_EQ(p.size(), 1u);
  const Waveform c = p.clip(3, 5000);
  ASSERT_EQ(c.size(), 5000u);
  EXPECT_EQ(c.samples, p.clip(3, 5000).samples);
  EXPECT_THROW(WavDirectoryProvider(dir + "/none"), std::runtime_error);
  const auto empty = testkit::scratch_dir("clipdir_empty");
  EXPECT_THROW((void)WavDirectoryProvider(empty), std::runtime_error);
}
