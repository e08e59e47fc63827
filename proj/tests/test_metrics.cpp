#include <gtest/gtest.h>

#include <cmath>

#include "mfaes/evaluation.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace mfaes;

namespace {

// A hand-built scene: near-end speech in [4, 8), echo everywhere.
Scene toy_scene() {
  Scene sc;
  const std::vector<double> near{0, 0, 0, 0, 1.0, -2.0, 0.5, 1.5, 0, 0};
  const std::vector<double> echo{0.3, -0.2, 0.1, 0.4, 0.2, 0.1, -0.3, 0.2, -0.1, 0.5};
  sc.near = {near, kDefaultSampleRate};
  sc.echo = {echo, kDefaultSampleRate};
  sc.noise = {std::vector<double>(10, 0.0), kDefaultSampleRate};
  sc.far = sc.echo;
  sc.mic = mix(sc.near, sc.echo, sc.noise);
  sc.near_begin = 4;
  sc.near_end = 8;
  return sc;
}

}  // namespace

TEST(SiSdr, OrthogonalErrorOracle) {
  // ref = [1, 0], est = [1, 1]: target [1, 0], error [0, 1] -> 0 dB.
  EXPECT_NEAR(si_sdr_db(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 0.0}), 0.0, 1e-7);
  // est = [2, 1]: alpha = 2, target [2, 0], error [0, 1] -> 10 log10(4).
  EXPECT_NEAR(si_sdr_db(std::vector<double>{2.0, 1.0}, std::vector<double>{1.0, 0.0}), 10.0 * std::log10(4.0), 1e-7);
}

TEST(SiSdr, ScaleAndSignInvariant) {
  const auto ref = testkit::random_values(100, 1);
  auto est = testkit::random_values(100, 2, 0.5);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += ref[i];
  const double base = si_sdr_db(est, ref);
  for (double c : {-1.0, 0.1, 30.0}) {
    auto scaled = est;
    for (double& v : scaled) v *= c;
    EXPECT_NEAR(si_sdr_db(scaled, ref), base, 1e-6) << c;
  }
}

TEST(SiSdr, PerfectEstimateLimitedByEpsilon) {
  const std::vector<double> ref{0.5, -0.5, 1.0, 0.0};
  EXPECT_NEAR(si_sdr_db(ref, ref), 10.0 * std::log10(1.5 / kSiSdrEps), 1e-9);
}

TEST(SiSdr, RejectsBadInput) {
  EXPECT_THROW(si_sdr_db(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(si_sdr_db(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}), std::invalid_argument);
}

TEST(Erle, KnownAttenuation) {
  const auto mic = testkit::random_values(50, 3);
  auto est = mic;
  for (double& v : est) v *= 0.1;
  EXPECT_NEAR(erle_db(mic, est), 20.0, 1e-9);
  EXPECT_NEAR(erle_db(mic, mic), 0.0, 1e-9);
}

TEST(Erle, SilentOutputLimitedByEpsilon) {
  const std::vector<double> mic{1.0, 1.0}, est{0.0, 0.0};
  EXPECT_NEAR(erle_db(mic, est), 10.0 * std::log10(2.0 / kErleEps), 1e-9);
  EXPECT_THROW(erle_db(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(erle_db(mic, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(ScoreScene, SplitsDoubleTalkAndSingleTalk) {
  const Scene sc = toy_scene();
  const SceneScore pass = score_scene(sc, sc.mic);
  EXPECT_NEAR(pass.erle_db, 0.0, 1e-9);
  std::vector<double> m(sc.mic.samples.begin() + 4, sc.mic.samples.begin() + 8);
  std::vector<double> s(sc.near.samples.begin() + 4, sc.near.samples.begin() + 8);
  EXPECT_NEAR(pass.si_sdr_db, si_sdr_db(m, s), 1e-12);

  // Removing the echo exactly: clean double talk, silent single talk.
  const SceneScore ideal = score_scene(sc, sc.near);
  EXPECT_GT(ideal.si_sdr_db, 70.0);
  EXPECT_GT(ideal.erle_db, 100.0);
  EXPECT_THROW(score_scene(sc, Waveform{std::vector<double>(9), kDefaultSampleRate}), std::invalid_argument);
}

TEST(Evaluate, AggregatesPerConditionAndMethod) {
  std::vector<SceneRecord> recs(4);
  for (int i = 0; i < 4; ++i) {
    recs[i].index = i;
    recs[i].ser_db = i % 2 == 0 ? -10.0 : 0.0;
    recs[i].snr_db = 30.0;
  }
  auto load = [](const SceneRecord& r) {
    Scene sc = toy_scene();
    for (double& v : sc.echo.samples) v *= 1.0 + r.index;
    sc.mic = mix(sc.near, sc.echo, sc.noise);
    return sc;
  };
  const std::vector<Method> methods{{"passthrough", [](const Scene& sc) { return sc.mic; }},
                                    {"half", [](const Scene& sc) {
                                       Waveform w = sc.mic;
                                       for (double& v : w.samples) v *= 0.5;
                                       return w;
                                     }}};
  const EvalReport rep = evaluate(methods, recs, load, ser_grid({-10.0, 0.0}));
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.scenes.size(), 8u);
  const AggregateRow& half = rep.row("half", 1, 2);
  EXPECT_EQ(half.scenes, 2);
  EXPECT_NEAR(half.erle_db, 10.0 * std::log10(4.0), 1e-9);
  const AggregateRow& pass = rep.row("passthrough", 0, 2);
  const double expect = 0.5 * (score_scene(load(recs[0]), load(recs[0]).mic).si_sdr_db +
                               score_scene(load(recs[2]), load(recs[2]).mic).si_sdr_db);
  EXPECT_NEAR(pass.si_sdr_db, expect, 1e-12);
  EXPECT_NEAR(pass.erle_db, 0.0, 1e-9);

  const std::string csv = rep.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "condition,ser_db,snr_db,method,scenes,si_sdr_db,erle_db");
  EXPECT_NE(csv.find("SER -10 / SNR 30,-10.000000,30.000000,half,2,"), std::string::npos);
  const std::string table = rep.table();
  EXPECT_NE(table.find("SI-SDR"), std::string::npos);
  EXPECT_NE(table.find("ERLE"), std::string::npos);
  EXPECT_NE(table.find("SER 0 / SNR 30"), std::string::npos);
}

TEST(Evaluate, ErrorsAndDefaultCondition) {
  std::vector<SceneRecord> recs(1);
  recs[0].ser_db = 5.0;
  auto load = [](const SceneRecord&) { return toy_scene(); };
  const std::vector<Method> pass{{"passthrough", [](const Scene& sc) { return sc.mic; }}};
  EXPECT_THROW(evaluate({}, recs, load, {}), std::invalid_argument);
  EXPECT_THROW(evaluate(pass, {}, load, {}), std::invalid_argument);
  EXPECT_THROW(evaluate(pass, recs, load, ser_grid({-10.0})), std::invalid_argument);
  const EvalReport rep = evaluate(pass, recs, load, {});
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].condition.label(), "all");
}
