#pragma once

// Evaluation grid: every method on every scene, SI-SDR over the double-talk
// span and ERLE over the single-talk remainder, averaged per condition.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfaes/dataset.hpp"
#include "mfaes/metrics.hpp"

namespace mfaes {

struct Method {
  std::string name;
  std::function<Waveform(const Scene&)> enhance;
};

struct Condition {
  double ser_db = 0.0;
  double snr_db = 30.0;
  bool any = false;  // matches every scene

  std::string label() const {
    if (any) return "all";
    char buf[64];
    std::snprintf(buf, sizeof buf, "SER %g / SNR %g", ser_db, snr_db);
    return buf;
  }
  bool matches(const SceneRecord& r) const {
    return any || (std::abs(r.ser_db - ser_db) < 1e-9 && std::abs(r.snr_db - snr_db) < 1e-9);
  }
};

inline std::vector<Condition> ser_grid(const std::vector<double>& sers, double snr_db = 30.0) {
  std::vector<Condition> out;
  for (double s : sers) out.push_back({s, snr_db, false});
  return out;
}

struct SceneScore {
  int scene = 0;
  std::string condition;
  std::string method;
  double si_sdr_db = 0.0;
  double erle_db = 0.0;
};

struct AggregateRow {
  Condition condition;
  std::string method;
  int scenes = 0;
  double si_sdr_db = 0.0;
  double erle_db = 0.0;
};

struct EvalReport {
  std::vector<SceneScore> scenes;
  std::vector<AggregateRow> rows;  // condition-major, methods in the given order

  const AggregateRow& row(const std::string& method, std::size_t condition_index, std::size_t n_methods) const {
    for (std::size_t m = 0; m < n_methods; ++m) {
      const auto& r = rows.at(condition_index * n_methods + m);
      if (r.method == method) return r;
    }
    throw std::out_of_range("no report row for method " + method);
  }

  std::string csv() const {
    std::ostringstream os;
    os << "condition,ser_db,snr_db,method,scenes,si_sdr_db,erle_db\n";
    for (const auto& r : rows)
      os << r.condition.label() << ',' << (r.condition.any ? std::string() : fmt(r.condition.ser_db)) << ','
         << (r.condition.any ? std::string() : fmt(r.condition.snr_db)) << ',' << r.method << ',' << r.scenes << ','
         << fmt(r.si_sdr_db) << ',' << fmt(r.erle_db) << '\n';
    return os.str();
  }

  std::string scenes_csv() const {
    std::ostringstream os;
    os << "scene,condition,method,si_sdr_db,erle_db\n";
    for (const auto& s : scenes)
      os << s.scene << ',' << s.condition << ',' << s.method << ',' << fmt(s.si_sdr_db) << ',' << fmt(s.erle_db) << '\n';
    return os.str();
  }

  /// Methods as rows, conditions as columns; one block per metric.
  std::string table() const {
    std::vector<std::string> methods, conds;
    for (const auto& r : rows) {
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
      if (std::find(conds.begin(), conds.end(), r.condition.label()) == conds.end()) conds.push_back(r.condition.label());
    }
    std::size_t w0 = 6;
    for (const auto& m : methods) w0 = std::max(w0, m.size());
    std::size_t wc = 10;
    for (const auto& c : conds) wc = std::max(wc, c.size());

    std::ostringstream os;
    for (int metric = 0; metric < 2; ++metric) {
      os << (metric == 0 ? "SI-SDR [dB], double talk\n" : "ERLE [dB], single talk\n");
      os << pad("method", w0);
      for (const auto& c : conds) os << "  " << pad(c, wc);
      os << '\n';
      for (const auto& m : methods) {
        os << pad(m, w0);
        for (const auto& c : conds)
          for (const auto& r : rows)
            if (r.method == m && r.condition.label() == c) {
              char buf[32];
              std::snprintf(buf, sizeof buf, "%.3f", metric == 0 ? r.si_sdr_db : r.erle_db);
              os << "  " << pad(buf, wc);
            }
        os << '\n';
      }
      if (metric == 0) os << '\n';
    }
    return os.str();
  }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
  }
  static std::string pad(const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); }
};

/// Scores one enhanced signal against its scene.
inline SceneScore score_scene(const Scene& sc, const Waveform& est) {
  if (est.size() != sc.size()) throw std::invalid_argument("evaluate: enhanced length differs from the scene");
  const auto b = static_cast<std::ptrdiff_t>(sc.near_begin), e = static_cast<std::ptrdiff_t>(sc.near_end);
  SceneScore s;
  s.si_sdr_db = si_sdr_db(std::span(est.samples).subspan(b, e - b), std::span(sc.near.samples).subspan(b, e - b));
  std::vector<double> mic_st, est_st;
  for (std::size_t i = 0; i < sc.size(); ++i)
    if (i < sc.near_begin || i >= sc.near_end) {
      mic_st.push_back(sc.mic.samples[i]);
      est_st.push_back(est.samples[i]);
    }
  s.erle_db = erle_db(mic_st, est_st);
  return s;
}

/// `load` returns the scene for a record. A condition without scenes is an
/// error, as is an empty method list.
inline EvalReport evaluate(const std::vector<Method>& methods, const std::vector<SceneRecord>& records,
                           const std::function<Scene(const SceneRecord&)>& load, std::vector<Condition> conditions) {
  if (methods.empty()) throw std::invalid_argument("evaluate: no methods given");
  if (records.empty()) throw std::invalid_argument("evaluate: empty manifest");
  if (conditions.empty()) conditions.push_back({0.0, 0.0, true});

  EvalReport rep;
  for (const auto& cond : conditions) {
    std::vector<AggregateRow> agg(methods.size());
    for (const auto& r : records) {
      if (!cond.matches(r)) continue;
      const Scene sc = load(r);
      for (std::size_t m = 0; m < methods.size(); ++m) {
        SceneScore s = score_scene(sc, methods[m].enhance(sc));
        s.scene = r.index;
        s.condition = cond.label();
        s.method = methods[m].name;
        agg[m].si_sdr_db += s.si_sdr_db;
        agg[m].erle_db += s.erle_db;
        ++agg[m].scenes;
        rep.scenes.push_back(std::move(s));
      }
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      if (agg[m].scenes == 0) throw std::invalid_argument("evaluate: no scenes for condition " + cond.label());
      agg[m].condition = cond;
      agg[m].method = methods[m].name;
      agg[m].si_sdr_db /= agg[m].scenes;
      agg[m].erle_db /= agg[m].scenes;
      rep.rows.push_back(agg[m]);
    }
  }
  return rep;
}

}  // namespace mfaes
