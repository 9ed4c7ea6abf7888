#include <algorithm>
#include <cmath>
#include <cstring>

#include <doctest.h>

#include "somno/detect.hpp"
#include "somno/dsp.hpp"
#include "somno/errors.hpp"
#include "somno/eval.hpp"
#include "somno/synth.hpp"
#include "test_util.hpp"

using namespace somno;
using namespace somno::synth;

namespace {

bool bit_identical(const Recording& a, const Recording& b) {
  if (a.channels.size() != b.channels.size()) return false;
  for (const auto& [name, ts] : a.channels) {
    if (!b.has(name)) return false;
    const auto& other = b.at(name).samples;
    if (other.size() != ts.samples.size()) return false;
    if (std::memcmp(other.data(), ts.samples.data(), other.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("profile validation and config") {
    SynthProfile p;
    CHECK_NOTHROW(p.validate());
    p.target_ahi = -1;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.apnea_fraction = 1.5;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.breath_hz = 0.5;
    CHECK_THROWS_AS(p.validate(), InputError);

    const auto c = SynthProfile::from_config(KeyValueConfig::parse(
        "duration_h = 2\ntarget_ahi = 12\nposition_schedule = 0:left,3600:prone\nwake_bouts = 0:300,4000:120\n"));
    CHECK(c.duration_h == 2.0);
    CHECK(c.target_ahi == 12.0);
    REQUIRE(c.position_schedule.size() == 2);
    CHECK(c.position_schedule[1].second == PositionLabel::prone);
    REQUIRE(c.wake_bouts.size() == 2);
    CHECK(c.wake_bouts[1].dur_s == 120.0);
    CHECK_THROWS_AS(SynthProfile::from_config(KeyValueConfig::parse("breath_rate = 0.3\n")), InputError);
    CHECK_THROWS_AS(SynthProfile::from_config(KeyValueConfig::parse("position_schedule = 0:sideways\n")), InputError);
  }

  TEST_CASE("event count follows the target") {
    SynthProfile p;
    p.duration_h = 6;
    p.wake_bouts = {};
    p.target_ahi = 20;
    p.seed = 5;
    const auto r = generate_recording(p, false);
    CHECK(r.hypnogram.total_sleep_s() == 6 * 3600.0);
    CHECK(r.truth.size() == 120);
    CHECK(std::abs(detect::compute_ahi(r.truth, r.hypnogram) - 20.0) <= 0.1);

    SynthProfile q;
    q.duration_h = 6 + 600.0 / 3600.0;
    q.target_ahi = 20;
    q.seed = 6;
    const auto s = generate_recording(q, false);
    CHECK(s.hypnogram.total_sleep_s() == 6 * 3600.0);
    CHECK(s.truth.size() == 120);
  }

  TEST_CASE("truth events are spaced and asleep") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SynthProfile p;
      p.duration_h = 3;
      p.target_ahi = 10.0 + 2.0 * static_cast<double>(seed);
      p.wake_bouts = {{0, 600}, {5000, 240}};
      p.seed = seed;
      const auto r = generate_recording(p, false);
      for (std::size_t i = 0; i < r.truth.size(); ++i) {
        const auto& e = r.truth[i];
        CHECK(e.duration_s() >= kMinEventS);
        CHECK(e.duration_s() <= kMaxEventS);
        CHECK(detect::mostly_asleep(e, r.hypnogram));
        CHECK(r.hypnogram.sleep_overlap_s(e.start_s, e.end_s) == doctest::Approx(e.duration_s()));
        if (i > 0) CHECK(e.start_s - r.truth[i - 1].end_s >= kEventGapS - 1e-9);
      }
      const double ahi = detect::compute_ahi(r.truth, r.hypnogram);
      CHECK(std::abs(ahi - p.target_ahi) <= 1.0);
    }
  }

  TEST_CASE("infeasible targets") {
    SynthProfile p;
    p.duration_h = 2;
    p.target_ahi = 90;
    CHECK_THROWS_WITH_SUBSTR(generate_recording(p, false), ComputeError, "maximum feasible AHI is");
  }

  TEST_CASE("same seed gives identical recordings") {
    SynthProfile p;
    p.duration_h = 0.5;
    p.target_ahi = 20;
    p.seed = 99;
    const auto a = generate_recording(p);
    const auto b = generate_recording(p);
    CHECK(bit_identical(a.recording, b.recording));
    CHECK(a.truth == b.truth);
    CHECK(a.hypnogram == b.hypnogram);
    const auto lean = generate_recording(p, false);
    CHECK(lean.truth == a.truth);
    CHECK(lean.hypnogram == a.hypnogram);
    p.seed = 100;
    CHECK_FALSE(bit_identical(generate_recording(p).recording, a.recording));

    for (const char* axis : {"accel.x", "accel.y", "accel.z"}) CHECK(a.recording.at(axis).resolution == 4e-5);
    CHECK(a.recording.at("audio_power").rate_hz == 40.0);
    CHECK(a.recording.at("accel.x").rate_hz == 100.0);
  }

  TEST_CASE("no events gives a steady envelope") {
    SynthProfile p;
    p.duration_h = 1;
    p.target_ahi = 0;
    p.seed = 3;
    const auto r = generate_recording(p);
    CHECK(r.truth.empty());
    const TimeSeries env = dsp::resp_envelope(r.recording.triaxial("accel"));
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < env.size(); ++k) {
      const double t = env.time_of(k);
      if (t < 700 || t > 3500) continue;
      sum += env.samples[k];
      sq += env.samples[k] * env.samples[k];
      ++n;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
    CHECK(sd / mean < 0.2);
  }

  TEST_CASE("annotation degradation") {
    std::vector<RespEvent> truth;
    for (int i = 0; i < 1000; ++i) truth.push_back({EventType::obstructive_apnea, 100.0 + 60 * i, 115.0 + 60 * i});
    CHECK(degrade_annotations(truth, {}, 1, 0, 60000) == truth);
    CHECK(degrade_annotations(truth, {1.0, 0.0, 0.0}, 1, 0, 60000).empty());

    double kept = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) kept += degrade_annotations(truth, {0.2, 0.0, 0.0}, seed, 0, 60000).size();
    CHECK(std::abs(kept / 10000.0 - 0.8) <= 0.03);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double k = degrade_annotations(truth, {0.2, 0.0, 0.0}, seed, 0, 60000).size() / 1000.0;
      CHECK(std::abs(k - 0.8) <= 0.05);
    }

    const auto jittered = degrade_annotations(truth, {0.0, 0.0, 5.0}, 2, 0, 60000);
    REQUIRE(jittered.size() == truth.size());
    for (std::size_t i = 0; i < jittered.size(); ++i) {
      CHECK(jittered[i].duration_s() >= 10.0 - 1e-9);
      if (i > 0) CHECK(jittered[i].start_s >= jittered[i - 1].start_s);
    }

    const auto inserted = degrade_annotations({}, {0.0, 6.0, 0.0}, 3, 0, 36000);
    CHECK(inserted.size() > 30);
    CHECK(inserted.size() < 95);
    for (const auto& e : inserted) CHECK(e.kind == EventType::obstructive_hypopnea);
    CHECK(degrade_annotations(truth, {0.3, 2.0, 3.0}, 4, 0, 60000) == degrade_annotations(truth, {0.3, 2.0, 3.0}, 4, 0, 60000));
    CHECK_THROWS_AS(degrade_annotations(truth, {1.5, 0, 0}, 1, 0, 1), InputError);
  }

  TEST_CASE("perfect cohort evaluates to perfect agreement") {
    CohortOptions o;
    o.base.duration_h = 5;
    const Cohort c = generate_cohort(10, uniform_ahi_sampler(0, 50), o, 42);
    CHECK(c.patients.size() == 10);
    CHECK(c.reference_source == "truth");
    CHECK(c.candidate_source == "degraded");
    CHECK(c.patients[3].id == "P003");
    eval::EvalOptions eo;
    eo.bootstrap.n_resamples = 200;
    const auto r = eval::evaluate_cohort(c, eo);
    CHECK(r.icc->icc == 1.0);
    CHECK(r.bland_altman->bias == 0.0);
    for (const auto& p : r.pairs) CHECK(p.ref == p.cand);
  }

  TEST_CASE("cohort sampler spread") {
    CohortOptions o;
    const Cohort c = generate_cohort(44, cohort_ahi_sampler(), o, 7);
    std::vector<double> ahis;
    for (const auto& p : c.patients) ahis.push_back(p.ahi.at("truth"));
    const double med = median(ahis);
    CHECK(med >= 20.0);
    CHECK(med <= 32.0);
  }

  TEST_CASE("cohorts are seed determined") {
    CohortOptions o;
    o.base.duration_h = 4;
    o.degradation = {0.1, 2.0, 3.0};
    const Cohort a = generate_cohort(6, cohort_ahi_sampler(), o, 8);
    const Cohort b = generate_cohort(6, cohort_ahi_sampler(), o, 8);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.patients[i].ahi == b.patients[i].ahi);
      CHECK(a.patients[i].annotations == b.patients[i].annotations);
    }
    const Cohort c = generate_cohort(6, cohort_ahi_sampler(), o, 9);
    bool differs = false;
    for (std::size_t i = 0; i < 6; ++i) differs |= a.patients[i].ahi != c.patients[i].ahi;
    CHECK(differs);
    CHECK_THROWS_AS(generate_cohort(0, cohort_ahi_sampler(), o, 1), InputError);
  }
}
