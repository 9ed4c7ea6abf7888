#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "somno/dsp.hpp"
#include "somno/errors.hpp"
#include "test_util.hpp"

using namespace somno;
using std::numbers::pi;

namespace {

TimeSeries sine(double f_hz, double amp, double rate_hz, double seconds, double phase = 0.0) {
  TimeSeries s;
  s.rate_hz = rate_hz;
  const auto n = static_cast<std::size_t>(seconds * rate_hz);
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = amp * std::sin(2 * pi * f_hz * i / rate_hz + phase);
  return s;
}

TimeSeries constant(double v, double rate_hz, std::size_t n) {
  TimeSeries s;
  s.rate_hz = rate_hz;
  s.samples.assign(n, v);
  return s;
}

double peak_after(const TimeSeries& s, double from_s) {
  double m = 0.0;
  for (std::size_t i = static_cast<std::size_t>(from_s * s.rate_hz); i < s.size(); ++i)
    m = std::max(m, std::abs(s.samples[i]));
  return m;
}

bool on_grid(const TimeSeries& s, double r) {
  for (double v : s.samples) {
    const double q = v / r;
    if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, std::abs(q))) return false;
  }
  return true;
}

TriaxialSeries triaxial(TimeSeries x, TimeSeries y, TimeSeries z) { return {std::move(x), std::move(y), std::move(z)}; }

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("bandpass response") {
    const TimeSeries dc = dsp::bandpass(constant(1.0, 100, 6000), 0.1, 1.0);
    CHECK(peak_after(dc, 10.0) < 1e-3);

    const double pass = peak_after(dsp::bandpass(sine(0.3, 1.0, 100, 120), 0.1, 1.0), 60.0);
    CHECK(pass >= 0.9);
    CHECK(pass <= 1.0);
    CHECK(20 * std::log10(pass) >= -1.0);

    const double stop = peak_after(dsp::bandpass(sine(5.0, 1.0, 100, 120), 0.1, 1.0), 60.0);
    CHECK(stop <= 0.1);

    CHECK(dsp::transient_samples(100, 0.1) == 1000);
  }

  TEST_CASE("bandpass is linear") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d(0.0, 1.0);
    TimeSeries s = constant(0.0, 100, 3000);
    for (double& v : s.samples) v = d(rng);
    const TimeSeries a = dsp::bandpass(s, 0.1, 1.0);
    TimeSeries scaled = s;
    for (double& v : scaled.samples) v *= -3.7;
    const TimeSeries b = dsp::bandpass(scaled, 0.1, 1.0);
    double max_a = 0.0;
    for (double v : a.samples) max_a = std::max(max_a, std::abs(v));
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(b.samples[i] + 3.7 * a.samples[i]) <= 1e-9 * 3.7 * max_a);
  }

  TEST_CASE("bandpass corner validation") {
    const TimeSeries s = constant(0.0, 100, 10);
    CHECK_THROWS_AS(dsp::bandpass(s, 0.0, 1.0), InputError);
    CHECK_THROWS_AS(dsp::bandpass(s, 1.0, 0.5), InputError);
    CHECK_THROWS_AS(dsp::bandpass(s, 0.1, 50.0), InputError);
    CHECK_THROWS_AS(dsp::bandpass(s, -0.1, 1.0), InputError);
  }

  TEST_CASE("activity worked example") {
    TimeSeries x = constant(0.0, 100, 3), y = constant(0.0, 100, 3), z = constant(1.0, 100, 3);
    x.samples = {0.1, 0.1, 0.4};
    y.samples = {0.0, 0.0, 0.3};
    const TimeSeries a = dsp::activity(triaxial(x, y, z));
    REQUIRE(a.size() == 1);
    CHECK(a.rate_hz == 1.0);
    CHECK(a.samples[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(oracle::activity_steps(x.samples, y.samples)[0] == doctest::Approx(4.0).epsilon(1e-12));
  }

  TEST_CASE("activity constant and clipping") {
    const TimeSeries c = dsp::activity(triaxial(constant(0.3, 100, 500), constant(-0.2, 100, 500), constant(0.9, 100, 500)));
    CHECK(c.size() == 5);
    for (double v : c.samples) CHECK(v == 0.0);

    TimeSeries x = constant(0.0, 100, 200);
    for (std::size_t i = 150; i < 200; ++i) x.samples[i] = 1.5;
    const TimeSeries j = dsp::activity(triaxial(x, constant(0.0, 100, 200), constant(1.0, 100, 200)));
    CHECK(j.samples[0] == 0.0);
    CHECK(j.samples[1] == 10.0);
  }

  TEST_CASE("activity matches the step oracle") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> d(0.0, 0.2);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 100 * (5 + trial) + 37 * (trial % 3);
      TimeSeries x = constant(0.0, 100, n), y = constant(0.0, 100, n), z = constant(1.0, 100, n);
      for (std::size_t i = 0; i < n; ++i) {
        x.samples[i] = d(rng);
        y.samples[i] = d(rng);
      }
      const TimeSeries a = dsp::activity(triaxial(x, y, z));
      const auto expected = oracle::activity_steps(x.samples, y.samples);
      REQUIRE(a.size() == expected.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i] == expected[i]);
        CHECK(a.samples[i] >= 0.0);
        CHECK(a.samples[i] <= 10.0);
      }
      CHECK(on_grid(a, dsp::kActivityResolution));
    }
  }

  TEST_CASE("activity rejects other rates") {
    CHECK_THROWS_AS(dsp::activity(triaxial(constant(0, 50, 100), constant(0, 50, 100), constant(0, 50, 100))), InputError);
  }

  TEST_CASE("audio power") {
    const TimeSeries full = dsp::audio_power(sine(200.0, 1.0, 8000, 1.0));
    REQUIRE(full.size() == 40);
    CHECK(full.rate_hz == 40.0);
    for (double v : full.samples) CHECK(std::abs(v + 3.0103) <= 0.01);

    const TimeSeries silent = dsp::audio_power(constant(0.0, 8000, 8000));
    for (double v : silent.samples) CHECK(v == -96.0);

    const TimeSeries half = dsp::audio_power(constant(0.5, 8000, 800));
    for (double v : half.samples) CHECK(std::abs(v + 6.0206) <= 4e-3);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TimeSeries noise = constant(0.0, 8000, 16000);
    for (std::size_t i = 0; i < noise.size(); ++i) noise.samples[i] = u(rng) * std::pow(10.0, -double(i / 2000));
    const TimeSeries p = dsp::audio_power(noise);
    for (double v : p.samples) {
      CHECK(v >= -96.0);
      CHECK(v <= 0.0);
    }
    CHECK(on_grid(p, dsp::kAudioPowerResolution));

    CHECK_THROWS_AS(dsp::audio_power(constant(0.1, 16000, 400)), InputError);
    CHECK_THROWS_AS(dsp::audio_power(constant(1.5, 8000, 400)), InputError);
  }

  TEST_CASE("position labels") {
    CHECK(dsp::classify_gravity(0, 0, 1, PositionLabel::left) == PositionLabel::supine);
    CHECK(dsp::classify_gravity(0, 0, -1, PositionLabel::left) == PositionLabel::prone);
    CHECK(dsp::classify_gravity(0, 1, 0, PositionLabel::left) == PositionLabel::upright);
    CHECK(dsp::classify_gravity(0, -1, 0, PositionLabel::left) == PositionLabel::upright);
    CHECK(dsp::classify_gravity(0.9, 0, 0.3, PositionLabel::supine) == PositionLabel::left);
    CHECK(dsp::classify_gravity(-1, 0, 0, PositionLabel::supine) == PositionLabel::right);
    // 0.5 / |(0.5, 0.5, 0.5)| < 0.6: nothing dominates.
    CHECK(dsp::classify_gravity(0.5, 0.5, 0.5, PositionLabel::prone) == PositionLabel::prone);
    bool flagged = false;
    CHECK(dsp::classify_gravity(0.1, 0.1, 0.1, PositionLabel::right, &flagged) == PositionLabel::right);
    CHECK(flagged);

    TimeSeries x = constant(0.0, 100, 9000), y = constant(0.0, 100, 9000), z = constant(1.0, 100, 9000);
    for (std::size_t i = 3000; i < 6000; ++i) {
      x.samples[i] = 0.05;
      z.samples[i] = 0.05;
    }
    for (std::size_t i = 6000; i < 9000; ++i) {
      x.samples[i] = -0.95;
      z.samples[i] = 0.2;
    }
    const auto track = dsp::position(triaxial(x, y, z));
    REQUIRE(track.labels.size() == 3);
    CHECK(track.labels[0] == PositionLabel::supine);
    CHECK(track.labels[1] == PositionLabel::supine);
    CHECK(track.flagged[1]);
    CHECK(track.labels[2] == PositionLabel::right);
    const TimeSeries codes = track.as_series();
    CHECK(codes.rate_hz == doctest::Approx(1.0 / 30.0));
    CHECK(codes.samples[2] == 1.0);
    CHECK_THROWS_AS(dsp::position(triaxial(constant(0, 100, 100), constant(0, 100, 100), constant(1, 100, 100))),
                    InputError);
  }

  TEST_CASE("respiratory envelope") {
    const double a = 0.02;
    const TimeSeries env = dsp::resp_envelope(triaxial(constant(0, 100, 18000), constant(0, 100, 18000),
                                                       sine(0.25, a, 100, 180)));
    CHECK(env.rate_hz == 3.2);
    CHECK(env.size() == 576);
    for (std::size_t k = 0; k < env.size(); ++k) {
      const double t = k / 3.2;
      if (t < 30 || t > 170) continue;
      CHECK(std::abs(env.samples[k] - a / std::sqrt(2.0)) <= 0.05 * a / std::sqrt(2.0));
    }

    const TimeSeries zero = dsp::resp_envelope(triaxial(constant(0, 100, 6000), constant(0, 100, 6000), constant(0, 100, 6000)));
    for (double v : zero.samples) CHECK(v == 0.0);

    TimeSeries dip = sine(0.25, a, 100, 240);
    for (std::size_t i = 10000; i < 12000; ++i) dip.samples[i] *= 0.5;
    const TimeSeries denv = dsp::resp_envelope(triaxial(constant(0, 100, 24000), constant(0, 100, 24000), dip));
    // Centre of the 20 s span, where the 10 s window sits fully inside it.
    const double nominal = a / std::sqrt(2.0);
    for (double t = 105.0; t <= 115.0; t += 0.3125) {
      const auto k = static_cast<std::size_t>(std::llround(t * 3.2));
      CHECK(std::abs(denv.samples[k] / nominal - 0.5) <= 0.1);
    }

    TimeSeries ny = sine(0.25, -0.3 * a, 100, 240, 1.0);
    TimeSeries py = sine(0.25, 0.3 * a, 100, 240, 1.0);
    const TimeSeries pos = dsp::resp_envelope(triaxial(constant(0, 100, 24000), py, dip));
    TimeSeries ndip = dip;
    for (double& v : ndip.samples) v = -v;
    const TimeSeries neg = dsp::resp_envelope(triaxial(constant(0, 100, 24000), ny, ndip));
    REQUIRE(pos.size() == neg.size());
    for (std::size_t k = 0; k < pos.size(); ++k) CHECK(pos.samples[k] == doctest::Approx(neg.samples[k]).epsilon(1e-12));

    CHECK_THROWS_AS(dsp::resp_envelope(triaxial(constant(0, 100, 5999), constant(0, 100, 5999), constant(0, 100, 5999))),
                    InputError);
  }

  TEST_CASE("breathing and snore probabilities") {
    const auto tone = dsp::bandpass(sine(0.25, 0.02, 100, 300), 0.1, 1.0);
    const auto p = dsp::derive_probabilities(tone, nullptr);
    CHECK(p.snore_missing);
    CHECK(p.breathing.rate_hz == 3.2);
    for (std::size_t k = 0; k < p.breathing.size(); ++k) {
      if (k / 3.2 < 20.0) continue;
      CHECK(p.breathing.samples[k] >= 0.9);
    }
    for (double v : p.snore.samples) CHECK(v == 0.0);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> d(0.0, 0.01);
    TimeSeries white = constant(0.0, 100, 30000);
    for (double& v : white.samples) v = d(rng);
    const auto w = dsp::derive_probabilities(white, nullptr);
    double mean = 0.0;
    for (double v : w.breathing.samples) {
      CHECK(v <= 0.5);
      mean += v;
    }
    CHECK(mean / w.breathing.size() <= 0.5);

    const TimeSeries silent = constant(0.0, 8000, 8000 * 300);
    const auto s = dsp::derive_probabilities(tone, &silent);
    CHECK_FALSE(s.snore_missing);
    for (double v : s.snore.samples) CHECK(v == 0.0);
    CHECK(on_grid(s.breathing, dsp::kProbabilityResolution));
    for (double v : s.breathing.samples) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("derived channels sit on their resolution grids") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d(0.0, 0.002);
    const std::size_t n = 100 * 150;
    TimeSeries x = constant(0.0, 100, n), y = constant(0.0, 100, n), z = sine(0.25, 0.02, 100, 150);
    for (std::size_t i = 0; i < n; ++i) {
      x.samples[i] += d(rng);
      y.samples[i] += d(rng);
      z.samples[i] += 1.0 + d(rng);
    }
    Recording r;
    r.put_triaxial("accel", triaxial(quantize(x, 4e-5), quantize(y, 4e-5), quantize(z, 4e-5)));
    r.channels["audio"] = sine(150.0, 0.1, 8000, 150);
    const Recording out = dsp::derive_channels(r);
    for (const char* axis : {"accel_bp.x", "accel_bp.y", "accel_bp.z"}) {
      CHECK(out.at(axis).resolution == dsp::kAccelResolution);
      CHECK(on_grid(out.at(axis), dsp::kAccelResolution));
    }
    CHECK(on_grid(out.at("activity"), dsp::kActivityResolution));
    CHECK(out.at("activity").resolution == dsp::kActivityResolution);
    CHECK(on_grid(out.at("audio_power"), dsp::kAudioPowerResolution));
    CHECK(out.at("audio_power").rate_hz == 40.0);
    CHECK(on_grid(out.at("breathing_prob"), dsp::kProbabilityResolution));
    CHECK(on_grid(out.at("snore_prob"), dsp::kProbabilityResolution));
    CHECK(out.at("snore_prob").samples.size() == out.at("resp_env").samples.size());
    CHECK(out.has("position"));
    CHECK(out.has("effort_env"));

    const Recording again = dsp::derive_channels(r);
    for (const auto& [name, ts] : out.channels) CHECK(again.at(name).samples == ts.samples);

    dsp::DeriveOptions lean;
    lean.probabilities = false;
    lean.filtered_accel = false;
    const Recording small = dsp::derive_channels(r, lean);
    CHECK_FALSE(small.has("breathing_prob"));
    CHECK_FALSE(small.has("accel_bp.x"));
  }
}
