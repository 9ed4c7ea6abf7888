#include <doctest.h>

#include "edf_fixture.hpp"
#include "somno/edf.hpp"
#include "somno/errors.hpp"
#include "test_util.hpp"

using namespace somno;

namespace {

std::vector<fixture::EdfSignal> two_signals() {
  fixture::EdfSignal a;
  a.label = "Accel X";
  a.digital = {0, -32768, 32767, 100, 1, 2, 3, 4};
  fixture::EdfSignal b;
  b.label = "Flow";
  b.dimension = "uV";
  b.phys_min = -500;
  b.phys_max = 500;
  b.dig_min = -2048;
  b.dig_max = 2047;
  b.samples_per_record = 2;
  b.digital = {-2048, 2047, 0, 0};
  return {a, b};
}

}  // namespace

TEST_SUITE("edf") {
  TEST_CASE("header fields") {
    testutil::TempDir tmp("edf");
    fixture::write(tmp.path() / "a.edf", fixture::edf_bytes(two_signals(), 2, 0.04));
    const EdfHeader h = read_edf_header(tmp.path() / "a.edf");
    CHECK(h.version == "0");
    CHECK(h.patient_info == "P-017 M 01-JAN-1970 Test");
    CHECK(h.recording_info == "Startdate 01-JAN-2024 fixture");
    CHECK(h.start_date == "01.01.24");
    CHECK(h.start_time == "22.30.00");
    CHECK(h.header_bytes == 768);
    CHECK(h.n_records == 2);
    CHECK(h.record_duration_s == 0.04);
    CHECK(h.n_signals == 2);
    REQUIRE(h.signals.size() == 2);
    CHECK(h.signals[0].label == "Accel X");
    CHECK(h.signals[0].transducer == "accelerometer");
    CHECK(h.signals[1].dimension == "uV");
    CHECK(h.signals[1].phys_min == -500.0);
    CHECK(h.signals[1].dig_max == 2047);
    CHECK(h.signals[0].prefiltering == "HP:0.1Hz");
    CHECK(h.signals[1].samples_per_record == 2);
    CHECK(h.signals[0].rate_hz(h.record_duration_s) == doctest::Approx(100.0));
    CHECK(h.record_bytes() == 12);
  }

  TEST_CASE("affine scaling") {
    testutil::TempDir tmp("edf_scale");
    fixture::write(tmp.path() / "a.edf", fixture::edf_bytes(two_signals(), 2, 0.04));
    const auto sig = read_edf(tmp.path() / "a.edf");
    REQUIRE(sig.count("Accel X") == 1);
    const TimeSeries& x = sig.at("Accel X");
    REQUIRE(x.size() == 8);
    CHECK(x.rate_hz == doctest::Approx(100.0));
    CHECK(x.units == "g");
    // 0 sits half a step above the centre of the 65535-wide digital range.
    CHECK(x.samples[0] == doctest::Approx(1.0 / 65535.0).epsilon(1e-12));
    CHECK(x.samples[0] == doctest::Approx(1.5259e-5).epsilon(1e-4));
    CHECK(x.samples[1] == -1.0);
    CHECK(x.samples[2] == 1.0);
    for (std::size_t i = 4; i + 1 < x.size(); ++i) CHECK(x.samples[i + 1] > x.samples[i]);
    const TimeSeries& f = sig.at("Flow");
    REQUIRE(f.size() == 4);
    CHECK(f.samples[0] == -500.0);
    CHECK(f.samples[1] == 500.0);
    CHECK(f.samples[2] == doctest::Approx(-500.0 + 2048.0 * 1000.0 / 4095.0));
    CHECK(f.rate_hz == doctest::Approx(50.0));

    const auto only = read_edf(tmp.path() / "a.edf", {"Flow"});
    CHECK(only.size() == 1);
    CHECK_THROWS_WITH_SUBSTR(read_edf(tmp.path() / "a.edf", {"SpO2"}), InputError, "not found");
  }

  TEST_CASE("malformed files") {
    testutil::TempDir tmp("edf_bad");
    const std::string good = fixture::edf_bytes(two_signals(), 2, 0.04);
    const auto p = tmp.path() / "bad.edf";

    fixture::write(p, good.substr(0, 100));
    CHECK_THROWS_WITH_SUBSTR(read_edf(p), InputError, "truncated EDF header");
    fixture::write(p, good.substr(0, 600));
    CHECK_THROWS_WITH_SUBSTR(read_edf(p), InputError, "truncated EDF header");
    fixture::write(p, good.substr(0, good.size() - 3));
    CHECK_THROWS_WITH_SUBSTR(read_edf(p), InputError, "truncated EDF data");
    fixture::write(p, "");
    CHECK_THROWS_AS(read_edf(p), InputError);
    CHECK_THROWS_AS(read_edf(tmp.path() / "absent.edf"), InputError);

    auto sigs = two_signals();
    sigs[0].dig_min = sigs[0].dig_max = 5;
    fixture::write(p, fixture::edf_bytes(sigs, 2, 0.04));
    CHECK_THROWS_WITH_SUBSTR(read_edf(p), InputError, "digital minimum equals digital maximum");

    std::string garbled = good;
    garbled.replace(236, 8, "two     ");
    fixture::write(p, garbled);
    CHECK_THROWS_WITH_SUBSTR(read_edf(p), InputError, "malformed EDF header field");

    std::string wrong_count = good;
    wrong_count.replace(184, 8, "512     ");
    fixture::write(p, wrong_count);
    CHECK_THROWS_AS(read_edf(p), InputError);
  }

  TEST_CASE("random bytes never crash") {
    testutil::TempDir tmp("edf_fuzz");
    const std::string good = fixture::edf_bytes(two_signals(), 2, 0.04);
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> pos(0, 767);
    std::uniform_int_distribution<int> byte(0, 255);
    const auto p = tmp.path() / "fuzz.edf";
    for (int trial = 0; trial < 300; ++trial) {
      std::string b = good;
      for (int k = 0; k < 4; ++k) b[pos(rng)] = static_cast<char>(byte(rng));
      fixture::write(p, b);
      try {
        (void)read_edf(p);
      } catch (const InputError&) {
      }
    }
  }
}
