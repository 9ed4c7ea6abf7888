#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "edf_fixture.hpp"
#include "somno/cli.hpp"
#include "somno/ingest.hpp"
#include "somno/report.hpp"
#include "test_util.hpp"

using namespace somno;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

cli::CommandOutcome run(std::vector<std::string> args) { return cli::run(args); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("argument errors") {
    CHECK(run({}).exit_code == 1);
    CHECK(run({"frobnicate"}).exit_code == 1);
    CHECK(run({"ahi", "x", "--source", "psg", "--bogus"}).exit_code == 1);
    CHECK(run({"--help"}).exit_code == 0);
    testutil::TempDir tmp("cli_args");
    auto r = run({"synth", "--out", tmp.path().string()});
    CHECK(r.exit_code == 1);
    CHECK(r.log.find("--seed") != std::string::npos);
    r = run({"eval", (tmp.path() / "cohort.json").string()});
    CHECK(r.exit_code == 1);
    CHECK(run({"ahi", (tmp.path() / "nope").string(), "--source", "psg"}).exit_code == 1);
    spit(tmp.path() / "bad.cfg", "patients = 2\nflavour = mint\n");
    CHECK(run({"synth", "--out", tmp.path().string(), "--seed", "1", "--config", (tmp.path() / "bad.cfg").string()})
              .exit_code == 1);
  }

  TEST_CASE("synth, eval and report on a perfect cohort") {
    testutil::TempDir tmp("cli_eval");
    const fs::path cfg = tmp.path() / "synth.cfg";
    spit(cfg, "patients = 6\nduration_h = 4\nsampler = uniform\nahi_lo = 2\nahi_hi = 50\n");
    auto s = run({"synth", "--out", (tmp.path() / "cohort").string(), "--seed", "5", "--config", cfg.string()});
    REQUIRE_MESSAGE(s.exit_code == 0, s.log);
    CHECK(fs::exists(tmp.path() / "cohort" / "cohort.json"));
    CHECK(fs::exists(tmp.path() / "cohort" / "P000" / "annotations" / "truth.json"));

    const fs::path ecfg = tmp.path() / "eval.cfg";
    spit(ecfg, "n_resamples = 200\n");
    auto e = run({"eval", (tmp.path() / "cohort" / "cohort.json").string(), "--out", (tmp.path() / "out").string(),
                  "--seed", "3", "--config", ecfg.string()});
    REQUIRE_MESSAGE(e.exit_code == 0, e.log);
    const auto j = nlohmann::json::parse(slurp(tmp.path() / "out" / "eval_report.json"));
    const auto rep = report::read_json(tmp.path() / "out" / "eval_report.json");
    for (const auto& t : rep.thresholds) {
      if (t.metrics.sensitivity) CHECK(*t.metrics.sensitivity == 1.0);
    }
    CHECK(j.contains("schema_version"));
    for (const char* f : {"regression.csv", "bland_altman.csv", "roc.csv", "pr.csv", "confusion.csv"})
      CHECK(fs::exists(tmp.path() / "out" / f));

    auto again = run({"eval", (tmp.path() / "cohort" / "cohort.json").string(), "--out",
                      (tmp.path() / "out2").string(), "--seed", "3", "--config", ecfg.string()});
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(tmp.path() / "out" / "eval_report.json") == slurp(tmp.path() / "out2" / "eval_report.json"));

    auto rr = run({"report", (tmp.path() / "out" / "eval_report.json").string(), "--out", (tmp.path() / "txt").string()});
    REQUIRE(rr.exit_code == 0);
    CHECK(rr.output.find("AHI ≥ 15") != std::string::npos);
    CHECK(rr.output.find("PPV for segmentation") != std::string::npos);
    CHECK(rr.output.find("Sensitivity for segmentation") != std::string::npos);
    CHECK(slurp(tmp.path() / "txt" / "report.txt") == rr.output);

    auto a = run({"ahi", (tmp.path() / "cohort" / "P000").string(), "--source", "truth"});
    CHECK(a.exit_code == 0);
    CHECK(a.output.find("AHI") != std::string::npos);
  }

  TEST_CASE("empty cohort manifest") {
    testutil::TempDir tmp("cli_empty");
    spit(tmp.path() / "cohort.json", "[]");
    auto r = run({"eval", (tmp.path() / "cohort.json").string(), "--seed", "1", "--out", tmp.path().string()});
    CHECK(r.exit_code == 2);
    CHECK(r.log.find("empty cohort") != std::string::npos);
  }

  TEST_CASE("infeasible synth profile") {
    testutil::TempDir tmp("cli_infeasible");
    spit(tmp.path() / "s.cfg", "duration_h = 2\ntarget_ahi = 80\n");
    auto r = run({"synth", "--out", tmp.path().string(), "--seed", "1", "--config", (tmp.path() / "s.cfg").string()});
    CHECK(r.exit_code == 2);
    CHECK(r.log.find("maximum feasible AHI") != std::string::npos);
  }

  TEST_CASE("derive and detect on a written bundle") {
    testutil::TempDir tmp("cli_detect");
    spit(tmp.path() / "s.cfg",
         "duration_h = 1\ntarget_ahi = 20\nnoise_g = 0.001\nwrite_signals = true\nrandom_wake_bouts = false\n");
    auto s = run({"synth", "--out", tmp.path().string(), "--seed", "2", "--config", (tmp.path() / "s.cfg").string()});
    REQUIRE_MESSAGE(s.exit_code == 0, s.log);
    const fs::path patient = tmp.path() / "P000";
    REQUIRE(fs::exists(patient / "manifest.json"));

    auto d = run({"derive", patient.string()});
    REQUIRE_MESSAGE(d.exit_code == 0, d.log);
    const PatientRecord r = read_bundle(patient / "manifest.json");
    CHECK(r.recording->has("activity"));
    CHECK(r.recording->has("resp_env"));
    CHECK(r.recording->has("position"));

    auto det = run({"detect", patient.string()});
    REQUIRE_MESSAGE(det.exit_code == 0, det.log);
    CHECK(fs::exists(patient / "annotations" / "automatic-v0.json"));
    CHECK(fs::exists(patient / "hypnograms" / "automatic-v0.json"));
    CHECK(read_annotations(patient / "annotations" / "automatic-v0.json").source == "automatic-v0");
    auto a = run({"ahi", patient.string(), "--source", "automatic-v0"});
    CHECK(a.exit_code == 0);

    spit(tmp.path() / "bad.cfg", "apnea_drop = 0.1\n");
    CHECK(run({"detect", patient.string(), "--config", (tmp.path() / "bad.cfg").string()}).exit_code == 1);
  }

  TEST_CASE("convert an EDF file") {
    testutil::TempDir tmp("cli_convert");
    std::vector<fixture::EdfSignal> sigs(2);
    sigs[0].label = "Thorax Belt";
    sigs[0].digital = {0, 1, 2, 3, 4, 5, 6, 7};
    sigs[1].label = "SpO2";
    sigs[1].dimension = "%";
    sigs[1].samples_per_record = 1;
    sigs[1].digital = {100, 200};
    fixture::write(tmp.path() / "psg.edf", fixture::edf_bytes(sigs, 2, 1.0));
    auto r = run({"convert", (tmp.path() / "psg.edf").string(), "--out", (tmp.path() / "b").string()});
    REQUIRE_MESSAGE(r.exit_code == 0, r.log);
    const PatientRecord rec = read_bundle(tmp.path() / "b" / "manifest.json");
    CHECK(rec.recording->has("thorax.belt"));
    CHECK(rec.recording->has("spo2"));
    CHECK(rec.recording->at("thorax.belt").rate_hz == 4.0);

    spit(tmp.path() / "c.cfg", "patient_id = night-7\nchannel.SpO2 = oxygen\n");
    r = run({"convert", (tmp.path() / "psg.edf").string(), "--out", (tmp.path() / "c").string(), "--config",
             (tmp.path() / "c.cfg").string()});
    REQUIRE(r.exit_code == 0);
    const PatientRecord named = read_bundle(tmp.path() / "c" / "manifest.json");
    CHECK(named.id == "night-7");
    CHECK(named.recording->has("oxygen"));

    fixture::write(tmp.path() / "short.edf", fixture::edf_bytes(sigs, 2, 1.0).substr(0, 300));
    CHECK(run({"convert", (tmp.path() / "short.edf").string(), "--out", (tmp.path() / "d").string()}).exit_code == 1);
  }
}
